//! Temperature-averaged fine structure of the orbitally averaged excited
//! state and the ODMR splitting it produces.

use nalgebra::{Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::units::UnitConstants;

/// Absolute temperature in kelvin.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Temperature(f64);

impl Temperature {
    pub const ZERO: Temperature = Temperature(0.0);

    pub fn new(kelvin: f64) -> Result<Self> {
        if !(kelvin.is_finite() && kelvin >= 0.0) {
            return Err(domain("temperature", format!("must be finite and >= 0 K, got {kelvin}")));
        }
        Ok(Self(kelvin))
    }

    pub fn kelvin(self) -> f64 {
        self.0
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0.0
    }

    /// `E / k_B T` for an energy in meV; infinite at `T = 0` for `E > 0`.
    pub fn thermal_ratio(self, units: &UnitConstants, energy_mev: f64) -> f64 {
        if energy_mev == 0.0 {
            0.0
        } else if self.is_zero() {
            f64::INFINITY
        } else {
            units.thermal_ratio(energy_mev, self.0)
        }
    }
}

/// Excited-state spin-spin and hyperfine constants plus the strain splitting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpinParams {
    /// Axial spin-spin constant, MHz.
    pub d_parallel: f64,
    /// Transverse spin-spin constant, MHz.
    pub d_perp: f64,
    /// Isotropic hyperfine constant, MHz.
    pub a_hyperfine: f64,
    /// Orbital strain splitting `h ξ⊥`, meV.
    pub xi_perp: f64,
}

impl Default for SpinParams {
    fn default() -> Self {
        Self {
            d_parallel: 1420.0,
            d_perp: 775.0,
            a_hyperfine: 40.0,
            xi_perp: 4.6,
        }
    }
}

impl SpinParams {
    pub fn new(d_parallel: f64, d_perp: f64, a_hyperfine: f64, xi_perp: f64) -> Result<Self> {
        let p = Self {
            d_parallel,
            d_perp,
            a_hyperfine,
            xi_perp,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("d_parallel", self.d_parallel),
            ("d_perp", self.d_perp),
            ("a_hyperfine", self.a_hyperfine),
            ("xi_perp", self.xi_perp),
        ] {
            if !v.is_finite() {
                return Err(domain(field, format!("must be finite, got {v}")));
            }
        }
        if self.d_perp <= 0.0 {
            return Err(domain("d_perp", format!("must be > 0, got {}", self.d_perp)));
        }
        if self.a_hyperfine < 0.0 {
            return Err(domain("a_hyperfine", format!("must be >= 0, got {}", self.a_hyperfine)));
        }
        check_xi(self.xi_perp)?;
        if self.d_parallel <= self.d_perp {
            return Err(domain(
                "d_parallel",
                format!("must exceed d_perp ({}), got {}", self.d_perp, self.d_parallel),
            ));
        }
        Ok(())
    }

    /// Copy with the strain splitting set to zero.
    pub fn with_xi_perp(self, xi_perp: f64) -> Self {
        Self { xi_perp, ..self }
    }
}

fn check_xi(xi_perp: f64) -> Result<()> {
    if xi_perp < 0.0 || !xi_perp.is_finite() {
        return Err(domain("xi_perp", format!("must be finite and >= 0, got {xi_perp}")));
    }
    Ok(())
}

/// Temperature reduction factor `R = (eˣ−1)/(eˣ+1) = tanh(x/2)`, `x = hξ⊥/k_BT`.
///
/// `R = 1` at `T = 0` when `ξ⊥ > 0`; `R = 0` at every temperature when `ξ⊥ = 0`.
pub fn reduction_factor(units: &UnitConstants, t: Temperature, p: &SpinParams) -> Result<f64> {
    check_xi(p.xi_perp)?;
    let x = t.thermal_ratio(units, p.xi_perp);
    if x.is_infinite() {
        return Ok(1.0);
    }
    Ok((0.5 * x).tanh())
}

/// Asymmetry factor `β = 8u/(1+u)³`, `u = e^{−hξ⊥/k_BT}`; `β ≤ 32/27`.
pub fn beta_factor(units: &UnitConstants, t: Temperature, p: &SpinParams) -> Result<f64> {
    check_xi(p.xi_perp)?;
    let x = t.thermal_ratio(units, p.xi_perp);
    if x.is_infinite() {
        return Ok(0.0);
    }
    Ok(beta_from_boltzmann((-x).exp()))
}

pub(crate) fn beta_from_boltzmann(u: f64) -> f64 {
    8.0 * u / (1.0 + u).powi(3)
}

/// Eigenstructure of the averaged spin Hamiltonian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FineStructure {
    /// Level energies in MHz, ascending.
    pub levels: [f64; 3],
    /// Index into `levels` of the state with the largest `m_s = 0` weight.
    pub zero_like: usize,
    /// Transition frequencies from the `m_s = 0`-like level, MHz, descending.
    pub transitions: [f64; 2],
}

/// Spin-1 matrix `D∥(S_z² − 2/3) − D⊥ r (S_x² − S_y²)` in the basis
/// `(+1, 0, −1)`.
pub fn spin_hamiltonian(r: f64, p: &SpinParams) -> Matrix3<f64> {
    let dz = p.d_parallel;
    let dt = p.d_perp * r;
    // S_x² − S_y² = (S₊² + S₋²)/2 couples +1 and −1 with unit amplitude.
    #[rustfmt::skip]
    let h = Matrix3::new(
        dz / 3.0, 0.0, -dt,
        0.0, -2.0 * dz / 3.0, 0.0,
        -dt, 0.0, dz / 3.0,
    );
    h
}

/// Diagonalises [`spin_hamiltonian`] numerically.
pub fn fine_structure_levels(r: f64, p: &SpinParams) -> Result<FineStructure> {
    if !(0.0..=1.0).contains(&r) {
        return Err(domain("r", format!("reduction factor must lie in [0, 1], got {r}")));
    }
    let eig = SymmetricEigen::new(spin_hamiltonian(r, p));
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let levels = order.map(|i| eig.eigenvalues[i]);
    let zero_like = (0..3)
        .max_by(|&a, &b| {
            let wa = eig.eigenvectors[(1, order[a])].abs();
            let wb = eig.eigenvectors[(1, order[b])].abs();
            wa.total_cmp(&wb)
        })
        .unwrap_or(0);
    let mut transitions = [0.0; 2];
    let mut k = 0;
    for (i, &e) in levels.iter().enumerate() {
        if i != zero_like {
            transitions[k] = e - levels[zero_like];
            k += 1;
        }
    }
    transitions.sort_by(|a, b| b.total_cmp(a));
    Ok(FineStructure {
        levels,
        zero_like,
        transitions,
    })
}

/// Closed-form levels `{−2D∥/3, D∥/3 − D⊥r, D∥/3 + D⊥r}`, ascending.
pub fn fine_structure_closed_form(r: f64, p: &SpinParams) -> [f64; 3] {
    let mut l = [
        -2.0 * p.d_parallel / 3.0,
        p.d_parallel / 3.0 - p.d_perp * r,
        p.d_parallel / 3.0 + p.d_perp * r,
    ];
    l.sort_by(f64::total_cmp);
    l
}

/// Observed ODMR splitting in MHz, `(2/3)D⊥R + (4/3)√(A² + D⊥²R²)`.
pub fn odmr_splitting(units: &UnitConstants, t: Temperature, p: &SpinParams) -> Result<f64> {
    let r = reduction_factor(units, t, p)?;
    Ok(splitting_from_reduction(r, p))
}

pub(crate) fn splitting_from_reduction(r: f64, p: &SpinParams) -> f64 {
    let dr = p.d_perp * r;
    2.0 / 3.0 * dr + 4.0 / 3.0 * p.a_hyperfine.hypot(dr)
}

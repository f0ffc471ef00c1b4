//! Two-phonon Raman rate laws.
//!
//! * `W↓ = B_E T⁵ ∫_{x⊥}^{Ω_E/k_BT} x²eˣ(x−x⊥)² / [(eˣ−1)(e^{x−x⊥}−1)] dx`
//!   with `x⊥ = hξ⊥/k_BT`, and `W↑ = W↓ e^{−x⊥}` (detailed balance);
//! * `W_A = B_A T⁷ ∫_0^{Ω_A/k_BT} eˣx⁶/(eˣ−1)² dx`.
//!
//! Both integrands are written in terms of `p(y) = y/(e^y − 1)`, which is
//! replaced by its Taylor series for `|y| < 1e-3`, so the removable
//! singularities at `x = x⊥` and `x = 0` never produce `0/0`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::quadrature::{integrate, QuadratureResult, QuadratureSpec};
use crate::spin::{SpinParams, Temperature};
use crate::units::UnitConstants;

/// E-mode (Jahn-Teller) Raman coupling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EPhononParams {
    /// Hz·K⁻⁵
    pub b_e: f64,
    /// Cutoff energy, meV.
    pub omega_e: f64,
}

impl Default for EPhononParams {
    fn default() -> Self {
        Self {
            b_e: 1.32,
            omega_e: 13.0,
        }
    }
}

impl EPhononParams {
    pub fn validate(&self, units: &UnitConstants) -> Result<()> {
        validate_coupling("b_e", self.b_e, "omega_e", self.omega_e, units)
    }
}

/// A₁-mode quadratic coupling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct APhononParams {
    /// Hz·K⁻⁷
    pub b_a: f64,
    /// Cutoff energy, meV.
    pub omega_a: f64,
}

impl Default for APhononParams {
    fn default() -> Self {
        Self {
            b_a: 24e-6,
            omega_a: 37.0,
        }
    }
}

impl APhononParams {
    pub fn validate(&self, units: &UnitConstants) -> Result<()> {
        validate_coupling("b_a", self.b_a, "omega_a", self.omega_a, units)
    }
}

fn validate_coupling(
    b_name: &'static str,
    b: f64,
    omega_name: &'static str,
    omega: f64,
    units: &UnitConstants,
) -> Result<()> {
    if !(b.is_finite() && b > 0.0) {
        return Err(domain(b_name, format!("must be finite and > 0, got {b}")));
    }
    if !(omega > 0.0 && omega <= units.debye_energy_reference) {
        return Err(domain(
            omega_name,
            format!(
                "must lie in (0, {}] meV, got {omega}",
                units.debye_energy_reference
            ),
        ));
    }
    Ok(())
}

const SERIES_RADIUS: f64 = 1e-3;

/// `y / (e^y − 1)`, with the series `1 − y/2 + y²/12 − y⁴/720` near 0.
fn bose_p(y: f64) -> f64 {
    if y.abs() < SERIES_RADIUS {
        let y2 = y * y;
        1.0 - 0.5 * y + y2 / 12.0 - y2 * y2 / 720.0
    } else {
        y / y.exp_m1()
    }
}

/// `x eˣ / (eˣ − 1) = x + p(x)`.
fn bose_q(x: f64) -> f64 {
    x + bose_p(x)
}

fn e_integrand(x: f64, x_perp: f64) -> f64 {
    let y = x - x_perp;
    x * bose_q(x) * y * bose_p(y)
}

fn a_integrand(x: f64) -> f64 {
    let x2 = x * x;
    x2 * x2 * bose_p(x) * bose_q(x)
}

/// Upper limit used in place of an infinite (or larger) cutoff; the
/// integrands are below 1e-18 of their peak beyond it.
pub fn effective_upper_limit(x_perp: f64) -> f64 {
    50.0_f64.max(10.0 * x_perp + 50.0)
}

/// Width past the lower limit that always gets its own adaptive run, so that
/// a long, nearly empty tail cannot hide the peak from the first panel.
const PEAK_WINDOW: f64 = 60.0;

fn integrate_split<F: Fn(f64) -> f64>(
    f: F,
    lower: f64,
    upper: f64,
    spec: &QuadratureSpec,
) -> Result<QuadratureResult> {
    let split = lower + PEAK_WINDOW;
    if upper <= split {
        return integrate(f, lower, upper, spec);
    }
    let head = integrate(&f, lower, split, spec)?;
    let tail = integrate(&f, split, upper, spec)?;
    Ok(QuadratureResult {
        value: head.value + tail.value,
        error_estimate: head.error_estimate + tail.error_estimate,
        panels: head.panels + tail.panels,
    })
}

fn check_limits(x_perp: f64, x_max: f64) -> Result<()> {
    if !(x_perp >= 0.0 && x_perp.is_finite()) {
        return Err(domain("x_perp", format!("must be finite and >= 0, got {x_perp}")));
    }
    if x_max.is_nan() || x_max < x_perp {
        return Err(domain("x_max", format!("must be >= x_perp ({x_perp}), got {x_max}")));
    }
    Ok(())
}

/// E-mode Raman integral with its quadrature error estimate. `x_max` may be
/// `f64::INFINITY`.
pub fn bose_integral_e_detailed(x_perp: f64, x_max: f64, q: &QuadratureSpec) -> Result<QuadratureResult> {
    check_limits(x_perp, x_max)?;
    let upper = x_max.min(effective_upper_limit(x_perp));
    integrate_split(|x| e_integrand(x, x_perp), x_perp, upper, q)
}

pub fn bose_integral_e(x_perp: f64, x_max: f64, q: &QuadratureSpec) -> Result<f64> {
    Ok(bose_integral_e_detailed(x_perp, x_max, q)?.value)
}

/// `∫_0^{x_max} eˣx⁶/(eˣ−1)² dx` with its error estimate.
pub fn bose_integral_a_detailed(x_max: f64, q: &QuadratureSpec) -> Result<QuadratureResult> {
    check_limits(0.0, x_max)?;
    let upper = x_max.min(effective_upper_limit(0.0));
    integrate_split(a_integrand, 0.0, upper, q)
}

pub fn bose_integral_a(x_max: f64, q: &QuadratureSpec) -> Result<f64> {
    Ok(bose_integral_a_detailed(x_max, q)?.value)
}

/// Down-transfer rate `W↓` in Hz; zero at `T = 0`.
pub fn w_down(
    units: &UnitConstants,
    t: Temperature,
    e: &EPhononParams,
    p: &SpinParams,
    q: &QuadratureSpec,
) -> Result<f64> {
    RateEvaluator::new(*units, *q).w_down(t, e, p)
}

/// Up-transfer rate `W↑ = W↓ e^{−hξ⊥/k_BT}` in Hz.
pub fn w_up(
    units: &UnitConstants,
    t: Temperature,
    e: &EPhononParams,
    p: &SpinParams,
    q: &QuadratureSpec,
) -> Result<f64> {
    RateEvaluator::new(*units, *q).w_up(t, e, p)
}

/// A₁ pure-dephasing rate `W_A` in Hz; zero at `T = 0`.
pub fn w_a(units: &UnitConstants, t: Temperature, a: &APhononParams, q: &QuadratureSpec) -> Result<f64> {
    RateEvaluator::new(*units, *q).w_a(t, a)
}

/// High-temperature coefficient `Q` (Hz·K⁻²) such that `W↓ → QT²` when
/// `x⊥, Ω_E/k_BT ≪ 1`:
/// `Q = (B_E/3)(Ω_E/k_B)³(1 − hξ⊥/Ω_E)²(1 + hξ⊥/2Ω_E)`.
pub fn q_constant(units: &UnitConstants, e: &EPhononParams, p: &SpinParams) -> Result<f64> {
    if p.xi_perp < 0.0 {
        return Err(domain("xi_perp", format!("must be >= 0, got {}", p.xi_perp)));
    }
    if p.xi_perp >= e.omega_e {
        return Err(domain(
            "xi_perp",
            format!("strain splitting {} meV must be below the cutoff {} meV", p.xi_perp, e.omega_e),
        ));
    }
    let s = p.xi_perp / e.omega_e;
    let theta = units.energy_mev_to_kelvin(e.omega_e);
    Ok(e.b_e / 3.0 * theta.powi(3) * (1.0 - s).powi(2) * (1.0 + 0.5 * s))
}

/// Spectral-density coefficient `η_E` from `B_E = (64/π) ℏ η_E² k_B⁵`, with
/// `ℏ` in J·s and `k_B` in J/K, so `η_E` is in J⁻³·s⁻¹.
pub fn eta_e_from_b_e(units: &UnitConstants, e: &EPhononParams) -> Result<f64> {
    if !(e.b_e > 0.0 && e.b_e.is_finite()) {
        return Err(domain("b_e", format!("must be finite and > 0, got {}", e.b_e)));
    }
    Ok((PI * e.b_e / (64.0 * units.hbar_si() * units.k_boltzmann_si().powi(5))).sqrt())
}

/// Inverse of [`eta_e_from_b_e`].
pub fn b_e_from_eta_e(units: &UnitConstants, eta_e: f64) -> f64 {
    64.0 / PI * units.hbar_si() * eta_e * eta_e * units.k_boltzmann_si().powi(5)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum MemoKey {
    E(u64, u64),
    A(u64),
}

/// Rate evaluation with fixed constants and quadrature settings, optionally
/// memoising the dimensionless integrals on exact `(x⊥, x_max)` matches.
///
/// The memo is behind a mutex and can be shared across threads.
#[derive(Debug, Default)]
pub struct RateEvaluator {
    pub units: UnitConstants,
    pub quadrature: QuadratureSpec,
    memo: Option<Mutex<HashMap<MemoKey, f64>>>,
}

impl Clone for RateEvaluator {
    fn clone(&self) -> Self {
        Self {
            units: self.units,
            quadrature: self.quadrature,
            memo: self.memo.as_ref().map(|_| Mutex::new(HashMap::new())),
        }
    }
}

impl RateEvaluator {
    pub fn new(units: UnitConstants, quadrature: QuadratureSpec) -> Self {
        Self {
            units,
            quadrature,
            memo: None,
        }
    }

    pub fn with_memo(mut self) -> Self {
        self.memo = Some(Mutex::new(HashMap::new()));
        self
    }

    pub fn memo_len(&self) -> usize {
        self.memo
            .as_ref()
            .map_or(0, |m| m.lock().map(|m| m.len()).unwrap_or(0))
    }

    fn cached(&self, key: MemoKey, compute: impl FnOnce() -> Result<f64>) -> Result<f64> {
        let Some(memo) = &self.memo else {
            return compute();
        };
        if let Some(v) = memo.lock().ok().and_then(|m| m.get(&key).copied()) {
            return Ok(v);
        }
        let v = compute()?;
        if let Ok(mut m) = memo.lock() {
            m.insert(key, v);
        }
        Ok(v)
    }

    pub fn integral_e(&self, x_perp: f64, x_max: f64) -> Result<f64> {
        self.cached(MemoKey::E(x_perp.to_bits(), x_max.to_bits()), || {
            bose_integral_e(x_perp, x_max, &self.quadrature)
        })
    }

    pub fn integral_a(&self, x_max: f64) -> Result<f64> {
        self.cached(MemoKey::A(x_max.to_bits()), || bose_integral_a(x_max, &self.quadrature))
    }

    /// `W↓` in Hz. `B_E = 0` is accepted and gives zero.
    pub fn w_down(&self, t: Temperature, e: &EPhononParams, p: &SpinParams) -> Result<f64> {
        if !(e.b_e >= 0.0) {
            return Err(domain("b_e", format!("must be >= 0, got {}", e.b_e)));
        }
        if !(e.omega_e > 0.0) {
            return Err(domain("omega_e", format!("must be > 0, got {}", e.omega_e)));
        }
        if p.xi_perp < 0.0 {
            return Err(domain("xi_perp", format!("must be >= 0, got {}", p.xi_perp)));
        }
        if t.is_zero() || e.b_e == 0.0 {
            return Ok(0.0);
        }
        let kelvin = t.kelvin();
        let x_perp = self.units.thermal_ratio(p.xi_perp, kelvin);
        let x_max = self.units.thermal_ratio(e.omega_e, kelvin);
        if x_max <= x_perp {
            return Ok(0.0);
        }
        Ok(e.b_e * kelvin.powi(5) * self.integral_e(x_perp, x_max)?)
    }

    pub fn w_up(&self, t: Temperature, e: &EPhononParams, p: &SpinParams) -> Result<f64> {
        let down = self.w_down(t, e, p)?;
        if down == 0.0 {
            return Ok(0.0);
        }
        Ok(down * (-self.units.thermal_ratio(p.xi_perp, t.kelvin())).exp())
    }

    /// `W_A` in Hz. `B_A = 0` is accepted and gives zero.
    pub fn w_a(&self, t: Temperature, a: &APhononParams) -> Result<f64> {
        if !(a.b_a >= 0.0) {
            return Err(domain("b_a", format!("must be >= 0, got {}", a.b_a)));
        }
        if !(a.omega_a > 0.0) {
            return Err(domain("omega_a", format!("must be > 0, got {}", a.omega_a)));
        }
        if t.is_zero() || a.b_a == 0.0 {
            return Ok(0.0);
        }
        let kelvin = t.kelvin();
        let x_max = self.units.thermal_ratio(a.omega_a, kelvin);
        Ok(a.b_a * kelvin.powi(7) * self.integral_a(x_max)?)
    }
}

//! Physical constants and the unit bridges used throughout the crate.
//!
//! Energies are carried in meV, temperatures in K and frequencies in Hz (or
//! MHz for spectroscopic quantities). Every conversion between them goes
//! through a [`UnitConstants`] value so that overriding a constant changes
//! all derived quantities consistently.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Planck constant, eV·s (CODATA 2018, exact).
pub const PLANCK_EV_S: f64 = 4.135667696e-15;
/// Boltzmann constant, eV/K (CODATA 2018, exact).
pub const BOLTZMANN_EV_PER_K: f64 = 8.617333262e-5;
/// Elementary charge, J/eV (exact).
pub const ELEMENTARY_CHARGE_J_PER_EV: f64 = 1.602176634e-19;
/// Debye energy of diamond, meV.
pub const DIAMOND_DEBYE_ENERGY_MEV: f64 = 168.0;

const MEV_TO_EV: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UnitConstants {
    /// eV·s
    pub h_planck: f64,
    /// eV/K
    pub k_boltzmann: f64,
    /// meV; upper bound for phonon cutoffs.
    pub debye_energy_reference: f64,
}

impl Default for UnitConstants {
    fn default() -> Self {
        Self::CODATA
    }
}

impl UnitConstants {
    pub const CODATA: UnitConstants = UnitConstants {
        h_planck: PLANCK_EV_S,
        k_boltzmann: BOLTZMANN_EV_PER_K,
        debye_energy_reference: DIAMOND_DEBYE_ENERGY_MEV,
    };

    pub fn new(h_planck: f64, k_boltzmann: f64, debye_energy_reference: f64) -> Result<Self> {
        let c = Self {
            h_planck,
            k_boltzmann,
            debye_energy_reference,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("h_planck", self.h_planck),
            ("k_boltzmann", self.k_boltzmann),
            ("debye_energy_reference", self.debye_energy_reference),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(domain(field, format!("must be finite and > 0, got {v}")));
            }
        }
        Ok(())
    }

    /// `E / h` for an energy given in meV.
    pub fn energy_mev_to_frequency_hz(&self, energy_mev: f64) -> f64 {
        energy_mev * MEV_TO_EV / self.h_planck
    }

    pub fn frequency_hz_to_energy_mev(&self, frequency_hz: f64) -> f64 {
        frequency_hz * self.h_planck / MEV_TO_EV
    }

    /// Temperature equivalent `E / k_B` of an energy in meV, in K.
    pub fn energy_mev_to_kelvin(&self, energy_mev: f64) -> f64 {
        energy_mev * MEV_TO_EV / self.k_boltzmann
    }

    /// Dimensionless `E / k_B T`. The caller guarantees `kelvin > 0`.
    pub fn thermal_ratio(&self, energy_mev: f64, kelvin: f64) -> f64 {
        self.energy_mev_to_kelvin(energy_mev) / kelvin
    }

    /// Reduced Planck constant in J·s.
    pub fn hbar_si(&self) -> f64 {
        self.h_planck * ELEMENTARY_CHARGE_J_PER_EV / (2.0 * std::f64::consts::PI)
    }

    /// Boltzmann constant in J/K.
    pub fn k_boltzmann_si(&self) -> f64 {
        self.k_boltzmann * ELEMENTARY_CHARGE_J_PER_EV
    }
}

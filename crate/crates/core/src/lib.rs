//! Quantitative model of electron-phonon processes in the negatively charged
//! nitrogen-vacancy center.
//!
//! The crate is organised bottom-up:
//!
//! * [`units`] and [`spin`]: physical constants, the temperature-averaged
//!   excited-state fine structure and the observed ODMR splitting.
//! * [`quadrature`] and [`rates`]: Bose-weighted Raman integrals and the
//!   resulting population-transfer (`W↓`, `W↑`) and pure-dephasing (`W_A`)
//!   rates.
//! * [`observables`]: forward models for ODMR linewidth, contrast and
//!   spectra, the ZPL width and ZPL polarization visibility.
//! * [`stochastic`]: an event-driven telegraph-noise Monte Carlo used as an
//!   independent check of the fast-exchange motional-narrowing width.
//! * [`fitting`]: Levenberg-Marquardt with shared parameters across
//!   heterogeneous data series.
//!
//! Frequencies of spectroscopic quantities are in MHz, phonon rates are in
//! Hz, energies in meV and temperatures in K. Rates are ordinary (not
//! angular) frequencies; factors of 2π appear only where the physics puts
//! them.

pub mod error;
pub mod fitting;
pub mod observables;
pub mod quadrature;
pub mod rates;
pub mod spin;
pub mod stochastic;
pub mod units;

pub use error::{Error, Result};
pub use observables::{
    gamma_infinity, gamma_one, odmr_contrast, odmr_linewidth, odmr_spectrum, visibility,
    zpl_width, Baseline, GammaInfinity, GammaMnMode, MotionalNarrowing, OdmrModel,
    OdmrModelParams, OpticalRates, VisibilityParams, WDownModel,
};
pub use quadrature::{QuadratureResult, QuadratureSpec};
pub use rates::{
    bose_integral_a, bose_integral_e, eta_e_from_b_e, q_constant, w_a, w_down, w_up,
    APhononParams, EPhononParams,
};
pub use spin::{
    beta_factor, fine_structure_levels, odmr_splitting, reduction_factor, FineStructure,
    SpinParams, Temperature,
};
pub use units::UnitConstants;

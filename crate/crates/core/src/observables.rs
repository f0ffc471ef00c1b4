//! Forward models for the measured quantities: ODMR linewidth, contrast and
//! spectrum, the ZPL width and the ZPL polarization visibility.
//!
//! Spectroscopic outputs are in MHz. Phonon rates are converted from Hz at
//! the point where they enter an MHz expression.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::rates::{q_constant, APhononParams, EPhononParams, RateEvaluator};
use crate::spin::{beta_factor, odmr_splitting, SpinParams, Temperature};
use crate::units::UnitConstants;

const HZ_PER_MHZ: f64 = 1e6;

/// Optical decay and intersystem-crossing rates of the excited state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OpticalRates {
    /// Radiative rate, MHz.
    pub k_rad: f64,
    /// Average intersystem-crossing rate, MHz.
    pub k_isc: f64,
    /// Temperature-independent ZPL width, MHz.
    pub gamma0: f64,
}

impl Default for OpticalRates {
    fn default() -> Self {
        Self {
            k_rad: 20.0,
            k_isc: 50.0,
            gamma0: 16.2,
        }
    }
}

impl OpticalRates {
    pub fn validate(&self) -> Result<()> {
        for (field, v) in [("k_rad", self.k_rad), ("k_isc", self.k_isc), ("gamma0", self.gamma0)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(domain(field, format!("must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Orbital-decay broadening `Γ∞ = (k + k_ISC/2)/π`, MHz.
pub fn gamma_infinity(o: &OpticalRates) -> f64 {
    (o.k_rad + 0.5 * o.k_isc) / PI
}

/// Effective spin relaxation `γ₁ = k·k_ISC/(k + k_ISC/2)`, MHz.
pub fn gamma_one(o: &OpticalRates) -> Result<f64> {
    let denom = o.k_rad + 0.5 * o.k_isc;
    if !(denom > 0.0) {
        return Err(domain("k_rad", "k_rad + k_isc/2 must be > 0"));
    }
    Ok(o.k_rad * o.k_isc / denom)
}

/// Source of the temperature-independent-by-default `Γ∞`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GammaInfinity {
    /// `(k + k_ISC/2)/π` from [`OpticalRates`].
    #[default]
    FromRates,
    /// User table of `(T [K], Γ∞ [MHz])`, strictly increasing in `T`, linearly
    /// interpolated and held constant outside its range.
    Table(Vec<(f64, f64)>),
}

impl GammaInfinity {
    pub fn at(&self, t: Temperature, o: &OpticalRates) -> Result<f64> {
        match self {
            GammaInfinity::FromRates => Ok(gamma_infinity(o)),
            GammaInfinity::Table(rows) => interpolate(rows, t.kelvin()),
        }
    }
}

fn interpolate(rows: &[(f64, f64)], x: f64) -> Result<f64> {
    let (first, last) = match (rows.first(), rows.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(domain("gamma_infinity", "table is empty")),
    };
    if rows.windows(2).any(|w| !(w[1].0 > w[0].0)) {
        return Err(domain("gamma_infinity", "table temperatures must be strictly increasing"));
    }
    if x <= first.0 {
        return Ok(first.1);
    }
    if x >= last.0 {
        return Ok(last.1);
    }
    let i = rows.partition_point(|r| r.0 <= x);
    let (x0, y0) = rows[i - 1];
    let (x1, y1) = rows[i];
    Ok(y0 + (y1 - y0) * (x - x0) / (x1 - x0))
}

/// How `W↓` enters the motional-narrowing width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WDownModel {
    /// Full Raman integral from the E-mode parameters.
    Exact(EPhononParams),
    /// High-temperature law `W↓ = Q T²` with `Q` in MHz·K⁻².
    Quadratic { q: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaMnMode {
    Exact,
    Quadratic,
}

impl WDownModel {
    /// Builds the model for `mode`; the quadratic coefficient is derived
    /// from the E-mode parameters with [`q_constant`].
    pub fn from_mode(
        mode: GammaMnMode,
        units: &UnitConstants,
        e: &EPhononParams,
        p: &SpinParams,
    ) -> Result<Self> {
        Ok(match mode {
            GammaMnMode::Exact => WDownModel::Exact(*e),
            GammaMnMode::Quadratic => WDownModel::Quadratic {
                q: q_constant(units, e, p)? / HZ_PER_MHZ,
            },
        })
    }

    /// `W↓` in MHz.
    pub fn w_down_mhz(&self, rates: &RateEvaluator, t: Temperature, p: &SpinParams) -> Result<f64> {
        match self {
            WDownModel::Exact(e) => Ok(rates.w_down(t, e, p)? / HZ_PER_MHZ),
            WDownModel::Quadratic { q } => Ok(q * t.kelvin() * t.kelvin()),
        }
    }
}

/// Fast-exchange exchange-narrowed width and the quantities behind it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MotionalNarrowing {
    /// `Γ_MN = β·2π·D⊥²/W↓`, MHz.
    pub gamma: f64,
    pub w_down_mhz: f64,
    pub beta: f64,
    /// `W↓ / 2D⊥`; the fast-exchange form assumes this is ≫ 1.
    pub exchange_ratio: f64,
    pub fast_exchange: bool,
}

/// Below this `W↓/2D⊥` the fast-exchange width is flagged.
pub const FAST_EXCHANGE_MIN_RATIO: f64 = 10.0;

/// Motional-narrowing contribution to the homogeneous ODMR width.
pub fn gamma_mn(
    rates: &RateEvaluator,
    t: Temperature,
    p: &SpinParams,
    w: &WDownModel,
) -> Result<MotionalNarrowing> {
    if t.is_zero() {
        return Err(domain("temperature", "motional narrowing width is undefined at T = 0"));
    }
    let w_down_mhz = w.w_down_mhz(rates, t, p)?;
    if !(w_down_mhz > 0.0) {
        return Err(domain("w_down", format!("must be > 0, got {w_down_mhz} MHz")));
    }
    let beta = beta_factor(&rates.units, t, p)?;
    let exchange_ratio = w_down_mhz / (2.0 * p.d_perp);
    let fast_exchange = exchange_ratio >= FAST_EXCHANGE_MIN_RATIO;
    if !fast_exchange {
        log::warn!(
            "W↓/2D⊥ = {exchange_ratio:.3} at {} K; fast-exchange width is unreliable",
            t.kelvin()
        );
    }
    Ok(MotionalNarrowing {
        gamma: beta * 2.0 * PI * p.d_perp * p.d_perp / w_down_mhz,
        w_down_mhz,
        beta,
        exchange_ratio,
        fast_exchange,
    })
}

/// Power-broadening parameters of the ODMR lines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OdmrModelParams {
    /// Inhomogeneous width, MHz.
    pub gamma_inh: f64,
    /// Saturated contrast, fraction.
    pub c_max: f64,
    /// Rabi coefficient, MHz²·W⁻¹.
    pub kappa: f64,
    /// Spin relaxation rate in MHz; derived from [`OpticalRates`] when absent.
    pub gamma1: Option<f64>,
}

impl Default for OdmrModelParams {
    fn default() -> Self {
        Self {
            gamma_inh: 33.0,
            c_max: 0.16,
            kappa: 210.0,
            gamma1: None,
        }
    }
}

impl OdmrModelParams {
    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("gamma_inh", self.gamma_inh),
            ("c_max", self.c_max),
            ("kappa", self.kappa),
            ("gamma1", self.gamma1.unwrap_or(0.0)),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(domain(field, format!("must be finite and >= 0, got {v}")));
            }
        }
        if self.c_max > 1.0 {
            return Err(domain("c_max", format!("must be <= 1, got {}", self.c_max)));
        }
        Ok(())
    }
}

/// Linear background `offset + slope·(f − f₀)` of an ODMR spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Baseline {
    pub offset: f64,
    /// Per MHz.
    pub slope: f64,
}

impl Default for Baseline {
    fn default() -> Self {
        Self {
            offset: 1.0,
            slope: 0.0,
        }
    }
}

/// Everything needed to evaluate the ODMR observables at `(T, P_RF)`.
#[derive(Debug, Clone)]
pub struct OdmrModel {
    pub spin: SpinParams,
    pub optical: OpticalRates,
    pub params: OdmrModelParams,
    pub w_down: WDownModel,
    pub gamma_infinity: GammaInfinity,
    pub rates: RateEvaluator,
}

/// Homogeneous width and relaxation rate entering the power-broadening law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HomogeneousWidth {
    pub gamma_infinity: f64,
    pub motional: MotionalNarrowing,
    /// `Γ∞ + Γ_MN`, MHz.
    pub gamma_h: f64,
    pub gamma1: f64,
}

impl OdmrModel {
    /// Reference model with the quadratic `W↓ = QT²` law.
    pub fn new(spin: SpinParams, optical: OpticalRates, params: OdmrModelParams, w_down: WDownModel) -> Self {
        Self {
            spin,
            optical,
            params,
            w_down,
            gamma_infinity: GammaInfinity::FromRates,
            rates: RateEvaluator::default(),
        }
    }

    pub fn gamma1(&self) -> Result<f64> {
        match self.params.gamma1 {
            Some(g) => Ok(g),
            None => gamma_one(&self.optical),
        }
    }

    pub fn homogeneous(&self, t: Temperature) -> Result<HomogeneousWidth> {
        let gamma_infinity = self.gamma_infinity.at(t, &self.optical)?;
        let motional = gamma_mn(&self.rates, t, &self.spin, &self.w_down)?;
        Ok(HomogeneousWidth {
            gamma_infinity,
            motional,
            gamma_h: gamma_infinity + motional.gamma,
            gamma1: self.gamma1()?,
        })
    }

    /// Observed splitting, MHz.
    pub fn splitting(&self, t: Temperature) -> Result<f64> {
        odmr_splitting(&self.rates.units, t, &self.spin)
    }
}

fn check_power(p_rf: f64) -> Result<()> {
    if !(p_rf.is_finite() && p_rf >= 0.0) {
        return Err(domain("p_rf", format!("must be finite and >= 0 W, got {p_rf}")));
    }
    Ok(())
}

/// `Γ_inh + Γ_h √(1 + 4πκP/(Γ_h γ₁))`, MHz.
pub fn linewidth_from_parts(p_rf: f64, gamma_inh: f64, kappa: f64, h: &HomogeneousWidth) -> f64 {
    let drive = 4.0 * PI * kappa * p_rf;
    if drive == 0.0 {
        return gamma_inh + h.gamma_h;
    }
    gamma_inh + h.gamma_h * (1.0 + drive / (h.gamma_h * h.gamma1)).sqrt()
}

/// `C_max·4πκP/(4πκP + γ₁Γ_h)`.
pub fn contrast_from_parts(p_rf: f64, c_max: f64, kappa: f64, h: &HomogeneousWidth) -> f64 {
    let drive = 4.0 * PI * kappa * p_rf;
    if drive == 0.0 {
        return 0.0;
    }
    c_max * drive / (drive + h.gamma1 * h.gamma_h)
}

/// Power-broadened ODMR linewidth (FWHM), MHz.
pub fn odmr_linewidth(p_rf: f64, t: Temperature, m: &OdmrModel) -> Result<f64> {
    check_power(p_rf)?;
    let h = m.homogeneous(t)?;
    Ok(linewidth_from_parts(p_rf, m.params.gamma_inh, m.params.kappa, &h))
}

/// ODMR contrast (fractional dip depth).
pub fn odmr_contrast(p_rf: f64, t: Temperature, m: &OdmrModel) -> Result<f64> {
    check_power(p_rf)?;
    let h = m.homogeneous(t)?;
    Ok(contrast_from_parts(p_rf, m.params.c_max, m.params.kappa, &h))
}

/// Unit-height Lorentzian with full width `fwhm`.
pub fn lorentzian(detuning: f64, fwhm: f64) -> f64 {
    let hw = 0.5 * fwhm;
    hw * hw / (detuning * detuning + hw * hw)
}

/// Two Lorentzian dips at `f₀ ± Δ/2` on a linear background, where
/// `f₀ = D∥`, `Δ` is the ODMR splitting and both dips share the
/// power-broadened FWHM. Each dip has depth `C·offset`.
pub fn odmr_spectrum(
    f_grid: &[f64],
    t: Temperature,
    p_rf: f64,
    baseline: &Baseline,
    m: &OdmrModel,
) -> Result<Vec<f64>> {
    if f_grid.is_empty() {
        return Err(domain("f_grid", "must not be empty"));
    }
    if f_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(domain("f_grid", "must be strictly increasing"));
    }
    let fwhm = odmr_linewidth(p_rf, t, m)?;
    let contrast = odmr_contrast(p_rf, t, m)?;
    let split = m.splitting(t)?;
    let center = m.spin.d_parallel;
    let depth = contrast * baseline.offset;
    Ok(f_grid
        .iter()
        .map(|&f| {
            let d = f - center;
            let dips = lorentzian(d - 0.5 * split, fwhm) + lorentzian(d + 0.5 * split, fwhm);
            baseline.offset + baseline.slope * d - depth * dips
        })
        .collect())
}

/// ZPL width `W↓/2π + W_A/π + γ₀` in MHz. `W↓` uses the strain splitting in
/// `p`; pass `p.with_xi_perp(0.0)` for an unstrained center.
pub fn zpl_width(
    rates: &RateEvaluator,
    t: Temperature,
    e: &EPhononParams,
    a: &APhononParams,
    o: &OpticalRates,
    p: &SpinParams,
) -> Result<f64> {
    let down = rates.w_down(t, e, p)?;
    let dephasing = rates.w_a(t, a)?;
    Ok((down / (2.0 * PI) + dephasing / PI) / HZ_PER_MHZ + o.gamma0)
}

/// Parameters of the ZPL polarization visibility.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VisibilityParams {
    pub a_branching: f64,
    /// MHz
    pub r_rate: f64,
    /// `+1` or `−1`, per center.
    pub sign_branch: i8,
}

impl Default for VisibilityParams {
    fn default() -> Self {
        Self {
            a_branching: 0.40,
            r_rate: 80.0,
            sign_branch: 1,
        }
    }
}

impl VisibilityParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.a_branching) {
            return Err(domain("a_branching", format!("must lie in [0, 1], got {}", self.a_branching)));
        }
        if !(self.r_rate > 0.0 && self.r_rate.is_finite()) {
            return Err(domain("r_rate", format!("must be > 0, got {}", self.r_rate)));
        }
        if self.sign_branch != 1 && self.sign_branch != -1 {
            return Err(domain("sign_branch", format!("must be +1 or -1, got {}", self.sign_branch)));
        }
        Ok(())
    }
}

/// `V = (W↑ − W↓ ± r(1−a)/(1+a)) / (W↓ + W↑ + r)` with rates in MHz.
pub fn visibility_from_rates(w_down_mhz: f64, w_up_mhz: f64, v: &VisibilityParams) -> f64 {
    let sign = f64::from(v.sign_branch);
    let a = v.a_branching;
    (w_up_mhz - w_down_mhz + sign * v.r_rate * (1.0 - a) / (1.0 + a)) / (w_down_mhz + w_up_mhz + v.r_rate)
}

/// ZPL polarization visibility at `T`.
pub fn visibility(
    rates: &RateEvaluator,
    t: Temperature,
    v: &VisibilityParams,
    e: &EPhononParams,
    p: &SpinParams,
) -> Result<f64> {
    v.validate()?;
    let down = rates.w_down(t, e, p)? / HZ_PER_MHZ;
    let up = rates.w_up(t, e, p)? / HZ_PER_MHZ;
    Ok(visibility_from_rates(down, up, v))
}

use std::collections::HashMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::observables::{
    contrast_from_parts, gamma_mn, linewidth_from_parts, zpl_width, visibility, GammaInfinity,
    HomogeneousWidth, OpticalRates, VisibilityParams, WDownModel,
};
use crate::rates::{APhononParams, EPhononParams, RateEvaluator};
use crate::spin::{odmr_splitting, SpinParams, Temperature};

use super::params::ParamValues;
use super::series::{DataSeries, SeriesKind};

/// Model for one series kind: `y(x)` for every point of the series.
pub type ModelFn = dyn Fn(&DataSeries, &ParamValues) -> Result<Vec<f64>> + Send + Sync;

/// Quantities held fixed while fitting.
#[derive(Debug, Clone)]
pub struct ModelContext {
    /// `D∥`, `D⊥`, `A`; the `xi_perp` here is only a fallback.
    pub spin: SpinParams,
    pub optical: OpticalRates,
    pub gamma_infinity: GammaInfinity,
    /// Overrides `γ₁` from the optical rates when set.
    pub gamma1: Option<f64>,
    pub rates: RateEvaluator,
    /// MHz
    pub r_rate: f64,
    /// Strain splitting used for ZPL and visibility series, meV.
    pub zpl_xi_perp: f64,
}

impl Default for ModelContext {
    fn default() -> Self {
        Self {
            spin: SpinParams::default(),
            optical: OpticalRates::default(),
            gamma_infinity: GammaInfinity::FromRates,
            gamma1: None,
            rates: RateEvaluator::default().with_memo(),
            r_rate: VisibilityParams::default().r_rate,
            zpl_xi_perp: 0.0,
        }
    }
}

/// Series kind → model.
#[derive(Clone, Default)]
pub struct ModelRegistry {
    models: HashMap<SeriesKind, Arc<ModelFn>>,
}

impl std::fmt::Debug for ModelRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut kinds: Vec<_> = self.models.keys().collect();
        kinds.sort();
        f.debug_struct("ModelRegistry").field("kinds", &kinds).finish()
    }
}

impl ModelRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn register<F>(&mut self, kind: SeriesKind, f: F) -> &mut Self
    where
        F: Fn(&DataSeries, &ParamValues) -> Result<Vec<f64>> + Send + Sync + 'static,
    {
        self.models.insert(kind, Arc::new(f));
        self
    }

    pub fn contains(&self, kind: SeriesKind) -> bool {
        self.models.contains_key(&kind)
    }

    pub fn evaluate(&self, series: &DataSeries, values: &ParamValues) -> Result<Vec<f64>> {
        let f = self
            .models
            .get(&series.kind)
            .ok_or_else(|| Error::UnknownKind(series.kind.to_string()))?;
        let y = f(series, values)?;
        if y.len() != series.len() {
            return Err(Error::InvalidSeries(format!(
                "{}: model returned {} values for {} points",
                series.name,
                y.len(),
                series.len()
            )));
        }
        Ok(y)
    }

    /// All six physical models.
    ///
    /// Parameter names: `gamma_inh` (MHz), `kappa` (MHz²/W), `c_max`,
    /// `q` (MHz/K²), `xi_perp` (meV) for the ODMR kinds; `b_e` (Hz/K⁵),
    /// `omega_e` (meV), `b_a` (Hz/K⁷), `omega_a` (meV), `gamma0` (MHz) for
    /// the ZPL width and `b_e`, `omega_e`, `a_branching` for the visibility.
    pub fn physical(ctx: ModelContext) -> Self {
        let ctx = Arc::new(ctx);
        let mut reg = Self::empty();
        for kind in SeriesKind::ALL {
            let c = Arc::clone(&ctx);
            reg.register(kind, move |s, v| physical_model(&c, s, v));
        }
        reg
    }
}

fn condition(series: &DataSeries, value: Option<f64>, what: &str) -> Result<f64> {
    value.ok_or_else(|| {
        Error::InvalidSeries(format!("{}: {} series needs condition `{what}`", series.name, series.kind))
    })
}

fn homogeneous(ctx: &ModelContext, t: f64, v: &ParamValues) -> Result<HomogeneousWidth> {
    let t = Temperature::new(t)?;
    let spin = ctx.spin.with_xi_perp(v.require("xi_perp")?);
    let w = WDownModel::Quadratic { q: v.require("q")? };
    let motional = gamma_mn(&ctx.rates, t, &spin, &w)?;
    let gamma_infinity = ctx.gamma_infinity.at(t, &ctx.optical)?;
    let gamma1 = match ctx.gamma1 {
        Some(g) => g,
        None => crate::observables::gamma_one(&ctx.optical)?,
    };
    Ok(HomogeneousWidth {
        gamma_infinity,
        motional,
        gamma_h: gamma_infinity + motional.gamma,
        gamma1,
    })
}

fn physical_model(ctx: &ModelContext, s: &DataSeries, v: &ParamValues) -> Result<Vec<f64>> {
    let c = &s.conditions;
    match s.kind {
        SeriesKind::LinewidthVsT => {
            let p = condition(s, c.rf_power_w, "rf_power_w")?;
            let (g, k) = (v.require("gamma_inh")?, v.require("kappa")?);
            s.x.iter()
                .map(|&t| Ok(linewidth_from_parts(p, g, k, &homogeneous(ctx, t, v)?)))
                .collect()
        }
        SeriesKind::LinewidthVsP => {
            let h = homogeneous(ctx, condition(s, c.temperature_k, "temperature_k")?, v)?;
            let (g, k) = (v.require("gamma_inh")?, v.require("kappa")?);
            Ok(s.x.iter().map(|&p| linewidth_from_parts(p, g, k, &h)).collect())
        }
        SeriesKind::ContrastVsP => {
            let h = homogeneous(ctx, condition(s, c.temperature_k, "temperature_k")?, v)?;
            let (cm, k) = (v.require("c_max")?, v.require("kappa")?);
            Ok(s.x.iter().map(|&p| contrast_from_parts(p, cm, k, &h)).collect())
        }
        SeriesKind::SplittingVsT => {
            let spin = ctx.spin.with_xi_perp(v.require("xi_perp")?);
            s.x.iter()
                .map(|&t| odmr_splitting(&ctx.rates.units, Temperature::new(t)?, &spin))
                .collect()
        }
        SeriesKind::ZplVsT => {
            let e = EPhononParams {
                b_e: v.require("b_e")?,
                omega_e: v.require("omega_e")?,
            };
            let a = APhononParams {
                b_a: v.require("b_a")?,
                omega_a: v.require("omega_a")?,
            };
            let o = OpticalRates {
                gamma0: v.require("gamma0")?,
                ..ctx.optical
            };
            let spin = ctx.spin.with_xi_perp(ctx.zpl_xi_perp);
            s.x.iter()
                .map(|&t| zpl_width(&ctx.rates, Temperature::new(t)?, &e, &a, &o, &spin))
                .collect()
        }
        SeriesKind::VisibilityVsT => {
            let e = EPhononParams {
                b_e: v.require("b_e")?,
                omega_e: v.require("omega_e")?,
            };
            let vp = VisibilityParams {
                a_branching: v.require("a_branching")?,
                r_rate: ctx.r_rate,
                sign_branch: c.sign_branch.unwrap_or(1),
            };
            let spin = ctx.spin.with_xi_perp(ctx.zpl_xi_perp);
            s.x.iter()
                .map(|&t| visibility(&ctx.rates, Temperature::new(t)?, &vp, &e, &spin))
                .collect()
        }
    }
}

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::lm::{levenberg_marquardt, FitResult, LmOptions, SeriesObjective};
use super::models::ModelRegistry;
use super::params::{ParamValues, Parameter, ParameterSet};
use super::series::{Conditions, DataSeries, SeriesKind};

/// `y = model(x) + N(0, noise_sigma)`; deterministic per seed. The series
/// carries `sigma = noise_sigma` when that is positive and unit weights
/// otherwise.
pub fn synthesize_dataset(
    registry: &ModelRegistry,
    name: &str,
    kind: SeriesKind,
    values: &ParamValues,
    x: Vec<f64>,
    conditions: Conditions,
    noise_sigma: f64,
    seed: u64,
) -> Result<DataSeries> {
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::InvalidSeries(format!("{name}: noise sigma must be finite and >= 0")));
    }
    let n = x.len();
    let mut series = DataSeries {
        name: name.to_string(),
        kind,
        x,
        y: vec![0.0; n],
        sigma: None,
        conditions,
    };
    series.validate()?;
    let mut y = registry.evaluate(&series, values)?;
    if noise_sigma > 0.0 {
        let normal = Normal::new(0.0, noise_sigma).map_err(|e| Error::InvalidSeries(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in &mut y {
            *v += normal.sample(&mut rng);
        }
        series.sigma = Some(vec![noise_sigma; n]);
    }
    series.y = y;
    Ok(series)
}

/// The five shared ODMR parameters with positivity enforced by log transforms.
pub fn odmr_parameters(gamma_inh: f64, kappa: f64, c_max: f64, q: f64, xi_perp: f64) -> Result<ParameterSet> {
    ParameterSet::new(vec![
        Parameter::new("gamma_inh", gamma_inh).log(),
        Parameter::new("kappa", kappa).log(),
        Parameter::new("c_max", c_max).log().bounds(None, Some(1.0)),
        Parameter::new("q", q).log(),
        Parameter::new("xi_perp", xi_perp).log(),
    ])
}

/// ZPL width and visibility parameters. `omega_e`/`omega_a` are capped
/// at the diamond Debye energy.
pub fn zpl_parameters(b_e: f64, omega_e: f64, b_a: f64, omega_a: f64, gamma0: f64, a_branching: f64) -> Result<ParameterSet> {
    let debye = crate::units::DIAMOND_DEBYE_ENERGY_MEV;
    ParameterSet::new(vec![
        Parameter::new("b_e", b_e).log(),
        Parameter::new("omega_e", omega_e).log().bounds(None, Some(debye)),
        Parameter::new("b_a", b_a).log(),
        Parameter::new("omega_a", omega_a).log().bounds(None, Some(debye)),
        Parameter::new("gamma0", gamma0).bounds(Some(0.0), None),
        Parameter::new("a_branching", a_branching).bounds(Some(0.0), Some(1.0)),
    ])
}

/// Per-kind 1σ noise levels of the six-series ODMR bundle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BundleNoise {
    /// MHz
    pub linewidth: f64,
    pub contrast: f64,
    /// MHz
    pub splitting: f64,
}

impl BundleNoise {
    pub const NONE: BundleNoise = BundleNoise {
        linewidth: 0.0,
        contrast: 0.0,
        splitting: 0.0,
    };

    /// Typical scatter of room-temperature ensemble ODMR data.
    pub const TYPICAL: BundleNoise = BundleNoise {
        linewidth: 4.0,
        contrast: 0.003,
        splitting: 3.0,
    };
}

/// Six series sharing the ODMR parameters: linewidth vs T at two RF powers,
/// linewidth and contrast vs RF power at two temperatures, and the
/// splitting vs T. Noiseless series get the typical sigmas so that the
/// series stay commensurate in χ².
pub fn odmr_six_bundle(registry: &ModelRegistry, truth: &ParamValues, noise: BundleNoise, seed: u64) -> Result<Vec<DataSeries>> {
    let temps: Vec<f64> = (0..11).map(|i| 295.0 + 25.0 * f64::from(i)).collect();
    let powers: Vec<f64> = (1..=9).map(|i| 0.05 * f64::from(i)).collect();
    let at_power = |p: f64| Conditions {
        rf_power_w: Some(p),
        ..Conditions::default()
    };
    let at_temp = |t: f64| Conditions {
        temperature_k: Some(t),
        ..Conditions::default()
    };
    let specs = [
        ("linewidth_vs_T_0.44W", SeriesKind::LinewidthVsT, temps.clone(), at_power(0.44), noise.linewidth, BundleNoise::TYPICAL.linewidth),
        ("linewidth_vs_T_0.10W", SeriesKind::LinewidthVsT, temps.clone(), at_power(0.10), noise.linewidth, BundleNoise::TYPICAL.linewidth),
        ("linewidth_vs_P_295K", SeriesKind::LinewidthVsP, powers.clone(), at_temp(295.0), noise.linewidth, BundleNoise::TYPICAL.linewidth),
        ("linewidth_vs_P_455K", SeriesKind::LinewidthVsP, powers.clone(), at_temp(455.0), noise.linewidth, BundleNoise::TYPICAL.linewidth),
        ("contrast_vs_P_295K", SeriesKind::ContrastVsP, powers, at_temp(295.0), noise.contrast, BundleNoise::TYPICAL.contrast),
        ("splitting_vs_T", SeriesKind::SplittingVsT, temps, Conditions::default(), noise.splitting, BundleNoise::TYPICAL.splitting),
    ];
    specs
        .into_iter()
        .enumerate()
        .map(|(i, (name, kind, x, cond, sigma, fallback))| {
            let s = synthesize_dataset(registry, name, kind, truth, x, cond, sigma, seed.wrapping_add(i as u64))?;
            Ok(if s.sigma.is_none() { s.with_sigma(fallback) } else { s })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ZplFitMode {
    /// One fit over both data kinds with shared `b_e`, `omega_e`.
    #[default]
    Joint,
    /// ZPL parameters from the ZPL data, then `a_branching` alone.
    Sequential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZplVisibilityFit {
    pub mode: ZplFitMode,
    /// The joint fit, or the first (ZPL) stage.
    pub primary: FitResult,
    /// Second (visibility) stage of a sequential fit.
    pub secondary: Option<FitResult>,
}

impl ZplVisibilityFit {
    /// Fit of the stage in which `name` was free.
    pub fn parameter(&self, name: &str) -> Option<&super::lm::FittedParameter> {
        fn free<'a>(r: &'a FitResult, name: &str) -> Option<&'a super::lm::FittedParameter> {
            r.parameter(name).filter(|p| !p.fixed)
        }
        self.secondary
            .as_ref()
            .and_then(|r| free(r, name))
            .or_else(|| free(&self.primary, name))
            .or_else(|| self.primary.parameter(name))
    }

    pub fn converged(&self) -> bool {
        self.primary.converged && self.secondary.as_ref().map_or(true, |r| r.converged)
    }
}

const ZPL_NAMES: [&str; 5] = ["b_e", "omega_e", "b_a", "omega_a", "gamma0"];

/// Fits ZPL widths and visibilities; `registry` should carry the physical
/// models.
pub fn fit_zpl_and_visibility(
    registry: &ModelRegistry,
    zpl: &[DataSeries],
    vis: &[DataSeries],
    initial: &ParameterSet,
    mode: ZplFitMode,
    opts: &LmOptions,
) -> Result<ZplVisibilityFit> {
    for s in zpl {
        if s.kind != SeriesKind::ZplVsT {
            return Err(Error::InvalidSeries(format!("{}: expected zpl_vs_T, got {}", s.name, s.kind)));
        }
    }
    for s in vis {
        if s.kind != SeriesKind::VisibilityVsT {
            return Err(Error::InvalidSeries(format!("{}: expected visibility_vs_T, got {}", s.name, s.kind)));
        }
    }
    if zpl.is_empty() && vis.is_empty() {
        return Err(Error::InvalidFit("no series to fit".into()));
    }
    let fit = |series: &[DataSeries], params: &ParameterSet| {
        let obj = SeriesObjective::new(registry, series)?;
        levenberg_marquardt(&obj, params, opts)
    };
    // parameters no series constrains would make JᵀJ singular
    let mut params = initial.clone();
    if vis.is_empty() {
        params.set_fixed("a_branching", true)?;
    }
    if zpl.is_empty() {
        for name in ["b_a", "omega_a", "gamma0"] {
            params.set_fixed(name, true)?;
        }
    }

    if mode == ZplFitMode::Joint || vis.is_empty() || zpl.is_empty() {
        let all: Vec<DataSeries> = zpl.iter().chain(vis).cloned().collect();
        return Ok(ZplVisibilityFit {
            mode,
            primary: fit(&all, &params)?,
            secondary: None,
        });
    }

    let mut stage1 = params.clone();
    stage1.set_fixed("a_branching", true)?;
    let first = fit(zpl, &stage1)?;
    let mut stage2 = first.apply_to(&params);
    for name in ZPL_NAMES {
        stage2.set_fixed(name, true)?;
    }
    let second = fit(vis, &stage2)?;
    Ok(ZplVisibilityFit {
        mode,
        primary: first,
        secondary: Some(second),
    })
}

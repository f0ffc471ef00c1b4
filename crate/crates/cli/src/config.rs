use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use nv_phonon::fitting::{LmOptions, ZplFitMode};
use nv_phonon::stochastic::McSettings;
use nv_phonon::{
    APhononParams, Baseline, EPhononParams, GammaInfinity, GammaMnMode, OdmrModelParams,
    OpticalRates, QuadratureSpec, SpinParams, UnitConstants, VisibilityParams,
};

use crate::error::{CliError, CliResult};

/// ODMR power-broadening parameters plus the `W↓` law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OdmrConfig {
    pub gamma_inh: f64,
    pub c_max: f64,
    pub kappa: f64,
    pub gamma1: Option<f64>,
    /// MHz/K², used by the quadratic law.
    pub q: f64,
    pub gamma_mn_mode: GammaMnMode,
    pub gamma_infinity: GammaInfinity,
    pub baseline: Baseline,
}

impl Default for OdmrConfig {
    fn default() -> Self {
        let p = OdmrModelParams::default();
        Self {
            gamma_inh: p.gamma_inh,
            c_max: p.c_max,
            kappa: p.kappa,
            gamma1: p.gamma1,
            q: 0.83,
            gamma_mn_mode: GammaMnMode::Quadratic,
            gamma_infinity: GammaInfinity::FromRates,
            baseline: Baseline::default(),
        }
    }
}

impl OdmrConfig {
    pub fn model_params(&self) -> OdmrModelParams {
        OdmrModelParams {
            gamma_inh: self.gamma_inh,
            c_max: self.c_max,
            kappa: self.kappa,
            gamma1: self.gamma1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ZplConfig {
    /// Strain splitting assumed for ZPL and visibility, meV.
    pub xi_perp: f64,
    pub fit_mode: ZplFitMode,
}

impl Default for ZplConfig {
    fn default() -> Self {
        Self {
            xi_perp: 0.0,
            fit_mode: ZplFitMode::Joint,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    pub options: LmOptions,
    /// Parameters held at their configured values.
    pub fixed: Vec<String>,
}

/// Everything a command needs; omitted sections take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub constants: UnitConstants,
    pub spin: SpinParams,
    pub e_phonon: EPhononParams,
    pub a_phonon: APhononParams,
    pub optical: OpticalRates,
    pub odmr: OdmrConfig,
    pub visibility: VisibilityParams,
    pub zpl: ZplConfig,
    pub quadrature: QuadratureSpec,
    pub mc: McSettings,
    pub fit: FitConfig,
    pub output_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn validate(&self) -> CliResult<()> {
        self.constants.validate()?;
        self.spin.validate()?;
        self.e_phonon.validate(&self.constants)?;
        self.a_phonon.validate(&self.constants)?;
        self.optical.validate()?;
        self.odmr.model_params().validate()?;
        self.visibility.validate()?;
        self.quadrature.validate()?;
        self.mc.validate()?;
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(CliError::Invariant(format!("invalid value for `{name}`: must be finite and > 0, got {v}")))
            }
        };
        positive("q", self.odmr.q)?;
        if !(self.zpl.xi_perp >= 0.0 && self.zpl.xi_perp.is_finite()) {
            return Err(CliError::Invariant(format!(
                "invalid value for `zpl.xi_perp`: must be finite and >= 0, got {}",
                self.zpl.xi_perp
            )));
        }
        if self.odmr.baseline.offset <= 0.0 || !self.odmr.baseline.offset.is_finite() {
            return Err(CliError::Invariant("invalid value for `offset`: must be finite and > 0".into()));
        }
        Ok(())
    }
}

/// Reads and validates a JSON config. Syntax and type errors carry the
/// line and column.
pub fn parse_config(path: &Path) -> CliResult<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    parse_config_str(&text, &path.display().to_string())
}

pub fn parse_config_str(text: &str, origin: &str) -> CliResult<RunConfig> {
    let cfg: RunConfig = serde_json::from_str(text).map_err(|e| {
        CliError::Parse(format!("{origin}:{}:{}: {e}", e.line(), e.column()))
    })?;
    cfg.validate()?;
    Ok(cfg)
}

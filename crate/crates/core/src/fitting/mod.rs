//! Weighted nonlinear least squares over heterogeneous data series with
//! shared parameters.

mod lm;
mod models;
mod params;
mod series;
mod synthetic;

pub use lm::{
    jacobian, levenberg_marquardt, residual_vector, FitResult, FittedParameter, LmOptions,
    Objective, SeriesObjective,
};
pub use models::{ModelContext, ModelFn, ModelRegistry};
pub use params::{ParamValues, Parameter, ParameterSet, Transform};
pub use series::{Conditions, DataSeries, SeriesKind};
pub use synthetic::{
    fit_zpl_and_visibility, odmr_parameters, odmr_six_bundle, synthesize_dataset, zpl_parameters,
    BundleNoise, ZplFitMode, ZplVisibilityFit,
};

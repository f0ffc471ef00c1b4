use thiserror::Error;

/// Errors raised by the physical models, the quadrature, the Monte Carlo
/// oracle and the fitter.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter violates an invariant of its type.
    #[error("invalid value for `{field}`: {reason}")]
    Domain { field: &'static str, reason: String },

    #[error("quadrature did not reach tolerance after {subdivisions} subdivisions (estimate {value:e}, error {error:e})")]
    ToleranceNotMet {
        subdivisions: usize,
        value: f64,
        error: f64,
    },

    #[error("invalid Monte Carlo configuration: {0}")]
    InvalidConfig(String),

    #[error("coherence has not decayed by the end of the record: |G(t_end)| = {tail:e} exceeds {threshold:e}")]
    InsufficientDecay { tail: f64, threshold: f64 },

    #[error("frequency {frequency} MHz exceeds the Nyquist frequency {nyquist} MHz of the time grid")]
    Aliasing { frequency: f64, nyquist: f64 },

    #[error("lineshape analysis failed: {0}")]
    Lineshape(String),

    #[error("fast-exchange regime violated: {0}")]
    RegimeViolation(String),

    #[error("no model registered for series kind `{0}`")]
    UnknownKind(String),

    #[error("parameter `{0}` is referenced by a model but not defined")]
    MissingParameter(String),

    #[error("invalid data series: {0}")]
    InvalidSeries(String),

    #[error("invalid fit setup: {0}")]
    InvalidFit(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(field: &'static str, reason: impl Into<String>) -> Error {
    Error::Domain {
        field,
        reason: reason.into(),
    }
}

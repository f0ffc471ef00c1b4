use thiserror::Error;

/// Failure of a command; each variant has its own exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Parse(String),
    #[error("{0}")]
    Invariant(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Parse(_) => 2,
            CliError::Invariant(_) => 3,
            CliError::Io(_) => 5,
        }
    }
}

impl From<nv_phonon::Error> for CliError {
    fn from(e: nv_phonon::Error) -> Self {
        CliError::Invariant(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Exit code of a fit that ran but did not converge.
pub const EXIT_NOT_CONVERGED: u8 = 4;

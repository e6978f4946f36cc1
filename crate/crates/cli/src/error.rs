use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Numerical(spm_core::Error),
    #[error("verification failed: {}", .0.join("; "))]
    Verification(Vec<String>),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Numerical(_) | CliError::Io(_) => 2,
            CliError::Verification(_) => 3,
        }
    }
}

impl From<spm_core::Error> for CliError {
    fn from(e: spm_core::Error) -> Self {
        use spm_core::Error as E;
        match e {
            E::InvalidParameter(_)
            | E::EmptyBasis
            | E::NonHermitian { .. }
            | E::Parse { .. }
            | E::UnsupportedMoment(_) => CliError::Config(e.to_string()),
            other => CliError::Numerical(other),
        }
    }
}

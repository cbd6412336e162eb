use thiserror::Error;

/// Failure of a CLI run, carrying its process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    BadInput(String),
    #[error("{0}")]
    Numerical(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::BadInput(_) | CliError::Io(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl From<cvqkd_core::Error> for CliError {
    fn from(e: cvqkd_core::Error) -> Self {
        use cvqkd_core::Error as E;
        match e {
            E::Domain(_) | E::Contract(_) => CliError::BadInput(e.to_string()),
            E::PostSelectionImpossible { .. }
            | E::Unphysical { .. }
            | E::Consistency(_)
            | E::InvalidMatrix(_) => CliError::Numerical(e.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

use thiserror::Error;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    /// A reproduce check failed.
    pub const CHECK_FAILED: i32 = 1;
    /// Numerical failure, including Mittag-Leffler accuracy failures.
    pub const NUMERIC: i32 = 2;
    /// The trajectory left the domain or blew up.
    pub const INCOMPLETE: i32 = 3;
    pub const USAGE: i32 = 64;
    pub const DATA: i32 = 65;
    pub const IO: i32 = 74;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numeric(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => exit::USAGE,
            CliError::Config(_) => exit::DATA,
            CliError::Numeric(_) => exit::NUMERIC,
            CliError::Io(_) => exit::IO,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<fracdyn::solver::SolverError> for CliError {
    fn from(e: fracdyn::solver::SolverError) -> Self {
        CliError::Numeric(e.to_string())
    }
}

impl From<fracdyn::stability::StabilityError> for CliError {
    fn from(e: fracdyn::stability::StabilityError) -> Self {
        CliError::Numeric(e.to_string())
    }
}

impl From<fracdyn::mlf::MlError> for CliError {
    fn from(e: fracdyn::mlf::MlError) -> Self {
        CliError::Numeric(e.to_string())
    }
}

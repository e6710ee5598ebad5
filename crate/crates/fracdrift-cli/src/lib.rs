//! Experiment harness behind the `fracdrift` command line: configuration
//! parsing, Monte-Carlo orchestration and report emission.

pub mod config;
pub mod experiment;
pub mod io;
pub mod report;

/// Harness errors, separated by exit-code class: configuration problems
/// exit with 2, numeric/model failures with 3.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(String),
    Numeric(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Numeric(m) => write!(f, "numeric failure: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl From<fracdrift::Error> for CliError {
    fn from(e: fracdrift::Error) -> Self {
        use fracdrift::Error::*;
        match &e {
            Domain(_) | Dimension(_) | Unsupported(_) => CliError::Config(e.to_string()),
            Numeric(_) | SingularDesign { .. } | IllConditionedBasis { .. } | Decomposition { .. } => {
                CliError::Numeric(e.to_string())
            }
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

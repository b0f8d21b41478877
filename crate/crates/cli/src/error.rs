use std::path::PathBuf;

use mtsysid::Error as CoreError;

/// Failures surfaced by the runner. Each maps to a stable category string and
/// process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: line {line}: {message}")]
    Parse { path: PathBuf, line: u64, message: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Input(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] CoreError),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }

    pub fn parse(path: impl Into<PathBuf>, line: u64, message: impl Into<String>) -> Self {
        Self::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub fn category(&self) -> &'static str {
        match self {
            Self::Parse { .. } => "parse",
            Self::Config(_) => "config",
            Self::Input(_) => "input",
            Self::Io { .. } => "io",
            Self::Core(e) => match e {
                CoreError::Dimension(_) | CoreError::InvalidInput(_) | CoreError::DegenerateCoordinates(_) => "input",
                CoreError::LambdaBelowThreshold { .. } => "input",
                CoreError::Numerical { .. } | CoreError::StepCollapse { .. } | CoreError::EstimationFailure => {
                    "numerical"
                }
                CoreError::Unsupported(_) | CoreError::ScaleGuard { .. } => "unsupported",
            },
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.category() {
            "config" => 2,
            "parse" => 3,
            "input" => 4,
            "io" => 5,
            "numerical" => 6,
            "unsupported" => 7,
            _ => 1,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

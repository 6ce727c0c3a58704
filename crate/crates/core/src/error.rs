use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("domain error: {name} = {value} (expected {expected})")]
    Domain {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("covariance is not positive semidefinite: eigenvalue {eigenvalue:e}")]
    NotPositiveSemidefinite { eigenvalue: f64 },
    #[error("degenerate hyperplane: weight vector has zero norm")]
    DegenerateHyperplane,
    #[error(
        "splitting ratio for sensor {sensor} out of hardware range: {value} not in [{lo}, {hi}]"
    )]
    RatioOutOfRange {
        sensor: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl SimError {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        SimError::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Process exit status: 2 for configuration, 1 for I/O, 3 otherwise.
    pub fn exit_code(&self) -> u8 {
        match self {
            SimError::Config { .. } => 2,
            SimError::Io(_) => 1,
            _ => 3,
        }
    }

    pub(crate) fn domain(name: &'static str, value: f64, expected: &'static str) -> Self {
        SimError::Domain {
            name,
            value,
            expected,
        }
    }
}

pub type Result<T> = std::result::Result<T, SimError>;

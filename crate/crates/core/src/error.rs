use thiserror::Error;

/// Errors raised across the navigation, simulation and learning pipeline.
#[derive(Debug, Error)]
pub enum NavError {
    #[error("latitude {0} rad is outside [-pi/2, pi/2]")]
    LatitudeOutOfRange(f64),

    #[error("latitude {0} rad is singular for this computation")]
    SingularLatitude(f64),

    #[error("innovation covariance is numerically singular (condition {condition:.3e})")]
    FilterDivergence { condition: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: u64, message: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("toml error: {0}")]
    Toml(#[from] toml::de::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl NavError {
    /// Short machine-readable tag used in CLI error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            NavError::LatitudeOutOfRange(_) => "latitude_out_of_range",
            NavError::SingularLatitude(_) => "singular_latitude",
            NavError::FilterDivergence { .. } => "filter_divergence",
            NavError::InvalidConfig(_) => "invalid_config",
            NavError::Validation(_) => "validation",
            NavError::Parse { .. } => "parse",
            NavError::Io(_) => "io",
            NavError::Json(_) => "json",
            NavError::Toml(_) => "toml",
            NavError::Csv(_) => "csv",
        }
    }
}

pub type Result<T> = std::result::Result<T, NavError>;

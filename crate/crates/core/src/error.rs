use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    /// The peak effective interaction reached or exceeded one, which would
    /// reverse the effective barrier sweep.
    #[error("model validity: peak effective interaction {u_eff_max:.4} >= 1")]
    ModelValidity { u_eff_max: f64 },

    #[error("device {0} is not functional")]
    DeviceDefect(String),

    #[error("series-resistance calibration failed: {0}")]
    Calibration(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("kappa transform failed: {0}")]
    Transform(String),

    #[error("subband-spacing extraction failed: {0}")]
    Extraction(String),

    #[error("statistics: {reason} (have {count})")]
    Statistics { reason: String, count: usize },

    #[error("multiplexer fault: {0}")]
    Mux(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Short machine-readable class name, used in logs and result files.
    pub fn class(&self) -> &'static str {
        match self {
            Error::Argument(_) => "argument",
            Error::Configuration(_) => "configuration",
            Error::ModelValidity { .. } => "model_validity",
            Error::DeviceDefect(_) => "device_defect",
            Error::Calibration(_) => "calibration",
            Error::Fit(_) => "fit",
            Error::Transform(_) => "transform",
            Error::Extraction(_) => "extraction",
            Error::Statistics { .. } => "statistics",
            Error::Mux(_) => "mux",
            Error::Io { .. } => "io",
            Error::Format { .. } => "format",
            Error::Json(_) => "json",
        }
    }
}

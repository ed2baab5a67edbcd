use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid parameters or configuration values.
    #[error("configuration error: {0}")]
    Config(String),

    /// A query or position outside the terrain lattice.
    #[error("out of terrain extent: ({x:.4}, {z:.4})")]
    OutOfExtent { x: f64, z: f64 },

    /// Malformed numeric input (length mismatch, NaN, too short, ...).
    #[error("invalid input: {0}")]
    Input(String),

    /// EM received data that cannot support two components.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// Non-finite loss or parameters during optimization.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A pipeline stage ran without the artifact an earlier stage produces.
    #[error("missing artifact {path}: run {stage} first")]
    MissingArtifact { path: PathBuf, stage: String },

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code: 1 for validation problems, 2 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Input(_) | Error::Degenerate(_) => 1,
            _ => 2,
        }
    }
}

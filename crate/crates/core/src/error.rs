//! Error types shared across the toolkit.

use std::path::PathBuf;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Dataset or candidate file could not be parsed or failed validation.
    #[error("load error in {file}:{line}: {message}")]
    Load {
        file: PathBuf,
        line: usize,
        message: String,
    },

    /// Structural validation failure not tied to a single line.
    #[error("validation error: {0}")]
    Validation(String),

    /// Bad configuration value.
    #[error("config error: {0}")]
    Config(String),

    /// Entity/relation id outside the graph's dictionaries.
    #[error("{kind} id {id} out of range (max {max})")]
    IdOutOfRange {
        kind: &'static str,
        id: u32,
        max: u32,
    },

    /// An entity row had (near-)zero L2 norm, so normalization is undefined.
    #[error("entity {entity} has zero-norm embedding; normalization undefined")]
    ZeroNormEntity { entity: u32 },

    /// Non-finite value produced during optimization.
    #[error("non-finite value at step {step}: {context}")]
    NonFinite { step: usize, context: String },

    /// Requested operation needs a model component this variant lacks.
    #[error("model variant {variant} does not support {operation}")]
    UnsupportedVariant {
        variant: &'static str,
        operation: &'static str,
    },

    /// Checkpoint does not match the loaded dataset.
    #[error("checkpoint/dataset fingerprint mismatch: checkpoint {checkpoint}, dataset {dataset}")]
    FingerprintMismatch {
        checkpoint: String,
        dataset: String,
    },

    /// Malformed or incompatible checkpoint contents.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// Missing candidate record for a partial-ranking query.
    #[error("no candidate record for test triple {test_index} direction {direction}")]
    MissingCandidates {
        test_index: usize,
        direction: &'static str,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

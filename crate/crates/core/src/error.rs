//! Engine error type.

use thiserror::Error;

/// Errors produced by the engine.
#[derive(Debug, Error)]
pub enum EngineError {
    #[error("unreadable file {path}: {reason}")]
    UnreadableFile { path: String, reason: String },

    #[error("unsupported codec: {0}")]
    UnsupportedCodec(String),

    #[error("zero-length audio")]
    EmptyAudio,

    #[error("{what}: need at least {needed}, got {got}")]
    InputTooShort {
        what: &'static str,
        needed: usize,
        got: usize,
    },

    #[error("silent mix source")]
    SilentMixSource,

    #[error("no negatives available: need at least 2 groups")]
    NoNegatives,

    #[error("no positive pairs: every group has a single member")]
    NoPositivePairs,

    #[error("insufficient groups: need {needed}, have {available}")]
    InsufficientGroups { needed: usize, available: usize },

    #[error("encoder contract violation: {0}")]
    ContractViolation(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("empty database")]
    EmptyDatabase,

    #[error("empty fingerprint sequence")]
    EmptySequence,

    #[error("encoder config mismatch between sequences")]
    ConfigMismatch,

    #[error("profile mismatch: index built for {index}, requested {requested}")]
    ProfileMismatch { index: String, requested: String },

    #[error("missing truth entry for query {0}")]
    MissingTruth(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("bad file format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

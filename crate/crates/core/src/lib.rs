//! Melody-fingerprint search engine.
//!
//! The engine turns audio into sequences of unit-norm 128-d fingerprints
//! (one per sliding analysis window over a constant-Q spectrogram) and
//! builds everything a query-by-humming / cover-song workflow needs on
//! top of them:
//!
//! - [`audio`] — WAV loading, resampling, RMS envelopes, constant-Q features
//! - [`fingerprint`] — analysis windows and the pluggable window encoder
//! - [`metric`] — group-contrastive loss, gradients, augmentations and a
//!   trainable linear encoder
//! - [`alignment`] — silence-based fragmentation of an original song and
//!   correlation matching of fragments into covers
//! - [`matching`] — cross-correlation, Pearson and DTW sequence similarity
//! - [`index`] — inverted-file ANN search with exact-scan oracle and
//!   Pearson reranking
//! - [`synth`] — deterministic synthetic corpora with ground truth
//! - [`manifest`] — JSON manifests and registries shared with the CLI

pub mod alignment;
pub mod audio;
mod binfmt;
pub mod error;
pub mod fingerprint;
pub mod index;
pub mod manifest;
pub mod matching;
pub mod metric;
pub mod synth;

pub use error::EngineError;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, EngineError>;

/// One-line description of the numeric kernels in this build.
pub fn build_info() -> String {
    format!(
        "humdex-core {} (resampler=windowed-sinc/hann-32tap, cqt=direct-kernel/hann, \
         fingerprint-dim={})",
        env!("CARGO_PKG_VERSION"),
        fingerprint::FINGERPRINT_DIM
    )
}

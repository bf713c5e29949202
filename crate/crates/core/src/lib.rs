//! Unsupervised anomalous sound detection baseline.
//!
//! The pipeline runs from an on-disk corpus of 16 kHz machine recordings to
//! challenge-style evaluation:
//!
//! - [`datasets`]: corpus layout, clip file-name grammar, submission CSVs.
//! - [`synthgen`]: deterministic synthetic corpora in the same layout.
//! - [`features`]: log-mel spectrogram and context-window feature vectors.
//! - [`autoencoder`]: dense autoencoder with exact gradients and Adam training.
//! - [`scoring`]: simple (MSE) and selective Mahalanobis anomaly scores, thresholds.
//! - [`metrics`]: domain-wise AUC, section-wise pAUC and the harmonic-mean official score.

pub mod audio;
pub mod autoencoder;
mod binio;
pub mod datasets;
pub mod features;
pub mod metrics;
pub mod scoring;
pub mod synthgen;

/// Sample rate every clip in a corpus must use.
pub const SAMPLE_RATE_HZ: u32 = 16_000;

use std::io;
use std::path::PathBuf;

use asd_core::audio::AudioError;
use asd_core::autoencoder::AeError;
use asd_core::datasets::DatasetError;
use asd_core::features::FeatureError;
use asd_core::metrics::MetricsError;
use asd_core::scoring::{ScoreMode, ScoringError};
use asd_core::synthgen::SynthError;
use thiserror::Error;

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_UNLABELED: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("I/O failure at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error("{path}: {source}")]
    Feature {
        path: PathBuf,
        #[source]
        source: FeatureError,
    },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("{group}: {source}")]
    Model {
        group: String,
        #[source]
        source: AeError,
    },
    #[error("{group}: {source}")]
    Scoring {
        group: String,
        #[source]
        source: ScoringError,
    },
    #[error("missing {0}; run `asd train` with the same seeds and output directory first")]
    MissingModel(PathBuf),
    #[error("missing {0}; run `asd score` with the same seeds and output directory first")]
    MissingScores(PathBuf),
    #[error("{group}: models were trained for {trained} scoring but {requested} was requested")]
    ModeMismatch {
        group: String,
        trained: ScoreMode,
        requested: ScoreMode,
    },
    #[error("{path}: malformed threshold file: {detail}")]
    BadThreshold { path: PathBuf, detail: String },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => EXIT_USAGE,
            CliError::Metrics(MetricsError::UnlabeledData(_)) => EXIT_UNLABELED,
            _ => EXIT_RUNTIME,
        }
    }
}

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(io::Error) -> CliError {
    let path = path.into();
    move |source| CliError::Io { path, source }
}

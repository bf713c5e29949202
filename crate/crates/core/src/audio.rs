//! PCM WAV input/output.
//!
//! Only 16-bit integer PCM, mono, 16 kHz is accepted. Anything else is
//! rejected rather than converted.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::SAMPLE_RATE_HZ;

const FULL_SCALE: f64 = 32768.0;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("{path}: {source}")]
    Wav {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },
    #[error("{path}: unsupported format ({detail}); expected 16-bit PCM mono at 16 kHz")]
    UnsupportedFormat { path: PathBuf, detail: String },
}

/// Reads a clip as samples in [-1, 1).
pub fn read_wav(path: &Path) -> Result<Vec<f64>, AudioError> {
    let wrap = |source| AudioError::Wav {
        path: path.to_path_buf(),
        source,
    };
    let reader = hound::WavReader::open(path).map_err(wrap)?;
    let spec = reader.spec();
    if spec.channels != 1
        || spec.sample_rate != SAMPLE_RATE_HZ
        || spec.bits_per_sample != 16
        || spec.sample_format != hound::SampleFormat::Int
    {
        return Err(AudioError::UnsupportedFormat {
            path: path.to_path_buf(),
            detail: format!(
                "{} ch, {} Hz, {}-bit {:?}",
                spec.channels, spec.sample_rate, spec.bits_per_sample, spec.sample_format
            ),
        });
    }
    reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| f64::from(v) / FULL_SCALE))
        .collect::<Result<Vec<_>, _>>()
        .map_err(wrap)
}

/// Writes samples as 16-bit PCM with plain rounding (no dither).
pub fn write_wav(path: &Path, samples: &[f64]) -> Result<(), AudioError> {
    let wrap = |source| AudioError::Wav {
        path: path.to_path_buf(),
        source,
    };
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: SAMPLE_RATE_HZ,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(wrap)?;
    for &x in samples {
        let q = (x * FULL_SCALE).round().clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(q).map_err(wrap)?;
    }
    writer.finalize().map_err(wrap)
}

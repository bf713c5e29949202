//! Log-mel spectrogram and context-window features.
//!
//! A clip becomes K log-mel frames of F bands; P consecutive frames are
//! concatenated into one vector of dimension D = P·F, giving K − P + 1 rows.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use ndarray::{s, Array2, ArrayView2};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::binio::{self, Reader};
use crate::SAMPLE_RATE_HZ;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("invalid feature config: {0}")]
    InvalidConfig(String),
    #[error("waveform has {len} samples, need at least fft_size = {fft_size}")]
    TooShort { len: usize, fft_size: usize },
    #[error("degenerate mel band: {0}")]
    DegenerateBand(String),
    #[error("{frames} log-mel frames but the context window needs {context}")]
    TooFewFrames { frames: usize, context: usize },
    #[error("waveform contains non-finite samples")]
    NonFiniteInput,
    #[error("feature dump {path}: {reason}")]
    CorruptDump { path: String, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub sample_rate_hz: u32,
    pub fft_size: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub context_frames: usize,
    pub mel_fmin_hz: f64,
    pub mel_fmax_hz: f64,
    pub log_floor: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            sample_rate_hz: SAMPLE_RATE_HZ,
            fft_size: 1024,
            hop: 512,
            n_mels: 128,
            context_frames: 5,
            mel_fmin_hz: 0.0,
            mel_fmax_hz: 8000.0,
            log_floor: 1e-10,
        }
    }
}

impl FeatureConfig {
    /// Feature vector dimension D = P·F.
    pub fn dim(&self) -> usize {
        self.context_frames * self.n_mels
    }

    pub fn n_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn validate(&self) -> Result<(), FeatureError> {
        let bad = |m: &str| Err(FeatureError::InvalidConfig(m.to_string()));
        if self.sample_rate_hz == 0 {
            return bad("sample rate must be positive");
        }
        if !self.fft_size.is_power_of_two() || self.fft_size < 2 {
            return bad("fft_size must be a power of two");
        }
        if self.hop == 0 || self.hop > self.fft_size {
            return bad("hop must be in 1..=fft_size");
        }
        if self.n_mels == 0 || self.context_frames == 0 {
            return bad("n_mels and context_frames must be at least 1");
        }
        if !(self.mel_fmin_hz >= 0.0) || !(self.mel_fmax_hz <= f64::from(self.sample_rate_hz) / 2.0) {
            return bad("mel range must lie within [0, sample_rate/2]");
        }
        if !(self.log_floor > 0.0) || !self.log_floor.is_finite() {
            return bad("log_floor must be positive and finite");
        }
        Ok(())
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Periodic Hann window.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

pub fn frame_count(len: usize, fft_size: usize, hop: usize) -> usize {
    if len < fft_size {
        0
    } else {
        (len - fft_size) / hop + 1
    }
}

/// Squared-magnitude STFT, one row per frame, `fft_size/2 + 1` columns.
pub fn stft_power(wave: &[f64], cfg: &FeatureConfig) -> Result<Array2<f64>, FeatureError> {
    cfg.validate()?;
    Stft::new(cfg).power(wave)
}

/// Reusable STFT plan and window for one configuration.
struct Stft {
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
    fft_size: usize,
    hop: usize,
}

impl Stft {
    fn new(cfg: &FeatureConfig) -> Self {
        Self {
            fft: FftPlanner::new().plan_fft_forward(cfg.fft_size),
            window: hann(cfg.fft_size),
            fft_size: cfg.fft_size,
            hop: cfg.hop,
        }
    }

    fn power(&self, wave: &[f64]) -> Result<Array2<f64>, FeatureError> {
        if wave.len() < self.fft_size {
            return Err(FeatureError::TooShort {
                len: wave.len(),
                fft_size: self.fft_size,
            });
        }
        if wave.iter().any(|x| !x.is_finite()) {
            return Err(FeatureError::NonFiniteInput);
        }
        let frames = frame_count(wave.len(), self.fft_size, self.hop);
        let bins = self.fft_size / 2 + 1;
        let mut out = Array2::zeros((frames, bins));
        let mut buf = vec![Complex::new(0.0, 0.0); self.fft_size];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        for (k, mut row) in out.rows_mut().into_iter().enumerate() {
            let start = k * self.hop;
            for ((b, &x), &w) in buf
                .iter_mut()
                .zip(&wave[start..start + self.fft_size])
                .zip(&self.window)
            {
                *b = Complex::new(x * w, 0.0);
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for (dst, c) in row.iter_mut().zip(&buf[..bins]) {
                *dst = c.norm_sqr();
            }
        }
        Ok(out)
    }
}

/// Triangular filters with centers uniformly spaced on the mel scale.
///
/// Rows are not area-normalized: each triangle peaks at 1 at its center.
pub fn mel_filterbank(cfg: &FeatureConfig) -> Result<Array2<f64>, FeatureError> {
    cfg.validate()?;
    if cfg.mel_fmin_hz >= cfg.mel_fmax_hz {
        return Err(FeatureError::DegenerateBand(format!(
            "fmin {} >= fmax {}",
            cfg.mel_fmin_hz, cfg.mel_fmax_hz
        )));
    }
    let bins = cfg.n_bins();
    let mel_lo = hz_to_mel(cfg.mel_fmin_hz);
    let mel_hi = hz_to_mel(cfg.mel_fmax_hz);
    let step = (mel_hi - mel_lo) / (cfg.n_mels + 1) as f64;
    let mut edges: Vec<f64> = (0..cfg.n_mels + 2)
        .map(|i| mel_to_hz(mel_lo + step * i as f64))
        .collect();
    // Pin the outer edges so the mel round trip cannot leak past the band.
    edges[0] = cfg.mel_fmin_hz;
    edges[cfg.n_mels + 1] = cfg.mel_fmax_hz;
    let bin_hz = f64::from(cfg.sample_rate_hz) / cfg.fft_size as f64;

    let mut fb = Array2::zeros((cfg.n_mels, bins));
    for m in 0..cfg.n_mels {
        let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        let mut any = false;
        for b in 0..bins {
            let f = b as f64 * bin_hz;
            let w = ((f - lo) / (center - lo)).min((hi - f) / (hi - center));
            if w > 0.0 {
                fb[[m, b]] = w;
                any = true;
            }
        }
        if !any {
            return Err(FeatureError::DegenerateBand(format!(
                "filter {m} ({lo:.1}-{hi:.1} Hz) covers no FFT bin; use fewer mel bands or a larger fft_size"
            )));
        }
    }
    Ok(fb)
}

/// Log-mel extractor holding the FFT plan and filterbank for one config.
pub struct LogMel {
    cfg: FeatureConfig,
    stft: Stft,
    /// bins × F, transposed filterbank.
    fb_t: Array2<f64>,
}

impl LogMel {
    pub fn new(cfg: &FeatureConfig) -> Result<Self, FeatureError> {
        let fb = mel_filterbank(cfg)?;
        Ok(Self {
            cfg: cfg.clone(),
            stft: Stft::new(cfg),
            fb_t: fb.reversed_axes().as_standard_layout().into_owned(),
        })
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.cfg
    }

    /// K × F matrix of `10·log10(max(mel energy, log_floor))`.
    pub fn log_mel(&self, wave: &[f64]) -> Result<Array2<f64>, FeatureError> {
        let power = self.stft.power(wave)?;
        let floor = self.cfg.log_floor;
        Ok(power.dot(&self.fb_t).mapv(|v| 10.0 * v.max(floor).log10()))
    }

    pub fn features(&self, wave: &[f64]) -> Result<FeatureMatrix, FeatureError> {
        let lm = self.log_mel(wave)?;
        let vectors = context_frames(lm.view(), self.cfg.context_frames)?;
        Ok(FeatureMatrix {
            vectors,
            config: self.cfg.clone(),
        })
    }
}

pub fn log_mel(wave: &[f64], cfg: &FeatureConfig) -> Result<Array2<f64>, FeatureError> {
    LogMel::new(cfg)?.log_mel(wave)
}

/// Concatenates each run of `p` consecutive rows, in time order.
pub fn context_frames(logmel: ArrayView2<f64>, p: usize) -> Result<Array2<f64>, FeatureError> {
    let (k, f) = logmel.dim();
    if p == 0 || k < p {
        return Err(FeatureError::TooFewFrames {
            frames: k,
            context: p,
        });
    }
    let rows = k - p + 1;
    let mut out = Array2::zeros((rows, p * f));
    for r in 0..rows {
        for j in 0..p {
            out.slice_mut(s![r, j * f..(j + 1) * f])
                .assign(&logmel.row(r + j));
        }
    }
    Ok(out)
}

/// Context vectors of one clip together with the config that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    /// K′ × D.
    pub vectors: Array2<f64>,
    pub config: FeatureConfig,
}

impl FeatureMatrix {
    pub fn from_wave(wave: &[f64], cfg: &FeatureConfig) -> Result<Self, FeatureError> {
        LogMel::new(cfg)?.features(wave)
    }

    pub fn n_vectors(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }
}

const DUMP_MAGIC: &[u8; 8] = b"ASDFEAT1";

/// Writes `magic(8) | K′ u32 | D u32` then K′·D little-endian f32, row-major.
pub fn write_feature_dump(path: &Path, features: &FeatureMatrix) -> Result<(), FeatureError> {
    let (rows, cols) = features.vectors.dim();
    let mut buf = Vec::with_capacity(16 + rows * cols * 4);
    buf.extend_from_slice(DUMP_MAGIC);
    binio::put_u32(&mut buf, rows as u32)?;
    binio::put_u32(&mut buf, cols as u32)?;
    for &v in features.vectors.iter() {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::File::create(path)?.write_all(&buf)?;
    Ok(())
}

pub fn read_feature_dump(path: &Path) -> Result<Array2<f32>, FeatureError> {
    let bytes = binio::read_all(path)?;
    let corrupt = |reason: &str| FeatureError::CorruptDump {
        path: path.display().to_string(),
        reason: reason.to_string(),
    };
    let mut r = Reader::new(&bytes);
    if r.bytes(8) != Some(DUMP_MAGIC.as_slice()) {
        return Err(corrupt("bad magic"));
    }
    let rows = r.u32().ok_or_else(|| corrupt("truncated header"))? as usize;
    let cols = r.u32().ok_or_else(|| corrupt("truncated header"))? as usize;
    let raw = r
        .bytes(rows * cols * 4)
        .ok_or_else(|| corrupt("truncated body"))?;
    if !r.is_empty() {
        return Err(corrupt("trailing bytes"));
    }
    let data = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Array2::from_shape_vec((rows, cols), data).map_err(|_| corrupt("shape"))
}

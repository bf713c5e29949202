//! Flat `key = value` run configuration.
//!
//! Precedence: preset, then config file, then command-line flags. Blank lines
//! and lines starting with `#` are ignored; keys may appear at most once per
//! file; unknown keys are rejected.
//!
//! | key | meaning |
//! |-----|---------|
//! | `preset` | `mini` or `full` (applied before the other keys) |
//! | `corpus` | corpus root directory |
//! | `out` | output directory |
//! | `mode` | `simple` or `mahalanobis` |
//! | `seeds` | comma-separated training seeds, e.g. `1,2,3` |
//! | `p` | pAUC false-positive bound in (0, 1] |
//! | `threshold_quantile` | decision threshold quantile in (0, 1) |
//! | `ridge_scale` | covariance ridge scale (≥ 0) |
//! | `dump_features` | `true` to write per-clip feature dumps |
//! | `feature.fft_size`, `feature.hop`, `feature.n_mels`, `feature.context_frames`, `feature.fmin_hz`, `feature.fmax_hz` | log-mel settings |
//! | `arch.encoder`, `arch.bottleneck`, `arch.batch_norm` | autoencoder widths, e.g. `arch.encoder = 128,128` |
//! | `train.epochs`, `train.batch_size`, `train.learning_rate`, `train.shuffle` | optimizer settings |
//! | `synth.seed`, `synth.burst_gain_db`, `synth.train_source`, `synth.train_target`, `synth.test_normal_per_domain`, `synth.test_anomaly_per_domain` | corpus generation |

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use asd_core::autoencoder::{Activation, AeArchitecture, TrainConfig};
use asd_core::features::FeatureConfig;
use asd_core::metrics::DEFAULT_P;
use asd_core::scoring::{ScoreMode, DEFAULT_RIDGE_SCALE, DEFAULT_THRESHOLD_QUANTILE};
use asd_core::synthgen::SynthConfig;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Mini,
    Full,
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mini" => Ok(Preset::Mini),
            "full" => Ok(Preset::Full),
            other => Err(format!("unknown preset `{other}` (expected mini or full)")),
        }
    }
}

/// One `key = value` entry with its origin for error messages.
#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub origin: String,
}

pub fn parse_entries(text: &str, origin: &str) -> Result<Vec<Entry>, CliError> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let at = format!("{origin}:{}", i + 1);
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("{at}: expected `key = value`")))?;
        let key = k.trim();
        if key.is_empty() {
            return Err(CliError::Config(format!("{at}: empty key")));
        }
        if !seen.insert(key.to_string()) {
            return Err(CliError::Config(format!("{at}: duplicate key `{key}`")));
        }
        out.push(Entry {
            key: key.to_string(),
            value: v.trim().to_string(),
            origin: at,
        });
    }
    Ok(out)
}

pub fn read_entries(path: &Path) -> Result<Vec<Entry>, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_entries(&text, &path.display().to_string())
}

fn parse<T: FromStr>(e: &Entry) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    e.value
        .parse()
        .map_err(|err| CliError::Config(format!("{}: bad value `{}` for {}: {err}", e.origin, e.value, e.key)))
}

fn parse_list<T: FromStr>(e: &Entry) -> Result<Vec<T>, CliError>
where
    T::Err: std::fmt::Display,
{
    if e.value.is_empty() {
        return Ok(Vec::new());
    }
    e.value
        .split(',')
        .map(|s| {
            s.trim().parse().map_err(|err| {
                CliError::Config(format!("{}: bad list item `{}` for {}: {err}", e.origin, s.trim(), e.key))
            })
        })
        .collect()
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

/// Hidden-layer layout; the input width comes from the feature config.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchSpec {
    pub encoder: Vec<usize>,
    pub bottleneck: usize,
    pub batch_norm: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub corpus: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub features: FeatureConfig,
    pub arch: ArchSpec,
    pub train: TrainConfig,
    pub mode: ScoreMode,
    pub threshold_quantile: f64,
    pub ridge_scale: f64,
    pub p: f64,
    pub seeds: Vec<u64>,
    pub dump_features: bool,
}

/// Keys handled by [`SynthSettings`]; run commands accept and ignore them so
/// one file can drive the whole pipeline.
const SYNTH_KEYS: &[&str] = &[
    "synth.seed",
    "synth.burst_gain_db",
    "synth.train_source",
    "synth.train_target",
    "synth.test_normal_per_domain",
    "synth.test_anomaly_per_domain",
];

impl RunConfig {
    pub fn preset(preset: Preset) -> Self {
        match preset {
            Preset::Mini => Self {
                corpus: None,
                out: None,
                features: FeatureConfig {
                    n_mels: 32,
                    ..FeatureConfig::default()
                },
                arch: ArchSpec {
                    encoder: vec![64, 64],
                    bottleneck: 8,
                    batch_norm: true,
                },
                train: TrainConfig {
                    epochs: 10,
                    batch_size: 128,
                    ..TrainConfig::default()
                },
                mode: ScoreMode::Simple,
                threshold_quantile: DEFAULT_THRESHOLD_QUANTILE,
                ridge_scale: DEFAULT_RIDGE_SCALE,
                p: DEFAULT_P,
                seeds: vec![1, 2, 3],
                dump_features: false,
            },
            Preset::Full => {
                let features = FeatureConfig::default();
                let base = AeArchitecture::baseline(features.dim());
                Self {
                    corpus: None,
                    out: None,
                    features,
                    arch: ArchSpec {
                        encoder: base.encoder,
                        bottleneck: base.bottleneck,
                        batch_norm: base.batch_norm,
                    },
                    train: TrainConfig::default(),
                    mode: ScoreMode::Simple,
                    threshold_quantile: DEFAULT_THRESHOLD_QUANTILE,
                    ridge_scale: DEFAULT_RIDGE_SCALE,
                    p: DEFAULT_P,
                    seeds: vec![1, 2, 3, 4, 5],
                    dump_features: false,
                }
            }
        }
    }

    /// Applies entries in order. `preset` must be handled by the caller.
    pub fn apply(&mut self, entries: &[Entry]) -> Result<(), CliError> {
        for e in entries {
            match e.key.as_str() {
                "preset" => {}
                "corpus" => self.corpus = Some(PathBuf::from(&e.value)),
                "out" => self.out = Some(PathBuf::from(&e.value)),
                "mode" => self.mode = parse(e)?,
                "seeds" => self.seeds = parse_list(e)?,
                "p" => self.p = parse(e)?,
                "threshold_quantile" => self.threshold_quantile = parse(e)?,
                "ridge_scale" => self.ridge_scale = parse(e)?,
                "dump_features" => self.dump_features = parse(e)?,
                "feature.fft_size" => self.features.fft_size = parse(e)?,
                "feature.hop" => self.features.hop = parse(e)?,
                "feature.n_mels" => self.features.n_mels = parse(e)?,
                "feature.context_frames" => self.features.context_frames = parse(e)?,
                "feature.fmin_hz" => self.features.mel_fmin_hz = parse(e)?,
                "feature.fmax_hz" => self.features.mel_fmax_hz = parse(e)?,
                "arch.encoder" => self.arch.encoder = parse_list(e)?,
                "arch.bottleneck" => self.arch.bottleneck = parse(e)?,
                "arch.batch_norm" => self.arch.batch_norm = parse(e)?,
                "train.epochs" => self.train.epochs = parse(e)?,
                "train.batch_size" => self.train.batch_size = parse(e)?,
                "train.learning_rate" => self.train.learning_rate = parse(e)?,
                "train.shuffle" => self.train.shuffle = parse(e)?,
                k if SYNTH_KEYS.contains(&k) => {}
                k => return Err(CliError::Config(format!("{}: unknown key `{k}`", e.origin))),
            }
        }
        Ok(())
    }

    pub fn architecture(&self) -> AeArchitecture {
        AeArchitecture {
            input_dim: self.features.dim(),
            encoder: self.arch.encoder.clone(),
            bottleneck: self.arch.bottleneck,
            activation: Activation::Relu,
            batch_norm: self.arch.batch_norm,
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            seed,
            ..self.train.clone()
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.seeds.is_empty() {
            return bad("seeds must not be empty".into());
        }
        let unique: BTreeSet<_> = self.seeds.iter().collect();
        if unique.len() != self.seeds.len() {
            return bad("seeds must be distinct".into());
        }
        if !(self.p > 0.0 && self.p <= 1.0) {
            return bad(format!("p = {} must lie in (0, 1]", self.p));
        }
        if !(self.threshold_quantile > 0.0 && self.threshold_quantile < 1.0) {
            return bad(format!(
                "threshold_quantile = {} must lie in (0, 1)",
                self.threshold_quantile
            ));
        }
        if !(self.ridge_scale >= 0.0) {
            return bad(format!("ridge_scale = {} must be non-negative", self.ridge_scale));
        }
        self.features
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        self.architecture()
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        self.train
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn corpus(&self) -> Result<&Path, CliError> {
        self.corpus
            .as_deref()
            .ok_or_else(|| CliError::Usage("no corpus given (use --corpus or `corpus = ...`)".into()))
    }

    pub fn out(&self) -> Result<&Path, CliError> {
        self.out
            .as_deref()
            .ok_or_else(|| CliError::Usage("no output directory given (use --out or `out = ...`)".into()))
    }

    /// Renders the configuration in the same `key = value` format.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        if let Some(p) = &self.corpus {
            let _ = writeln!(s, "corpus = {}", p.display());
        }
        if let Some(p) = &self.out {
            let _ = writeln!(s, "out = {}", p.display());
        }
        let _ = writeln!(s, "mode = {}", self.mode);
        let _ = writeln!(s, "seeds = {}", join(&self.seeds));
        let _ = writeln!(s, "p = {}", self.p);
        let _ = writeln!(s, "threshold_quantile = {}", self.threshold_quantile);
        let _ = writeln!(s, "ridge_scale = {}", self.ridge_scale);
        let _ = writeln!(s, "dump_features = {}", self.dump_features);
        let f = &self.features;
        let _ = writeln!(s, "feature.fft_size = {}", f.fft_size);
        let _ = writeln!(s, "feature.hop = {}", f.hop);
        let _ = writeln!(s, "feature.n_mels = {}", f.n_mels);
        let _ = writeln!(s, "feature.context_frames = {}", f.context_frames);
        let _ = writeln!(s, "feature.fmin_hz = {}", f.mel_fmin_hz);
        let _ = writeln!(s, "feature.fmax_hz = {}", f.mel_fmax_hz);
        let _ = writeln!(s, "arch.encoder = {}", join(&self.arch.encoder));
        let _ = writeln!(s, "arch.bottleneck = {}", self.arch.bottleneck);
        let _ = writeln!(s, "arch.batch_norm = {}", self.arch.batch_norm);
        let t = &self.train;
        let _ = writeln!(s, "train.epochs = {}", t.epochs);
        let _ = writeln!(s, "train.batch_size = {}", t.batch_size);
        let _ = writeln!(s, "train.learning_rate = {}", t.learning_rate);
        let _ = writeln!(s, "train.shuffle = {}", t.shuffle);
        s
    }
}

/// Corpus-generation settings for the `synth` command.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSettings {
    pub out: Option<PathBuf>,
    pub config: SynthConfig,
}

impl SynthSettings {
    pub fn preset(preset: Preset, seed: u64) -> Self {
        let config = match preset {
            Preset::Mini => SynthConfig::mini(seed),
            Preset::Full => SynthConfig::full(seed),
        };
        Self { out: None, config }
    }

    /// Applies `synth.*` and `out` entries; other run keys are ignored.
    pub fn apply(&mut self, entries: &[Entry]) -> Result<(), CliError> {
        let probe = &mut RunConfig::preset(Preset::Mini);
        for e in entries {
            let c = &mut self.config.counts;
            match e.key.as_str() {
                "out" => self.out = Some(PathBuf::from(&e.value)),
                "synth.seed" => self.config.seed = parse(e)?,
                "synth.burst_gain_db" => {
                    let g: f64 = parse(e)?;
                    self.config = self.config.clone().with_burst_gain_db(g);
                }
                "synth.train_source" => c.train_source = parse(e)?,
                "synth.train_target" => c.train_target = parse(e)?,
                "synth.test_normal_per_domain" => c.test_normal_per_domain = parse(e)?,
                "synth.test_anomaly_per_domain" => c.test_anomaly_per_domain = parse(e)?,
                // Validates that anything else is a known run key.
                _ => probe.apply(std::slice::from_ref(e))?,
            }
        }
        Ok(())
    }
}

/// The `preset` entry of a file, if any.
pub fn preset_entry(entries: &[Entry]) -> Result<Option<Preset>, CliError> {
    entries
        .iter()
        .find(|e| e.key == "preset")
        .map(|e| parse(e))
        .transpose()
}

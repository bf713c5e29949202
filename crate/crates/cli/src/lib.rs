//! Command-line driver: `synth`, `train`, `score`, `evaluate`, `report`.
//!
//! Settings come from a preset, then an optional flat `key = value` file
//! (`--config`), then flags. See [`config`] for the keys and
//! [`commands`] for the output layout.

pub mod commands;
pub mod config;
pub mod error;

use std::io::Write;
use std::path::PathBuf;

use asd_core::scoring::ScoreMode;
use clap::{Args, Parser, Subcommand};

use crate::config::{preset_entry, read_entries, Preset, RunConfig, SynthSettings};
pub use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "asd", version, about = "Autoencoder baseline for unsupervised anomalous sound detection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus in the challenge layout.
    Synth(SynthArgs),
    /// Train one autoencoder per (machine, section) and seed; calibrate thresholds.
    Train(RunArgs),
    /// Write anomaly-score and decision CSVs for every test clip.
    Score(RunArgs),
    /// Compute AUC/pAUC/official score per seed and their mean ± std.
    Evaluate(RunArgs),
    /// Re-print the aggregate table from existing per-seed reports.
    Report(RunArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// `key = value` file with `synth.*` settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// mini (two machines, short clips) or full (seven machines, challenge-sized).
    #[arg(long)]
    pub preset: Option<Preset>,
    /// Corpus seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output corpus root.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Burst level for anomalous clips, applied to every machine (≤ 0 disables bursts).
    #[arg(long, allow_hyphen_values = true)]
    pub burst_gain_db: Option<f64>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// `key = value` run configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Base settings: mini or full.
    #[arg(long)]
    pub preset: Option<Preset>,
    /// Corpus root (as written by `synth` or a development dataset).
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Run directory for models, scores and reports.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Scoring mode: simple or mahalanobis.
    #[arg(long)]
    pub mode: Option<ScoreMode>,
    /// Comma-separated training seeds.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Training epochs.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// pAUC false-positive bound.
    #[arg(long)]
    pub p: Option<f64>,
    /// Quantile of training scores used as the decision threshold.
    #[arg(long)]
    pub threshold_quantile: Option<f64>,
    /// Covariance ridge scale.
    #[arg(long)]
    pub ridge_scale: Option<f64>,
    /// Write per-clip feature dumps under <out>/features.
    #[arg(long)]
    pub dump_features: bool,
}

impl RunArgs {
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let entries = match &self.config {
            Some(path) => read_entries(path)?,
            None => Vec::new(),
        };
        let preset = match self.preset {
            Some(p) => p,
            None => preset_entry(&entries)?.unwrap_or(Preset::Mini),
        };
        let mut cfg = RunConfig::preset(preset);
        cfg.apply(&entries)?;
        if let Some(v) = &self.corpus {
            cfg.corpus = Some(v.clone());
        }
        if let Some(v) = &self.out {
            cfg.out = Some(v.clone());
        }
        if let Some(v) = self.mode {
            cfg.mode = v;
        }
        if let Some(v) = &self.seeds {
            cfg.seeds = v.clone();
        }
        if let Some(v) = self.epochs {
            cfg.train.epochs = v;
        }
        if let Some(v) = self.p {
            cfg.p = v;
        }
        if let Some(v) = self.threshold_quantile {
            cfg.threshold_quantile = v;
        }
        if let Some(v) = self.ridge_scale {
            cfg.ridge_scale = v;
        }
        if self.dump_features {
            cfg.dump_features = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl SynthArgs {
    pub fn resolve(&self) -> Result<SynthSettings, CliError> {
        let entries = match &self.config {
            Some(path) => read_entries(path)?,
            None => Vec::new(),
        };
        let preset = match self.preset {
            Some(p) => p,
            None => preset_entry(&entries)?.unwrap_or(Preset::Mini),
        };
        let mut s = SynthSettings::preset(preset, 0);
        s.apply(&entries)?;
        if let Some(v) = self.seed {
            s.config.seed = v;
        }
        if let Some(v) = &self.out {
            s.out = Some(v.clone());
        }
        if let Some(g) = self.burst_gain_db {
            s.config = s.config.with_burst_gain_db(g);
        }
        if s.out.is_none() {
            return Err(CliError::Usage("no output directory given (use --out)".into()));
        }
        Ok(s)
    }
}

/// Runs a parsed command line, writing progress and results to `out`.
pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match &cli.command {
        Command::Synth(a) => commands::cmd_synth(&a.resolve()?, out).map(|_| ()),
        Command::Train(a) => commands::cmd_train(&a.resolve()?, out),
        Command::Score(a) => commands::cmd_score(&a.resolve()?, out),
        Command::Evaluate(a) => commands::cmd_evaluate(&a.resolve()?, out).map(|_| ()),
        Command::Report(a) => commands::cmd_report(&a.resolve()?, out).map(|_| ()),
    }
}

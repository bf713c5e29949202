//! The five pipeline commands.
//!
//! Output layout under the run directory:
//!
//! ```text
//! run_config.txt
//! features/<machine>/<split>/<clip>.feat            (dump_features = true)
//! seed_<s>/model_<machine>_section_<NN>.bin
//! seed_<s>/cov_<machine>_section_<NN>.bin           (mahalanobis)
//! seed_<s>/loss_<machine>_section_<NN>.csv
//! seed_<s>/threshold_<machine>_section_<NN>.txt
//! seed_<s>/anomaly_score_<machine>_section_<NN>.csv
//! seed_<s>/decision_result_<machine>_section_<NN>.csv
//! seed_<s>/report.csv, seed_<s>/report.json
//! aggregate.csv, aggregate.json
//! ```

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use asd_core::audio::read_wav;
use asd_core::autoencoder::{init_model, load_model, save_model, train, AeModel};
use asd_core::datasets::{
    read_value_csv, scan_corpus, score_file_name, write_submission, ClipGroup, ClipMetadata,
    CorpusManifest, Domain, GroupKey, ScoreRecord,
};
use asd_core::features::{write_feature_dump, FeatureMatrix, LogMel};
use asd_core::metrics::{aggregate_reports, evaluate, AggregateReport, EvalReport, MetricsError, ScoreTable};
use asd_core::scoring::{
    calibrate_threshold, decide, fit_covariances, load_covariances, save_covariances, score_clip,
    DomainCovariances, ScoreMode, ScoringError, Threshold,
};
use asd_core::synthgen::synth_corpus;
use ndarray::{concatenate, Array2, ArrayView2, Axis};

use crate::config::{parse_entries, RunConfig, SynthSettings};
use crate::error::{io_err, CliError};

fn stem(key: &GroupKey) -> String {
    format!("{}_section_{:02}", key.machine_type, key.section)
}

pub fn seed_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed_{seed}"))
}

pub fn model_path(dir: &Path, key: &GroupKey) -> PathBuf {
    dir.join(format!("model_{}.bin", stem(key)))
}

pub fn covariance_path(dir: &Path, key: &GroupKey) -> PathBuf {
    dir.join(format!("cov_{}.bin", stem(key)))
}

pub fn loss_path(dir: &Path, key: &GroupKey) -> PathBuf {
    dir.join(format!("loss_{}.csv", stem(key)))
}

pub fn threshold_path(dir: &Path, key: &GroupKey) -> PathBuf {
    dir.join(format!("threshold_{}.txt", stem(key)))
}

fn say(out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    out.write_all(text.as_bytes()).map_err(io_err("<stdout>"))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(io_err(path))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(io_err(path))
}

pub fn cmd_synth(settings: &SynthSettings, out: &mut dyn Write) -> Result<CorpusManifest, CliError> {
    let root = settings
        .out
        .as_deref()
        .ok_or_else(|| CliError::Usage("no output directory given (use --out)".into()))?;
    let manifest = synth_corpus(&settings.config, root)?;
    let mut text = String::new();
    for g in &manifest.groups {
        let c = g.counts();
        let _ = writeln!(
            text,
            "{}: train source={} target={}; test source normal={} anomaly={}, target normal={} anomaly={}",
            g.key,
            c.train_source,
            c.train_target,
            c.test_source_normal,
            c.test_source_anomaly,
            c.test_target_normal,
            c.test_target_anomaly
        );
    }
    for w in &manifest.warnings {
        let _ = writeln!(text, "note: {w}");
    }
    let _ = writeln!(text, "wrote {} clips under {}", manifest.clip_count(), root.display());
    say(out, &text)?;
    Ok(manifest)
}

/// Feature extraction for one corpus scan, optionally dumping every clip.
struct Extractor {
    logmel: LogMel,
    dump_root: Option<PathBuf>,
}

impl Extractor {
    fn new(cfg: &RunConfig) -> Result<Self, CliError> {
        let logmel = LogMel::new(&cfg.features).map_err(|e| CliError::Config(e.to_string()))?;
        let dump_root = match cfg.dump_features {
            true => Some(cfg.out()?.join("features")),
            false => None,
        };
        Ok(Self { logmel, dump_root })
    }

    fn clip(&self, clip: &ClipMetadata) -> Result<FeatureMatrix, CliError> {
        let wave = read_wav(&clip.path)?;
        let feats = self.logmel.features(&wave).map_err(|source| CliError::Feature {
            path: clip.path.clone(),
            source,
        })?;
        if let Some(root) = &self.dump_root {
            let dir = root
                .join(&clip.machine_type)
                .join(clip.name.split.as_str());
            create_dir(&dir)?;
            let name = clip.file_name();
            let path = dir.join(format!("{}.feat", name.trim_end_matches(".wav")));
            write_feature_dump(&path, &feats).map_err(|source| CliError::Feature {
                path: path.clone(),
                source,
            })?;
        }
        Ok(feats)
    }

    fn clips(&self, clips: &[ClipMetadata]) -> Result<Vec<FeatureMatrix>, CliError> {
        clips.iter().map(|c| self.clip(c)).collect()
    }
}

fn stack<'a>(mats: impl Iterator<Item = &'a FeatureMatrix>, dim: usize) -> Array2<f64> {
    let views: Vec<ArrayView2<f64>> = mats.map(|m| m.vectors.view()).collect();
    if views.is_empty() {
        return Array2::zeros((0, dim));
    }
    concatenate(Axis(0), &views).expect("feature matrices share a width")
}

fn scan(cfg: &RunConfig) -> Result<CorpusManifest, CliError> {
    Ok(scan_corpus(cfg.corpus()?)?)
}

fn format_threshold(mode: ScoreMode, t: &Threshold) -> String {
    format!(
        "mode = {mode}\nthreshold = {}\nquantile = {}\nsamples = {}\nmethod = {}\n",
        t.value, t.quantile, t.samples, t.method
    )
}

fn read_threshold(path: &Path) -> Result<(ScoreMode, Threshold), CliError> {
    if !path.is_file() {
        return Err(CliError::MissingModel(path.to_path_buf()));
    }
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let bad = |detail: String| CliError::BadThreshold {
        path: path.to_path_buf(),
        detail,
    };
    let entries = parse_entries(&text, &path.display().to_string()).map_err(|e| bad(e.to_string()))?;
    let get = |k: &str| {
        entries
            .iter()
            .find(|e| e.key == k)
            .map(|e| e.value.clone())
            .ok_or_else(|| bad(format!("missing `{k}`")))
    };
    let num = |k: &str| -> Result<f64, CliError> {
        get(k)?.parse().map_err(|e| bad(format!("`{k}`: {e}")))
    };
    let mode: ScoreMode = get("mode")?.parse().map_err(bad)?;
    let threshold = Threshold {
        value: num("threshold")?,
        quantile: num("quantile")?,
        samples: get("samples")?.parse().map_err(|e| bad(format!("`samples`: {e}")))?,
        method: get("method")?,
    };
    Ok((mode, threshold))
}

fn train_group(
    cfg: &RunConfig,
    extractor: &Extractor,
    group: &ClipGroup,
    out_root: &Path,
) -> Result<String, CliError> {
    let name = group.key.to_string();
    let feats = extractor.clips(&group.train)?;
    let dim = cfg.features.dim();
    let in_domain = |d: Domain| {
        group
            .train
            .iter()
            .zip(&feats)
            .filter(move |(c, _)| c.name.domain == d)
            .map(|(_, f)| f)
    };
    let all = stack(feats.iter(), dim);
    let source = stack(in_domain(Domain::Source), dim);
    let target = stack(in_domain(Domain::Target), dim);
    let model_err = |source| CliError::Model {
        group: name.clone(),
        source,
    };
    let score_err = |source| CliError::Scoring {
        group: name.clone(),
        source,
    };

    let mut summary = String::new();
    for &seed in &cfg.seeds {
        let dir = seed_dir(out_root, seed);
        create_dir(&dir)?;
        let init = init_model(&cfg.architecture(), seed)
            .map_err(model_err)?
            .with_feature_config(cfg.features.clone());
        let (model, losses) = train(&init, all.view(), &cfg.train_config(seed)).map_err(model_err)?;
        save_model(&model, &model_path(&dir, &group.key)).map_err(model_err)?;
        let mut csv = String::from("epoch,loss\n");
        for (i, l) in losses.iter().enumerate() {
            let _ = writeln!(csv, "{i},{l}");
        }
        write_file(&loss_path(&dir, &group.key), csv)?;

        let cov = match cfg.mode {
            ScoreMode::Simple => None,
            ScoreMode::Mahalanobis => {
                let cov = fit_covariances(&model, source.view(), target.view(), cfg.ridge_scale)
                    .map_err(score_err)?;
                save_covariances(&cov, &covariance_path(&dir, &group.key)).map_err(score_err)?;
                Some(cov)
            }
        };
        let train_scores = feats
            .iter()
            .map(|f| score_clip(cfg.mode, &model, cov.as_ref(), f))
            .collect::<Result<Vec<_>, _>>()
            .map_err(score_err)?;
        let threshold = calibrate_threshold(&train_scores, cfg.threshold_quantile).map_err(score_err)?;
        write_file(&threshold_path(&dir, &group.key), format_threshold(cfg.mode, &threshold))?;
        let _ = writeln!(
            summary,
            "{name} seed {seed}: loss {:.6} -> {:.6}, threshold {}",
            losses.first().copied().unwrap_or(f64::NAN),
            losses.last().copied().unwrap_or(f64::NAN),
            threshold.value
        );
    }
    Ok(summary)
}

pub fn cmd_train(cfg: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    cfg.validate()?;
    let out_root = cfg.out()?;
    let manifest = scan(cfg)?;
    create_dir(out_root)?;
    write_file(&out_root.join("run_config.txt"), cfg.to_text())?;
    let extractor = Extractor::new(cfg)?;
    for group in &manifest.groups {
        let text = train_group(cfg, &extractor, group, out_root)?;
        say(out, &text)?;
    }
    Ok(())
}

fn load_for_scoring(
    cfg: &RunConfig,
    dir: &Path,
    key: &GroupKey,
) -> Result<(AeModel, Option<DomainCovariances>, Threshold), CliError> {
    let group = key.to_string();
    let (trained, threshold) = read_threshold(&threshold_path(dir, key))?;
    if trained != cfg.mode {
        return Err(CliError::ModeMismatch {
            group,
            trained,
            requested: cfg.mode,
        });
    }
    let mpath = model_path(dir, key);
    if !mpath.is_file() {
        return Err(CliError::MissingModel(mpath));
    }
    let model = load_model(&mpath).map_err(|source| CliError::Model {
        group: group.clone(),
        source,
    })?;
    if model.feature_config.as_ref() != Some(&cfg.features) {
        return Err(CliError::Scoring {
            group,
            source: ScoringError::ConfigMismatch(
                "model was trained with a different feature configuration".into(),
            ),
        });
    }
    let cov = match cfg.mode {
        ScoreMode::Simple => None,
        ScoreMode::Mahalanobis => {
            let cpath = covariance_path(dir, key);
            if !cpath.is_file() {
                return Err(CliError::MissingModel(cpath));
            }
            Some(load_covariances(&cpath).map_err(|source| CliError::Scoring { group, source })?)
        }
    };
    Ok((model, cov, threshold))
}

pub fn cmd_score(cfg: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    cfg.validate()?;
    let out_root = cfg.out()?;
    let manifest = scan(cfg)?;
    let extractor = Extractor::new(cfg)?;
    for group in &manifest.groups {
        let name = group.key.to_string();
        // Fail on missing models before spending time on features.
        let loaded = cfg
            .seeds
            .iter()
            .map(|&s| load_for_scoring(cfg, &seed_dir(out_root, s), &group.key))
            .collect::<Result<Vec<_>, _>>()?;
        let feats = extractor.clips(&group.test)?;
        let mut text = String::new();
        for (&seed, (model, cov, threshold)) in cfg.seeds.iter().zip(&loaded) {
            let records = group
                .test
                .iter()
                .zip(&feats)
                .map(|(clip, f)| {
                    let s = score_clip(cfg.mode, model, cov.as_ref(), f)?;
                    Ok(ScoreRecord::new(clip.file_name(), s, Some(decide(s, threshold))))
                })
                .collect::<Result<Vec<_>, ScoringError>>()
                .map_err(|source| CliError::Scoring {
                    group: name.clone(),
                    source,
                })?;
            let anomalies = records
                .iter()
                .filter(|r| r.decision.is_some_and(|d| d.as_digit() == 1))
                .count();
            let (scores, _) = write_submission(
                &records,
                &group.key.machine_type,
                group.key.section,
                &seed_dir(out_root, seed),
            )?;
            let _ = writeln!(
                text,
                "{name} seed {seed}: scored {} clips, {anomalies} flagged anomalous -> {}",
                records.len(),
                scores.display()
            );
        }
        say(out, &text)?;
    }
    Ok(())
}

fn require_labels(manifest: &CorpusManifest) -> Result<(), CliError> {
    match manifest.groups.iter().find(|g| !g.is_labeled()) {
        Some(g) => Err(MetricsError::UnlabeledData(g.key.to_string()).into()),
        None => Ok(()),
    }
}

fn finish(agg: &AggregateReport, out: &mut dyn Write) -> Result<(), CliError> {
    let mut text = agg.to_table();
    let _ = writeln!(text, "official_score,{}", agg.official_score.mean);
    say(out, &text)
}

pub fn cmd_evaluate(cfg: &RunConfig, out: &mut dyn Write) -> Result<AggregateReport, CliError> {
    cfg.validate()?;
    let out_root = cfg.out()?;
    let manifest = scan(cfg)?;
    require_labels(&manifest)?;
    let mut reports = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let dir = seed_dir(out_root, seed);
        let mut table = ScoreTable::new();
        for group in &manifest.groups {
            let path = dir.join(score_file_name(&group.key.machine_type, group.key.section));
            if !path.is_file() {
                return Err(CliError::MissingScores(path));
            }
            let records = read_value_csv(&path)?
                .into_iter()
                .map(|(f, s)| ScoreRecord::new(f, s, None))
                .collect();
            table.insert(group.key.clone(), records);
        }
        let report = evaluate(&manifest, &table, cfg.p)?;
        write_file(&dir.join("report.csv"), report.to_csv())?;
        write_file(&dir.join("report.json"), report.to_json())?;
        reports.push(report);
    }
    let agg = aggregate_reports(&reports)?;
    write_file(&out_root.join("aggregate.csv"), agg.to_csv())?;
    write_file(
        &out_root.join("aggregate.json"),
        serde_json::to_string_pretty(&agg).expect("aggregate serializes"),
    )?;
    let mut text = String::new();
    for (seed, r) in cfg.seeds.iter().zip(&reports) {
        let _ = writeln!(text, "seed {seed}: official score {}", r.official_score);
    }
    say(out, &text)?;
    finish(&agg, out)?;
    Ok(agg)
}

/// Re-renders the aggregate table from per-seed `report.json` files.
pub fn cmd_report(cfg: &RunConfig, out: &mut dyn Write) -> Result<AggregateReport, CliError> {
    cfg.validate()?;
    let out_root = cfg.out()?;
    let reports = cfg
        .seeds
        .iter()
        .map(|&s| {
            let path = seed_dir(out_root, s).join("report.json");
            if !path.is_file() {
                return Err(CliError::MissingScores(path));
            }
            let text = fs::read_to_string(&path).map_err(io_err(&path))?;
            serde_json::from_str::<EvalReport>(&text).map_err(|e| CliError::Io {
                path: path.clone(),
                source: e.into(),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let agg = aggregate_reports(&reports)?;
    finish(&agg, out)?;
    Ok(agg)
}

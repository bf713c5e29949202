use std::collections::BTreeMap;

use asd_core::audio::read_wav;
use asd_core::autoencoder::{init_model, train, AeArchitecture, TrainConfig};
use asd_core::datasets::{read_value_csv, write_submission, Domain, ScoreRecord, CANONICAL_TEST};
use asd_core::features::{FeatureConfig, FeatureMatrix, LogMel};
use asd_core::metrics::{evaluate, DEFAULT_P};
use asd_core::scoring::{
    calibrate_threshold, decide, fit_covariances, score_clip, ScoreMode, DEFAULT_RIDGE_SCALE,
};
use asd_core::synthgen::{synth_corpus, SynthConfig, SynthCounts};
use ndarray::{concatenate, Axis};

#[test]
fn default_counts_give_challenge_partitions() {
    let mut cfg = SynthConfig::full(1);
    cfg.machines.truncate(1);
    cfg.machines[0].clip_seconds = 6.0;
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth_corpus(&cfg, dir.path()).unwrap();
    let c = manifest.groups[0].counts();
    assert_eq!((c.train_source, c.train_target), (990, 10));
    assert_eq!(c.test_total(), CANONICAL_TEST);
    assert!(manifest.warnings.is_empty(), "{:?}", manifest.warnings);
}

#[test]
fn library_pipeline_separates_bursts() {
    let mut cfg = SynthConfig::mini(3);
    cfg.counts = SynthCounts {
        train_source: 10,
        train_target: 2,
        test_normal_per_domain: 10,
        test_anomaly_per_domain: 10,
    };
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth_corpus(&cfg, dir.path()).unwrap();

    let fcfg = FeatureConfig {
        n_mels: 16,
        ..FeatureConfig::default()
    };
    let logmel = LogMel::new(&fcfg).unwrap();
    let feats = |clips: &[asd_core::datasets::ClipMetadata]| -> Vec<FeatureMatrix> {
        clips
            .iter()
            .map(|c| logmel.features(&read_wav(&c.path).unwrap()).unwrap())
            .collect()
    };

    for mode in [ScoreMode::Simple, ScoreMode::Mahalanobis] {
        let mut table = BTreeMap::new();
        for group in &manifest.groups {
            let train_feats = feats(&group.train);
            let views: Vec<_> = train_feats.iter().map(|f| f.vectors.view()).collect();
            let frames = concatenate(Axis(0), &views).unwrap();
            let arch = AeArchitecture {
                encoder: vec![32],
                bottleneck: 4,
                ..AeArchitecture::baseline(fcfg.dim())
            };
            let model = init_model(&arch, 1).unwrap().with_feature_config(fcfg.clone());
            let tcfg = TrainConfig {
                epochs: 5,
                batch_size: 64,
                seed: 1,
                ..TrainConfig::default()
            };
            let (model, losses) = train(&model, frames.view(), &tcfg).unwrap();
            assert!(losses.last() < losses.first());

            let pick = |d: Domain| {
                let v: Vec<_> = group
                    .train
                    .iter()
                    .zip(&train_feats)
                    .filter(|(c, _)| c.name.domain == d)
                    .map(|(_, f)| f.vectors.view())
                    .collect();
                concatenate(Axis(0), &v).unwrap()
            };
            let cov = match mode {
                ScoreMode::Simple => None,
                ScoreMode::Mahalanobis => Some(
                    fit_covariances(&model, pick(Domain::Source).view(), pick(Domain::Target).view(), DEFAULT_RIDGE_SCALE)
                        .unwrap(),
                ),
            };
            let train_scores: Vec<f64> = train_feats
                .iter()
                .map(|f| score_clip(mode, &model, cov.as_ref(), f).unwrap())
                .collect();
            let phi = calibrate_threshold(&train_scores, 0.9).unwrap();

            let records: Vec<ScoreRecord> = group
                .test
                .iter()
                .zip(feats(&group.test))
                .map(|(c, f)| {
                    let s = score_clip(mode, &model, cov.as_ref(), &f).unwrap();
                    ScoreRecord::new(c.file_name(), s, Some(decide(s, &phi)))
                })
                .collect();
            let out = tempfile::tempdir().unwrap();
            let (scores, _) =
                write_submission(&records, &group.key.machine_type, group.key.section, out.path()).unwrap();
            let back = read_value_csv(&scores).unwrap();
            assert_eq!(back.len(), records.len());
            for ((f, s), r) in back.iter().zip(&records) {
                assert_eq!((f, *s), (&r.file_name, r.score));
            }
            table.insert(group.key.clone(), records);
        }
        let report = evaluate(&manifest, &table, DEFAULT_P).unwrap();
        assert!(report.official_score >= 0.8, "{mode}: {report:?}");
    }
}

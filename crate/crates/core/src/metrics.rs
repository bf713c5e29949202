//! Challenge evaluation protocol.
//!
//! - `AUC_{m,n,d}`: fraction of (anomaly, normal) pairs where the anomaly scores
//!   strictly higher, with normals from domain d and anomalies pooled over both
//!   domains of the section.
//! - `pAUC_{m,n}`: the same count restricted to the ⌊p·N⁻⌋ highest-scoring
//!   normals of the section (the low false-positive region [0, p]).
//! - Ω: harmonic mean of every AUC and pAUC.
//!
//! Ties count as misses. Counting is done in integers and divided once.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datasets::{CorpusManifest, Domain, GroupKey, Label, ScoreRecord};

/// False-positive-rate bound used by the challenge.
pub const DEFAULT_P: f64 = 0.1;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("empty score list: {0}")]
    EmptyList(&'static str),
    #[error("floor(p·N⁻) = 0 for p = {p} and N⁻ = {normals}")]
    PTooSmall { p: f64, normals: usize },
    #[error("p = {0} must lie in (0, 1]")]
    InvalidP(f64),
    #[error("non-finite score")]
    NonFiniteScore,
    #[error("metric value {0} outside [0, 1]")]
    OutOfRange(f64),
    #[error("{group}: no score for {file}")]
    MissingScores { group: String, file: String },
    #[error("{0}: test clips carry no normal/anomaly labels; only score and decision export is possible")]
    UnlabeledData(String),
    #[error("{group}: no labeled {what} test clips")]
    MissingPartition { group: String, what: String },
}

/// Exact `wins / total` pair count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PairCount {
    pub wins: u64,
    pub total: u64,
}

impl PairCount {
    pub fn value(self) -> f64 {
        self.wins as f64 / self.total as f64
    }
}

fn check_finite(xs: &[f64]) -> Result<(), MetricsError> {
    if xs.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(MetricsError::NonFiniteScore)
    }
}

/// Counts pairs with `anomaly > normal` by sorting the normals once.
fn count_wins(normals: &[f64], anomalies: &[f64]) -> u64 {
    let mut sorted = normals.to_vec();
    sorted.sort_by(f64::total_cmp);
    anomalies
        .iter()
        .map(|&a| sorted.partition_point(|&n| n < a) as u64)
        .sum()
}

pub fn auc_pairs(normals: &[f64], anomalies: &[f64]) -> Result<PairCount, MetricsError> {
    if normals.is_empty() {
        return Err(MetricsError::EmptyList("normals"));
    }
    if anomalies.is_empty() {
        return Err(MetricsError::EmptyList("anomalies"));
    }
    check_finite(normals)?;
    check_finite(anomalies)?;
    Ok(PairCount {
        wins: count_wins(normals, anomalies),
        total: (normals.len() * anomalies.len()) as u64,
    })
}

/// Domain-wise AUC.
pub fn auc_domain(normals: &[f64], anomalies: &[f64]) -> Result<f64, MetricsError> {
    auc_pairs(normals, anomalies).map(PairCount::value)
}

/// ⌊p·n⌋ with a small guard against products like 0.1·70 landing just below
/// an integer.
pub fn top_count(p: f64, n: usize) -> usize {
    (p * n as f64 + 1e-9).floor() as usize
}

pub fn pauc_pairs(normals: &[f64], anomalies: &[f64], p: f64) -> Result<PairCount, MetricsError> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(MetricsError::InvalidP(p));
    }
    if normals.is_empty() {
        return Err(MetricsError::EmptyList("normals"));
    }
    if anomalies.is_empty() {
        return Err(MetricsError::EmptyList("anomalies"));
    }
    check_finite(normals)?;
    check_finite(anomalies)?;
    let k = top_count(p, normals.len());
    if k == 0 {
        return Err(MetricsError::PTooSmall {
            p,
            normals: normals.len(),
        });
    }
    // Highest scores first; the stable sort keeps input order among ties.
    let mut idx: Vec<usize> = (0..normals.len()).collect();
    idx.sort_by(|&a, &b| normals[b].total_cmp(&normals[a]));
    let top: Vec<f64> = idx[..k].iter().map(|&i| normals[i]).collect();
    Ok(PairCount {
        wins: count_wins(&top, anomalies),
        total: (k * anomalies.len()) as u64,
    })
}

/// Section-wise partial AUC over FPR ∈ [0, p].
pub fn pauc_section(normals: &[f64], anomalies: &[f64], p: f64) -> Result<f64, MetricsError> {
    pauc_pairs(normals, anomalies, p).map(PairCount::value)
}

/// Harmonic mean of metric values; 0 if any input is 0.
pub fn official_score(values: &[f64]) -> Result<f64, MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::EmptyList("metric values"));
    }
    for &v in values {
        if !(0.0..=1.0).contains(&v) {
            return Err(MetricsError::OutOfRange(v));
        }
    }
    if values.iter().any(|&v| v == 0.0) {
        return Ok(0.0);
    }
    let inv: f64 = values.iter().map(|v| 1.0 / v).sum();
    Ok(values.len() as f64 / inv)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionReport {
    pub machine_type: String,
    pub section: u32,
    pub auc_source: f64,
    pub auc_target: f64,
    pub pauc: f64,
    pub n_normal_source: usize,
    pub n_normal_target: usize,
    pub n_anomaly: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub p: f64,
    pub sections: Vec<SectionReport>,
    pub official_score: f64,
}

impl EvalReport {
    /// All values entering Ω, in section order: AUC source, AUC target, pAUC.
    pub fn metric_values(&self) -> Vec<f64> {
        self.sections
            .iter()
            .flat_map(|s| [s.auc_source, s.auc_target, s.pauc])
            .collect()
    }

    /// `machine,section,auc_source,auc_target,pauc` rows then
    /// `official_score,<value>`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("machine,section,auc_source,auc_target,pauc\n");
        for s in &self.sections {
            let _ = writeln!(
                out,
                "{},{:02},{},{},{}",
                s.machine_type, s.section, s.auc_source, s.auc_target, s.pauc
            );
        }
        let _ = writeln!(out, "official_score,{}", self.official_score);
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Scores of one section's test clips, keyed by clip file name.
pub type ScoreTable = BTreeMap<GroupKey, Vec<ScoreRecord>>;

/// Evaluates every group of the manifest against its score records.
pub fn evaluate(
    manifest: &CorpusManifest,
    scores: &ScoreTable,
    p: f64,
) -> Result<EvalReport, MetricsError> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(MetricsError::InvalidP(p));
    }
    let mut sections = Vec::with_capacity(manifest.groups.len());
    for group in &manifest.groups {
        let name = group.key.to_string();
        if !group.is_labeled() {
            return Err(MetricsError::UnlabeledData(name));
        }
        let by_file: HashMap<&str, f64> = scores
            .get(&group.key)
            .map(|recs| {
                recs.iter()
                    .map(|r| (r.file_name.as_str(), r.score))
                    .collect()
            })
            .unwrap_or_default();
        let mut normals_src = Vec::new();
        let mut normals_tgt = Vec::new();
        let mut anomalies = Vec::new();
        for clip in &group.test {
            let file = clip.file_name();
            let &score = by_file
                .get(file.as_str())
                .ok_or_else(|| MetricsError::MissingScores {
                    group: name.clone(),
                    file: file.clone(),
                })?;
            match (clip.name.label, clip.name.domain) {
                (Label::Normal, Domain::Source) => normals_src.push(score),
                (Label::Normal, Domain::Target) => normals_tgt.push(score),
                (Label::Anomaly, _) => anomalies.push(score),
                _ => return Err(MetricsError::UnlabeledData(name)),
            }
        }
        let missing = |what: &str| MetricsError::MissingPartition {
            group: name.clone(),
            what: what.to_string(),
        };
        if normals_src.is_empty() {
            return Err(missing("source normal"));
        }
        if normals_tgt.is_empty() {
            return Err(missing("target normal"));
        }
        if anomalies.is_empty() {
            return Err(missing("anomalous"));
        }
        let all_normals: Vec<f64> = normals_src.iter().chain(&normals_tgt).copied().collect();
        sections.push(SectionReport {
            machine_type: group.key.machine_type.clone(),
            section: group.key.section,
            auc_source: auc_domain(&normals_src, &anomalies)?,
            auc_target: auc_domain(&normals_tgt, &anomalies)?,
            pauc: pauc_section(&all_normals, &anomalies, p)?,
            n_normal_source: normals_src.len(),
            n_normal_target: normals_tgt.len(),
            n_anomaly: anomalies.len(),
        });
    }
    if sections.is_empty() {
        return Err(MetricsError::EmptyList("sections"));
    }
    let mut report = EvalReport {
        p,
        sections,
        official_score: 0.0,
    };
    report.official_score = official_score(&report.metric_values())?;
    Ok(report)
}

/// Mean and sample standard deviation (n − 1; 0 for a single value).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SectionAggregate {
    pub machine_type: String,
    pub section: u32,
    pub auc_source: MeanStd,
    pub auc_target: MeanStd,
    pub pauc: MeanStd,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateReport {
    pub runs: usize,
    pub sections: Vec<SectionAggregate>,
    pub official_score: MeanStd,
}

/// Combines reports of repeated runs over the same sections.
pub fn aggregate_reports(reports: &[EvalReport]) -> Result<AggregateReport, MetricsError> {
    let first = reports.first().ok_or(MetricsError::EmptyList("reports"))?;
    let mut sections = Vec::with_capacity(first.sections.len());
    for (i, s) in first.sections.iter().enumerate() {
        let pick = |f: fn(&SectionReport) -> f64| -> Result<MeanStd, MetricsError> {
            let vals = reports
                .iter()
                .map(|r| {
                    r.sections
                        .get(i)
                        .filter(|o| o.machine_type == s.machine_type && o.section == s.section)
                        .map(f)
                        .ok_or_else(|| MetricsError::MissingPartition {
                            group: format!("{} section {:02}", s.machine_type, s.section),
                            what: "section in every run".into(),
                        })
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(MeanStd::of(&vals))
        };
        sections.push(SectionAggregate {
            machine_type: s.machine_type.clone(),
            section: s.section,
            auc_source: pick(|r| r.auc_source)?,
            auc_target: pick(|r| r.auc_target)?,
            pauc: pick(|r| r.pauc)?,
        });
    }
    let omegas: Vec<f64> = reports.iter().map(|r| r.official_score).collect();
    Ok(AggregateReport {
        runs: reports.len(),
        sections,
        official_score: MeanStd::of(&omegas),
    })
}

impl AggregateReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "machine,section,auc_source_mean,auc_source_std,auc_target_mean,auc_target_std,pauc_mean,pauc_std\n",
        );
        for s in &self.sections {
            let _ = writeln!(
                out,
                "{},{:02},{},{},{},{},{},{}",
                s.machine_type,
                s.section,
                s.auc_source.mean,
                s.auc_source.std,
                s.auc_target.mean,
                s.auc_target.std,
                s.pauc.mean,
                s.pauc.std
            );
        }
        let _ = writeln!(
            out,
            "official_score,{},{}",
            self.official_score.mean, self.official_score.std
        );
        out
    }

    /// Percent table in the `mean ± std` style of the challenge results.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<14} {:>7}  {:>16}  {:>16}  {:>16}",
            "machine", "section", "AUC source [%]", "AUC target [%]", "pAUC [%]"
        );
        let pct = |m: MeanStd| format!("{:.2} ± {:.2}", 100.0 * m.mean, 100.0 * m.std);
        for s in &self.sections {
            let _ = writeln!(
                out,
                "{:<14} {:>7}  {:>16}  {:>16}  {:>16}",
                s.machine_type,
                format!("{:02}", s.section),
                pct(s.auc_source),
                pct(s.auc_target),
                pct(s.pauc)
            );
        }
        let _ = writeln!(
            out,
            "official score over {} run(s): {}",
            self.runs,
            pct(self.official_score)
        );
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_auc(normals: &[f64], anomalies: &[f64]) -> u64 {
        let mut wins = 0;
        for &n in normals {
            for &a in anomalies {
                if a - n > 0.0 {
                    wins += 1;
                }
            }
        }
        wins
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc_domain(&[0.1, 0.2], &[0.3, 0.4]).unwrap(), 1.0);
        assert_eq!(auc_domain(&[0.5, 0.2], &[0.4, 0.6]).unwrap(), 0.75);
        assert_eq!(auc_domain(&[0.5], &[0.5]).unwrap(), 0.0);
        assert_eq!(auc_domain(&[], &[0.5]), Err(MetricsError::EmptyList("normals")));
        assert_eq!(auc_domain(&[0.5], &[]), Err(MetricsError::EmptyList("anomalies")));
        assert_eq!(auc_domain(&[f64::NAN], &[0.5]), Err(MetricsError::NonFiniteScore));
    }

    #[test]
    fn pauc_examples() {
        let mut normals = vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.75, 0.8];
        normals.push(0.9);
        assert_eq!(pauc_section(&normals, &[1.0, 0.8], 0.1).unwrap(), 0.5);
        assert_eq!(pauc_section(&normals, &[2.0, 3.0], 0.1).unwrap(), 1.0);
        assert_eq!(pauc_section(&normals, &[2.0, 3.0], 0.55).unwrap(), 1.0);
        assert_eq!(pauc_section(&normals, &[0.9, 0.9], 0.1).unwrap(), 0.0);
        assert_eq!(
            pauc_section(&normals[..9], &[1.0], 0.1),
            Err(MetricsError::PTooSmall { p: 0.1, normals: 9 })
        );
    }

    #[test]
    fn boundary_ties_do_not_change_pauc() {
        // Top-2 of [0.5, 0.9, 0.5, 0.5] is {0.9, one of the 0.5s}.
        let normals = [0.5, 0.9, 0.5, 0.5];
        let anomalies = [0.5, 0.6, 1.0];
        let v = pauc_section(&normals, &anomalies, 0.5).unwrap();
        let reordered = [0.9, 0.5, 0.5, 0.5];
        assert_eq!(v, pauc_section(&reordered, &anomalies, 0.5).unwrap());
        assert_eq!(v, (brute_auc(&[0.9, 0.5], &anomalies)) as f64 / 6.0);
    }

    #[test]
    fn top_count_handles_float_products() {
        for n in 1..=1000 {
            assert_eq!(top_count(0.1, n), n / 10, "n = {n}");
        }
    }

    #[test]
    fn official_score_examples() {
        assert_eq!(official_score(&[1.0; 6]).unwrap(), 1.0);
        assert!((official_score(&[1.0, 0.5]).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!(
            (official_score(&[1.0, 1.0, 1.0, 0.5, 0.5, 0.5]).unwrap() - 2.0 / 3.0).abs() < 1e-12
        );
        assert_eq!(official_score(&[0.9, 0.0, 0.7]).unwrap(), 0.0);
        assert_eq!(official_score(&[]), Err(MetricsError::EmptyList("metric values")));
        assert_eq!(official_score(&[1.5]), Err(MetricsError::OutOfRange(1.5)));
    }

    fn scores_with_ties() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec((0u8..12).prop_map(|v| f64::from(v) / 4.0), 1..60)
    }

    proptest! {
        #[test]
        fn auc_matches_brute_force(n in scores_with_ties(), a in scores_with_ties()) {
            let got = auc_pairs(&n, &a).unwrap();
            prop_assert_eq!(got.wins, brute_auc(&n, &a));
            prop_assert_eq!(got.total, (n.len() * a.len()) as u64);
        }

        #[test]
        fn pauc_with_full_range_is_pooled_auc(n in scores_with_ties(), a in scores_with_ties()) {
            prop_assert_eq!(pauc_pairs(&n, &a, 1.0).unwrap(), auc_pairs(&n, &a).unwrap());
        }

        #[test]
        fn pauc_in_unit_interval(n in scores_with_ties(), a in scores_with_ties(), p in 0.05f64..1.0) {
            if let Ok(v) = pauc_section(&n, &a, p) {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }

        #[test]
        fn metrics_depend_only_on_order(
            n in scores_with_ties(),
            a in scores_with_ties(),
            shift in -100.0f64..100.0,
            scale_exp in -3i32..4,
        ) {
            // Dyadic scores, integer shifts and power-of-two scales keep the
            // transform exact, so ties survive it.
            let scale = 2f64.powi(scale_exp);
            let shift = shift.round();
            let tf = |xs: &[f64]| xs.iter().map(|x| x * scale + shift).collect::<Vec<_>>();
            prop_assert_eq!(auc_pairs(&tf(&n), &tf(&a)).unwrap(), auc_pairs(&n, &a).unwrap());
            if top_count(0.3, n.len()) > 0 {
                prop_assert_eq!(pauc_pairs(&tf(&n), &tf(&a), 0.3).unwrap(), pauc_pairs(&n, &a, 0.3).unwrap());
            }
        }

        #[test]
        fn harmonic_mean_properties(vals in proptest::collection::vec(0.01f64..=1.0, 1..30)) {
            let h = official_score(&vals).unwrap();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            prop_assert!(h <= mean * (1.0 + 1e-12));
            prop_assert!(h >= min * (1.0 - 1e-12));
            let mut rev = vals.clone();
            rev.reverse();
            prop_assert!((official_score(&rev).unwrap() - h).abs() <= 1e-12);
        }
    }

    #[test]
    fn aggregate_mean_and_sample_std() {
        let mk = |v: f64| EvalReport {
            p: 0.1,
            sections: vec![SectionReport {
                machine_type: "fan".into(),
                section: 0,
                auc_source: v,
                auc_target: v,
                pauc: v,
                n_normal_source: 1,
                n_normal_target: 1,
                n_anomaly: 1,
            }],
            official_score: v,
        };
        let agg = aggregate_reports(&[mk(0.5), mk(0.7), mk(0.9)]).unwrap();
        assert!((agg.official_score.mean - 0.7).abs() < 1e-12);
        assert!((agg.official_score.std - 0.2).abs() < 1e-12);
        assert_eq!(agg.runs, 3);
        assert!(agg.to_csv().lines().last().unwrap().starts_with("official_score,"));
        assert_eq!(aggregate_reports(&[]), Err(MetricsError::EmptyList("reports")));
    }
}

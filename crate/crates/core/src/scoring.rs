//! Anomaly scores and the threshold decision.
//!
//! Two scoring modes share the reconstruction residual `e_k = ψ_k − r(ψ_k)`:
//!
//! - simple: `(1/(D·K′))·Σ_k ‖e_k‖²`
//! - selective Mahalanobis: `(1/(D·K′))·Σ_k min(e_kᵀ Σ_s⁻¹ e_k, e_kᵀ Σ_t⁻¹ e_k)`
//!
//! K′ is the number of context vectors of the clip. The Mahalanobis term is the
//! squared quadratic form, so identity covariances reproduce the simple score.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::Serialize;
use thiserror::Error;

use crate::autoencoder::{AeError, AeModel};
use crate::binio::{self, Reader};
use crate::features::FeatureMatrix;

pub const COV_MAGIC: &[u8; 8] = b"ASDCOVAR";
pub const COV_VERSION: u8 = 1;

/// Default ridge scale: ε = 1e-3 · trace(Σ)/D.
pub const DEFAULT_RIDGE_SCALE: f64 = 1e-3;
/// Default calibration quantile for φ.
pub const DEFAULT_THRESHOLD_QUANTILE: f64 = 0.9;

/// Upper bound on `max|Σ_reg·Σ_reg⁻¹ − I|` accepted at fit time.
pub const INVERSE_CHECK_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum ScoringError {
    #[error("feature config does not match the model: {0}")]
    ConfigMismatch(String),
    #[error("need at least 2 {domain} frames for a covariance, got {got}")]
    TooFewFrames { domain: &'static str, got: usize },
    #[error("{domain} covariance is not positive definite after ridge ε = {epsilon:e}")]
    SingularAfterRidge { domain: &'static str, epsilon: f64 },
    #[error("no scores to calibrate a threshold from")]
    EmptyScores,
    #[error("invalid threshold calibration: {0}")]
    InvalidCalibration(String),
    #[error("corrupt covariance file: {0}")]
    CorruptFile(String),
    #[error("covariance file version {found}, this build reads version {expected}")]
    VersionMismatch { found: u8, expected: u8 },
    #[error(transparent)]
    Model(#[from] AeError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Normal,
    Anomaly,
}

impl Decision {
    pub fn as_digit(self) -> u8 {
        match self {
            Decision::Normal => 0,
            Decision::Anomaly => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreMode {
    Simple,
    Mahalanobis,
}

impl ScoreMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ScoreMode::Simple => "simple",
            ScoreMode::Mahalanobis => "mahalanobis",
        }
    }
}

impl fmt::Display for ScoreMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScoreMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "simple" => Ok(ScoreMode::Simple),
            "mahalanobis" => Ok(ScoreMode::Mahalanobis),
            other => Err(format!("unknown scoring mode {other:?} (simple|mahalanobis)")),
        }
    }
}

fn check_config(model: &AeModel, features: &FeatureMatrix) -> Result<(), ScoringError> {
    if let Some(cfg) = &model.feature_config {
        if cfg != &features.config {
            return Err(ScoringError::ConfigMismatch(format!(
                "model trained with {cfg:?}, features built with {:?}",
                features.config
            )));
        }
    }
    if features.dim() != model.input_dim() {
        return Err(ScoringError::ConfigMismatch(format!(
            "feature dimension {} but model input {}",
            features.dim(),
            model.input_dim()
        )));
    }
    Ok(())
}

/// Rows `ψ − r(ψ)`.
pub fn residuals(model: &AeModel, vectors: ArrayView2<f64>) -> Result<Array2<f64>, ScoringError> {
    let recon = model.forward(vectors)?;
    Ok(&vectors - &recon)
}

/// Mean squared reconstruction error per dimension and context vector.
pub fn score_simple(model: &AeModel, features: &FeatureMatrix) -> Result<f64, ScoringError> {
    check_config(model, features)?;
    let e = residuals(model, features.vectors.view())?;
    Ok(e.iter().map(|v| v * v).sum::<f64>() / e.len() as f64)
}

/// Covariance of one domain's residuals plus its ridge-regularized inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainStat {
    /// Unbiased sample covariance, before the ridge.
    pub covariance: Array2<f64>,
    pub epsilon: f64,
    /// (Σ + εI)⁻¹.
    pub inverse: Array2<f64>,
    pub frames: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainCovariances {
    pub source: DomainStat,
    pub target: DomainStat,
    pub ridge_scale: f64,
}

impl DomainCovariances {
    /// Regularizes and inverts given covariance matrices (frame counts left at 0).
    pub fn from_covariances(
        source: Array2<f64>,
        target: Array2<f64>,
        ridge_scale: f64,
    ) -> Result<Self, ScoringError> {
        Ok(Self {
            source: regularize("source", source, ridge_scale, 0)?,
            target: regularize("target", target, ridge_scale, 0)?,
            ridge_scale,
        })
    }

    pub fn dim(&self) -> usize {
        self.source.covariance.nrows()
    }
}

/// Unbiased sample covariance of the rows of `x`.
pub fn sample_covariance(x: ArrayView2<f64>) -> Array2<f64> {
    let n = x.nrows();
    let mean = x.mean_axis(Axis(0)).expect("non-empty");
    let centered = &x - &mean;
    let mut cov = centered.t().dot(&centered) / (n as f64 - 1.0);
    // Exact symmetry regardless of summation order in the product.
    let d = cov.nrows();
    for i in 0..d {
        for j in 0..i {
            let v = 0.5 * (cov[[i, j]] + cov[[j, i]]);
            cov[[i, j]] = v;
            cov[[j, i]] = v;
        }
    }
    cov
}

/// Lower-triangular L with `a = L·Lᵀ`, or `None` when a pivot is not
/// safely positive.
pub fn cholesky(a: &Array2<f64>) -> Option<Array2<f64>> {
    let n = a.nrows();
    let scale = (0..n).map(|i| a[[i, i]].abs()).fold(0.0, f64::max);
    let tol = scale * n as f64 * f64::EPSILON;
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut d = a[[j, j]];
        for k in 0..j {
            d -= l[[j, k]] * l[[j, k]];
        }
        if !(d > tol) {
            return None;
        }
        let djj = d.sqrt();
        l[[j, j]] = djj;
        for i in j + 1..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / djj;
        }
    }
    Some(l)
}

/// Inverse of `L·Lᵀ` from its Cholesky factor.
fn cholesky_inverse(l: &Array2<f64>) -> Array2<f64> {
    let n = l.nrows();
    // L⁻¹ by forward substitution, column by column.
    let mut linv = Array2::<f64>::zeros((n, n));
    for c in 0..n {
        linv[[c, c]] = 1.0 / l[[c, c]];
        for i in c + 1..n {
            let mut s = 0.0;
            for k in c..i {
                s += l[[i, k]] * linv[[k, c]];
            }
            linv[[i, c]] = -s / l[[i, i]];
        }
    }
    let mut inv = linv.t().dot(&linv);
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (inv[[i, j]] + inv[[j, i]]);
            inv[[i, j]] = v;
            inv[[j, i]] = v;
        }
    }
    inv
}

fn regularize(
    domain: &'static str,
    covariance: Array2<f64>,
    ridge_scale: f64,
    frames: usize,
) -> Result<DomainStat, ScoringError> {
    let d = covariance.nrows();
    let mean_var = covariance.diag().sum() / d as f64;
    // A zero-variance domain has no scale of its own; fall back to unit scale.
    let epsilon = if mean_var > 0.0 {
        ridge_scale * mean_var
    } else {
        ridge_scale
    };
    let reg = &covariance + &(Array2::<f64>::eye(d) * epsilon);
    let singular = || ScoringError::SingularAfterRidge { domain, epsilon };
    let l = cholesky(&reg).ok_or_else(singular)?;
    let inverse = cholesky_inverse(&l);
    let check = reg.dot(&inverse) - Array2::<f64>::eye(d);
    let worst = check.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(worst < INVERSE_CHECK_TOL) {
        return Err(singular());
    }
    Ok(DomainStat {
        covariance,
        epsilon,
        inverse,
        frames,
    })
}

/// Fits per-domain residual covariances of training frames.
///
/// ε = `ridge_scale`·trace(Σ)/D is added to each diagonal before inversion.
pub fn fit_covariances(
    model: &AeModel,
    source_frames: ArrayView2<f64>,
    target_frames: ArrayView2<f64>,
    ridge_scale: f64,
) -> Result<DomainCovariances, ScoringError> {
    if !(ridge_scale >= 0.0) {
        return Err(ScoringError::InvalidCalibration(format!(
            "ridge scale {ridge_scale} must be non-negative"
        )));
    }
    let fit = |domain: &'static str, frames: ArrayView2<f64>| {
        if frames.nrows() < 2 {
            return Err(ScoringError::TooFewFrames {
                domain,
                got: frames.nrows(),
            });
        }
        let e = residuals(model, frames)?;
        regularize(domain, sample_covariance(e.view()), ridge_scale, frames.nrows())
    };
    Ok(DomainCovariances {
        source: fit("source", source_frames)?,
        target: fit("target", target_frames)?,
        ridge_scale,
    })
}

/// Per-frame squared Mahalanobis terms `(D_s, D_t)` of residual rows.
pub fn mahalanobis_terms(cov: &DomainCovariances, e: ArrayView2<f64>) -> (Array1<f64>, Array1<f64>) {
    let quad = |inv: &Array2<f64>| {
        let t = e.dot(inv);
        (&t * &e).sum_axis(Axis(1))
    };
    (quad(&cov.source.inverse), quad(&cov.target.inverse))
}

pub fn score_mahalanobis(
    model: &AeModel,
    cov: &DomainCovariances,
    features: &FeatureMatrix,
) -> Result<f64, ScoringError> {
    check_config(model, features)?;
    if cov.dim() != model.input_dim() {
        return Err(ScoringError::ConfigMismatch(format!(
            "covariance dimension {} but model input {}",
            cov.dim(),
            model.input_dim()
        )));
    }
    let e = residuals(model, features.vectors.view())?;
    let (ds, dt) = mahalanobis_terms(cov, e.view());
    let total: f64 = ds.iter().zip(&dt).map(|(a, b)| a.min(*b)).sum();
    Ok(total / e.len() as f64)
}

/// Dispatches to the scoring mode; `cov` is required for Mahalanobis.
pub fn score_clip(
    mode: ScoreMode,
    model: &AeModel,
    cov: Option<&DomainCovariances>,
    features: &FeatureMatrix,
) -> Result<f64, ScoringError> {
    match (mode, cov) {
        (ScoreMode::Simple, _) => score_simple(model, features),
        (ScoreMode::Mahalanobis, Some(cov)) => score_mahalanobis(model, cov, features),
        (ScoreMode::Mahalanobis, None) => Err(ScoringError::ConfigMismatch(
            "Mahalanobis scoring needs fitted covariances".into(),
        )),
    }
}

/// Covariance sidecar layout (little-endian):
///
/// ```text
/// magic "ASDCOVAR" | version u8 | D u32 | ridge_scale f64
/// source, then target: frames u64 | epsilon f64 | Σ f64[D·D] | (Σ+εI)⁻¹ f64[D·D]
/// ```
pub fn save_covariances(cov: &DomainCovariances, path: &Path) -> Result<(), ScoringError> {
    let mut b = Vec::new();
    b.extend_from_slice(COV_MAGIC);
    binio::put_u8(&mut b, COV_VERSION)?;
    binio::put_u32(&mut b, cov.dim() as u32)?;
    binio::put_f64(&mut b, cov.ridge_scale)?;
    for stat in [&cov.source, &cov.target] {
        binio::put_u64(&mut b, stat.frames as u64)?;
        binio::put_f64(&mut b, stat.epsilon)?;
        binio::put_f64s(&mut b, stat.covariance.iter().copied())?;
        binio::put_f64s(&mut b, stat.inverse.iter().copied())?;
    }
    fs::write(path, b)?;
    Ok(())
}

pub fn load_covariances(path: &Path) -> Result<DomainCovariances, ScoringError> {
    let bytes = binio::read_all(path)?;
    let corrupt = |m: &str| ScoringError::CorruptFile(m.to_string());
    let trunc = || corrupt("truncated");
    let mut r = Reader::new(&bytes);
    if r.bytes(8) != Some(COV_MAGIC.as_slice()) {
        return Err(corrupt("bad magic"));
    }
    let version = r.u8().ok_or_else(trunc)?;
    if version != COV_VERSION {
        return Err(ScoringError::VersionMismatch {
            found: version,
            expected: COV_VERSION,
        });
    }
    let d = r.u32().ok_or_else(trunc)? as usize;
    let ridge_scale = r.f64().ok_or_else(trunc)?;
    let mut read_stat = || -> Result<DomainStat, ScoringError> {
        let frames = r.u64().ok_or_else(trunc)? as usize;
        let epsilon = r.f64().ok_or_else(trunc)?;
        let n = d.checked_mul(d).ok_or_else(trunc)?;
        let covariance = Array2::from_shape_vec((d, d), r.f64s(n).ok_or_else(trunc)?)
            .map_err(|_| corrupt("shape"))?;
        let inverse = Array2::from_shape_vec((d, d), r.f64s(n).ok_or_else(trunc)?)
            .map_err(|_| corrupt("shape"))?;
        Ok(DomainStat {
            covariance,
            epsilon,
            inverse,
            frames,
        })
    };
    let source = read_stat()?;
    let target = read_stat()?;
    if !r.is_empty() {
        return Err(corrupt("trailing bytes"));
    }
    Ok(DomainCovariances {
        source,
        target,
        ridge_scale,
    })
}

/// Decision threshold φ and how it was obtained.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Threshold {
    pub value: f64,
    pub method: String,
    pub quantile: f64,
    pub samples: usize,
}

/// φ = empirical `q`-quantile of training-clip scores, linearly interpolated
/// between order statistics (h = (n−1)·q).
pub fn calibrate_threshold(training_scores: &[f64], q: f64) -> Result<Threshold, ScoringError> {
    if training_scores.is_empty() {
        return Err(ScoringError::EmptyScores);
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(ScoringError::InvalidCalibration(format!(
            "quantile {q} must lie in (0, 1)"
        )));
    }
    if training_scores.iter().any(|s| !s.is_finite()) {
        return Err(ScoringError::InvalidCalibration(
            "training scores must be finite".into(),
        ));
    }
    let mut sorted = training_scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    let value = if lo + 1 < sorted.len() {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    } else {
        sorted[lo]
    };
    Ok(Threshold {
        value,
        method: "quantile-linear".into(),
        quantile: q,
        samples: sorted.len(),
    })
}

/// Anomaly iff `score > φ`; equality is normal.
pub fn decide(score: f64, threshold: &Threshold) -> Decision {
    if score > threshold.value {
        Decision::Anomaly
    } else {
        Decision::Normal
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autoencoder::{identity_model, init_model, AeArchitecture, Activation};
    use crate::features::FeatureConfig;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn features(vectors: Array2<f64>) -> FeatureMatrix {
        let dim = vectors.ncols();
        FeatureMatrix {
            vectors,
            config: FeatureConfig {
                n_mels: dim,
                context_frames: 1,
                ..FeatureConfig::default()
            },
        }
    }

    fn random(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
    }

    fn small_model(dim: usize, seed: u64) -> AeModel {
        init_model(
            &AeArchitecture {
                input_dim: dim,
                encoder: vec![5],
                bottleneck: 2,
                activation: Activation::Relu,
                batch_norm: true,
            },
            seed,
        )
        .unwrap()
    }

    #[test]
    fn identity_model_scores_zero() {
        let m = identity_model(4);
        assert_eq!(score_simple(&m, &features(random(9, 4, 1))).unwrap(), 0.0);
    }

    #[test]
    fn simple_score_hand_example() {
        let mut m = identity_model(2);
        m.layers[1].weight.fill(0.0);
        let s = score_simple(&m, &features(array![[1.0, 2.0]])).unwrap();
        assert_eq!(s, 2.5);
    }

    #[test]
    fn simple_score_is_invariant_to_self_concatenation() {
        let m = small_model(4, 3);
        let x = random(11, 4, 2);
        let xx = ndarray::concatenate(Axis(0), &[x.view(), x.view()]).unwrap();
        let a = score_simple(&m, &features(x)).unwrap();
        let b = score_simple(&m, &features(xx)).unwrap();
        assert!((a - b).abs() <= 1e-12 * a);
    }

    #[test]
    fn config_mismatch() {
        let m = small_model(4, 0).with_feature_config(FeatureConfig::default());
        assert!(matches!(
            score_simple(&m, &features(random(3, 4, 0))),
            Err(ScoringError::ConfigMismatch(_))
        ));
        let m = small_model(4, 0);
        assert!(matches!(
            score_simple(&m, &features(random(3, 5, 0))),
            Err(ScoringError::ConfigMismatch(_))
        ));
    }

    #[test]
    fn covariance_of_standard_normal_residuals_is_near_identity() {
        // A decoder with zero weights reconstructs 0, so residuals equal the inputs.
        let mut m = identity_model(4);
        m.layers[1].weight.fill(0.0);
        let fit = fit_covariances(&m, random(10_000, 4, 5).view(), random(50, 4, 6).view(), 1e-3)
            .unwrap();
        for ((i, j), v) in fit.source.covariance.indexed_iter() {
            let expected = if i == j { 1.0 } else { 0.0 };
            assert!((v - expected).abs() < 0.1, "({i},{j}) = {v}");
        }
        assert_eq!(fit.source.frames, 10_000);
    }

    #[test]
    fn identical_target_frames_rely_on_the_ridge() {
        let m = identity_model(3);
        let row = array![[0.5, -1.0, 2.0]];
        let twice = ndarray::concatenate(Axis(0), &[row.view(), row.view()]).unwrap();
        let fit = fit_covariances(&m, random(100, 3, 1).view(), twice.view(), 1e-3).unwrap();
        assert!(fit.target.covariance.iter().all(|&v| v == 0.0));
        let reg = &fit.target.covariance + &(Array2::<f64>::eye(3) * fit.target.epsilon);
        let check = reg.dot(&fit.target.inverse) - Array2::<f64>::eye(3);
        assert!(check.iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn zero_ridge_on_rank_deficient_residuals_fails() {
        let m = identity_model(4);
        // Rank-1 residuals.
        let coeff = random(20, 1, 3);
        let dir = array![[1.0, 2.0, -1.0, 0.5]];
        let frames = coeff.dot(&dir);
        assert!(matches!(
            fit_covariances(&m, frames.view(), random(20, 4, 4).view(), 0.0),
            Err(ScoringError::SingularAfterRidge { domain: "source", .. })
        ));
        let one = random(1, 4, 0);
        assert!(matches!(
            fit_covariances(&m, random(5, 4, 0).view(), one.view(), 1e-3),
            Err(ScoringError::TooFewFrames { domain: "target", got: 1 })
        ));
    }

    #[test]
    fn identity_covariances_reproduce_simple_score() {
        let d = 5;
        let cov = DomainCovariances::from_covariances(Array2::eye(d), Array2::eye(d), 0.0).unwrap();
        for seed in 0..10 {
            let m = small_model(d, seed);
            let f = features(random(13, d, 50 + seed));
            let a = score_simple(&m, &f).unwrap();
            let b = score_mahalanobis(&m, &cov, &f).unwrap();
            assert!((a - b).abs() <= 1e-9 * a.abs(), "{a} vs {b}");
        }
    }

    #[test]
    fn minimum_branch_selects_the_wider_covariance() {
        let d = 3;
        let cov = DomainCovariances::from_covariances(Array2::eye(d) * 4.0, Array2::eye(d), 0.0)
            .unwrap();
        let m = small_model(d, 1);
        let f = features(random(17, d, 2));
        let e = residuals(&m, f.vectors.view()).unwrap();
        // Brute force: per-frame min of eᵀe/4 and eᵀe.
        let expected: f64 = e
            .rows()
            .into_iter()
            .map(|r| {
                let q: f64 = r.iter().map(|v| v * v).sum();
                (q / 4.0).min(q)
            })
            .sum::<f64>()
            / e.len() as f64;
        let got = score_mahalanobis(&m, &cov, &f).unwrap();
        assert!((got - expected).abs() <= 1e-12 * expected);
        let simple = score_simple(&m, &f).unwrap();
        assert!((got - simple / 4.0).abs() <= 1e-12 * simple);
    }

    #[test]
    fn zero_residuals_score_zero() {
        let cov = DomainCovariances::from_covariances(Array2::eye(3) * 2.0, Array2::eye(3), 0.0)
            .unwrap();
        let m = identity_model(3);
        assert_eq!(score_mahalanobis(&m, &cov, &features(random(4, 3, 0))).unwrap(), 0.0);
    }

    #[test]
    fn covariance_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.bin");
        let m = small_model(4, 2);
        let cov = fit_covariances(&m, random(40, 4, 1).view(), random(6, 4, 2).view(), 1e-3).unwrap();
        save_covariances(&cov, &p).unwrap();
        assert_eq!(load_covariances(&p).unwrap(), cov);
        let bytes = fs::read(&p).unwrap();
        fs::write(&p, &bytes[..bytes.len() - 8]).unwrap();
        assert!(matches!(load_covariances(&p), Err(ScoringError::CorruptFile(_))));
        let mut bumped = bytes;
        bumped[8] = 9;
        fs::write(&p, &bumped).unwrap();
        assert!(matches!(load_covariances(&p), Err(ScoringError::VersionMismatch { .. })));
    }

    #[test]
    fn quantile_examples() {
        let scores: Vec<f64> = (1..=100).map(f64::from).collect();
        let t = calibrate_threshold(&scores, 0.9).unwrap();
        assert!((t.value - 90.1).abs() < 1e-12);
        assert_eq!(t.samples, 100);
        assert_eq!(calibrate_threshold(&[3.5; 7], 0.9).unwrap().value, 3.5);
        for q in [0.01, 0.5, 0.99] {
            assert_eq!(calibrate_threshold(&[-2.0], q).unwrap().value, -2.0);
        }
        assert!(matches!(calibrate_threshold(&[], 0.9), Err(ScoringError::EmptyScores)));
        assert!(matches!(
            calibrate_threshold(&[1.0], 1.0),
            Err(ScoringError::InvalidCalibration(_))
        ));
    }

    #[test]
    fn strict_decision_rule() {
        let t = Threshold {
            value: 1.0,
            method: "fixed".into(),
            quantile: 0.9,
            samples: 1,
        };
        assert_eq!(decide(2.0, &t), Decision::Anomaly);
        assert_eq!(decide(1.0, &t), Decision::Normal);
        assert_eq!(decide(0.5, &t), Decision::Normal);
    }

    proptest! {
        #[test]
        fn decide_is_monotone(phi in -1e3f64..1e3, a in -1e3f64..1e3, b in -1e3f64..1e3) {
            let t = Threshold { value: phi, method: "fixed".into(), quantile: 0.5, samples: 1 };
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            if decide(lo, &t) == Decision::Anomaly {
                prop_assert_eq!(decide(hi, &t), Decision::Anomaly);
            }
        }

        #[test]
        fn fitted_covariances_are_symmetric_positive_definite(seed in 0u64..500, n in 3usize..30) {
            let d = 4;
            let m = small_model(d, seed);
            let cov = fit_covariances(&m, random(n, d, seed).view(), random(2, d, seed + 1).view(), 1e-3).unwrap();
            for stat in [&cov.source, &cov.target] {
                let reg = &stat.covariance + &(Array2::<f64>::eye(d) * stat.epsilon);
                prop_assert_eq!(&reg, &reg.t().to_owned());
                prop_assert!(cholesky(&reg).is_some());
                for probe in 0..5u64 {
                    let x = random(1, d, seed * 31 + probe).row(0).to_owned();
                    prop_assert!(x.dot(&reg.dot(&x)) > 0.0);
                }
            }
        }

        #[test]
        fn mahalanobis_is_bounded_by_each_branch(seed in 0u64..500) {
            let d = 3;
            let m = small_model(d, seed);
            let cov = fit_covariances(&m, random(30, d, seed).view(), random(5, d, seed + 7).view(), 1e-3).unwrap();
            let f = features(random(9, d, seed + 13));
            let score = score_mahalanobis(&m, &cov, &f).unwrap();
            let e = residuals(&m, f.vectors.view()).unwrap();
            let (ds, dt) = mahalanobis_terms(&cov, e.view());
            let norm = e.len() as f64;
            prop_assert!(score <= ds.sum() / norm * (1.0 + 1e-12));
            prop_assert!(score <= dt.sum() / norm * (1.0 + 1e-12));
        }
    }
}

//! Dense autoencoder over context vectors.
//!
//! Topology: `D → encoder… → bottleneck → reversed encoder… → D`. Every hidden
//! layer is `linear → [batch-norm] → activation`; the output layer is linear.
//! Training minimizes the per-dimension mean squared reconstruction error with
//! Adam, using gradients from an explicit backward pass.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::binio::{self, Reader};
use crate::features::FeatureConfig;

pub const MODEL_MAGIC: &[u8; 8] = b"ASDAEMDL";
pub const MODEL_VERSION: u8 = 1;

const BN_EPS: f64 = 1e-5;
const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Error)]
pub enum AeError {
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
    #[error("shape mismatch: expected width {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("invalid training config: {0}")]
    InvalidTrainConfig(String),
    #[error("corrupt model file: {0}")]
    CorruptFile(String),
    #[error("model file version {found}, this build reads version {expected}")]
    VersionMismatch { found: u8, expected: u8 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    /// Linear pass-through; used for identity fixtures.
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    fn grad(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }

    fn code(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Identity => 1,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(Activation::Relu),
            1 => Some(Activation::Identity),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AeArchitecture {
    pub input_dim: usize,
    pub encoder: Vec<usize>,
    pub bottleneck: usize,
    pub activation: Activation,
    pub batch_norm: bool,
}

impl AeArchitecture {
    /// 128-128-128-128 → 8 → mirror, ReLU, batch-norm on hidden layers.
    pub fn baseline(input_dim: usize) -> Self {
        Self {
            input_dim,
            encoder: vec![128; 4],
            bottleneck: 8,
            activation: Activation::Relu,
            batch_norm: true,
        }
    }

    /// Widths of the hidden layers in forward order.
    pub fn hidden_widths(&self) -> Vec<usize> {
        let mut w = self.encoder.clone();
        w.push(self.bottleneck);
        w.extend(self.encoder.iter().rev());
        w
    }

    /// `(fan_in, fan_out)` of every dense layer, output layer last.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut dims = vec![self.input_dim];
        dims.extend(self.hidden_widths());
        dims.push(self.input_dim);
        dims.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn validate(&self) -> Result<(), AeError> {
        if self.input_dim == 0 || self.bottleneck == 0 || self.encoder.iter().any(|&w| w == 0) {
            return Err(AeError::InvalidArchitecture(
                "all widths must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
}

impl BatchNorm {
    fn new(width: usize) -> Self {
        Self {
            gamma: Array1::ones(width),
            beta: Array1::zeros(width),
            running_mean: Array1::zeros(width),
            running_var: Array1::ones(width),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// fan_in × fan_out.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub batch_norm: Option<BatchNorm>,
    /// `None` on the output layer.
    pub activation: Option<Activation>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AeModel {
    pub arch: AeArchitecture,
    pub layers: Vec<DenseLayer>,
    /// Feature extraction the model was trained with, if any.
    pub feature_config: Option<FeatureConfig>,
    pub seed: u64,
}

/// Builds a model with weights drawn uniformly from ±√(6/fan_in), zero
/// biases, unit batch-norm scale and zero shift.
pub fn init_model(arch: &AeArchitecture, seed: u64) -> Result<AeModel, AeError> {
    arch.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shapes = arch.layer_shapes();
    let last = shapes.len() - 1;
    let layers = shapes
        .iter()
        .enumerate()
        .map(|(i, &(fan_in, fan_out))| {
            let bound = (6.0 / fan_in as f64).sqrt();
            let weight =
                Array2::from_shape_simple_fn((fan_in, fan_out), || rng.random_range(-bound..=bound));
            let hidden = i < last;
            DenseLayer {
                weight,
                bias: Array1::zeros(fan_out),
                batch_norm: (hidden && arch.batch_norm).then(|| BatchNorm::new(fan_out)),
                activation: hidden.then_some(arch.activation),
            }
        })
        .collect();
    Ok(AeModel {
        arch: arch.clone(),
        layers,
        feature_config: None,
        seed,
    })
}

/// Per-layer parameter gradients, laid out like [`DenseLayer`].
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub gamma: Option<Array1<f64>>,
    pub beta: Option<Array1<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrads>,
}

impl Gradients {
    /// All gradient components in the same order as [`AeModel::params`].
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for g in &self.layers {
            out.extend(g.weight.iter());
            out.extend(g.bias.iter());
            if let (Some(gm), Some(bt)) = (&g.gamma, &g.beta) {
                out.extend(gm.iter());
                out.extend(bt.iter());
            }
        }
        out
    }
}

/// Values kept from the training-mode forward pass for backpropagation.
struct LayerCache {
    input: Array2<f64>,
    /// Normalized pre-activation (batch-norm layers only).
    xhat: Option<Array2<f64>>,
    inv_std: Option<Array1<f64>>,
    batch_mean: Option<Array1<f64>>,
    batch_var: Option<Array1<f64>>,
    /// Input to the activation.
    pre_act: Array2<f64>,
}

impl AeModel {
    pub fn input_dim(&self) -> usize {
        self.arch.input_dim
    }

    pub fn with_feature_config(mut self, cfg: FeatureConfig) -> Self {
        self.feature_config = Some(cfg);
        self
    }

    /// Mutable views of every trainable parameter array, in a fixed order.
    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for layer in &mut self.layers {
            out.push(layer.weight.as_slice_mut().expect("standard layout"));
            out.push(layer.bias.as_slice_mut().expect("standard layout"));
            if let Some(bn) = &mut layer.batch_norm {
                out.push(bn.gamma.as_slice_mut().expect("standard layout"));
                out.push(bn.beta.as_slice_mut().expect("standard layout"));
            }
        }
        out
    }

    /// All trainable parameters flattened, matching [`Gradients::flat`].
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for layer in &self.layers {
            out.extend(layer.weight.iter());
            out.extend(layer.bias.iter());
            if let Some(bn) = &layer.batch_norm {
                out.extend(bn.gamma.iter());
                out.extend(bn.beta.iter());
            }
        }
        out
    }

    fn check_width(&self, batch: &ArrayView2<f64>) -> Result<(), AeError> {
        if batch.ncols() != self.arch.input_dim {
            return Err(AeError::ShapeMismatch {
                expected: self.arch.input_dim,
                got: batch.ncols(),
            });
        }
        Ok(())
    }

    /// Inference-mode reconstruction using frozen batch-norm statistics.
    pub fn forward(&self, batch: ArrayView2<f64>) -> Result<Array2<f64>, AeError> {
        self.check_width(&batch)?;
        let mut x = batch.to_owned();
        for layer in &self.layers {
            let mut z = x.dot(&layer.weight) + &layer.bias;
            if let Some(bn) = &layer.batch_norm {
                let scale = Zip::from(&bn.gamma)
                    .and(&bn.running_var)
                    .map_collect(|g, v| g / (v + BN_EPS).sqrt());
                let shift = &bn.beta - &(&bn.running_mean * &scale);
                z = z * &scale + &shift;
            }
            if let Some(act) = layer.activation {
                z.mapv_inplace(|v| act.apply(v));
            }
            x = z;
        }
        Ok(x)
    }

    fn forward_train(&self, batch: ArrayView2<f64>) -> (Array2<f64>, Vec<LayerCache>) {
        let mut x = batch.to_owned();
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let z = x.dot(&layer.weight) + &layer.bias;
            let (pre_act, xhat, inv_std, mean, var) = match &layer.batch_norm {
                Some(bn) => {
                    let mean = z.mean_axis(Axis(0)).expect("non-empty batch");
                    let centered = &z - &mean;
                    let var = centered.mapv(|v| v * v).mean_axis(Axis(0)).unwrap();
                    let inv_std = var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
                    let xhat = centered * &inv_std;
                    let y = &xhat * &bn.gamma + &bn.beta;
                    (y, Some(xhat), Some(inv_std), Some(mean), Some(var))
                }
                None => (z, None, None, None, None),
            };
            let out = match layer.activation {
                Some(act) => pre_act.mapv(|v| act.apply(v)),
                None => pre_act.clone(),
            };
            caches.push(LayerCache {
                input: x,
                xhat,
                inv_std,
                batch_mean: mean,
                batch_var: var,
                pre_act,
            });
            x = out;
        }
        (x, caches)
    }

    fn backward(&self, caches: &[LayerCache], mut grad_out: Array2<f64>) -> Gradients {
        let mut grads = Vec::with_capacity(self.layers.len());
        for (layer, cache) in self.layers.iter().zip(caches).rev() {
            if let Some(act) = layer.activation {
                Zip::from(&mut grad_out)
                    .and(&cache.pre_act)
                    .for_each(|g, &z| *g *= act.grad(z));
            }
            let (dz, gamma, beta) = match (&layer.batch_norm, &cache.xhat, &cache.inv_std) {
                (Some(bn), Some(xhat), Some(inv_std)) => {
                    let n = grad_out.nrows() as f64;
                    let dgamma = (&grad_out * xhat).sum_axis(Axis(0));
                    let dbeta = grad_out.sum_axis(Axis(0));
                    let dxhat = &grad_out * &bn.gamma;
                    let sum_dxhat = dxhat.sum_axis(Axis(0));
                    let sum_dxhat_xhat = (&dxhat * xhat).sum_axis(Axis(0));
                    let dz = (dxhat * n - &sum_dxhat - &(xhat * &sum_dxhat_xhat)) * &(inv_std / n);
                    (dz, Some(dgamma), Some(dbeta))
                }
                _ => (grad_out, None, None),
            };
            let dw = cache.input.t().dot(&dz);
            let db = dz.sum_axis(Axis(0));
            grad_out = dz.dot(&layer.weight.t());
            grads.push(LayerGrads {
                weight: dw,
                bias: db,
                gamma,
                beta,
            });
        }
        grads.reverse();
        Gradients { layers: grads }
    }

    /// Training-mode loss `(1/(B·D))·Σ‖ψ − r(ψ)‖²` and its exact gradients.
    ///
    /// Batch-norm layers normalize with the batch's own statistics. The model
    /// is not modified.
    pub fn loss_and_gradients(&self, batch: ArrayView2<f64>) -> Result<(f64, Gradients), AeError> {
        self.check_width(&batch)?;
        let (loss, grads, _) = self.loss_grads_caches(batch)?;
        Ok((loss, grads))
    }

    fn loss_grads_caches(
        &self,
        batch: ArrayView2<f64>,
    ) -> Result<(f64, Gradients, Vec<LayerCache>), AeError> {
        if batch.nrows() == 0 {
            return Err(AeError::ShapeMismatch {
                expected: self.arch.input_dim,
                got: 0,
            });
        }
        let (recon, caches) = self.forward_train(batch);
        let diff = recon - &batch;
        let count = diff.len() as f64;
        let loss = diff.iter().map(|d| d * d).sum::<f64>() / count;
        if !loss.is_finite() {
            return Err(AeError::NonFiniteLoss { epoch: 0 });
        }
        let grad_out = diff * (2.0 / count);
        let grads = self.backward(&caches, grad_out);
        Ok((loss, grads, caches))
    }

    fn update_running_stats(&mut self, caches: &[LayerCache], batch_rows: usize) {
        let n = batch_rows as f64;
        let unbias = if batch_rows > 1 { n / (n - 1.0) } else { 1.0 };
        for (layer, cache) in self.layers.iter_mut().zip(caches) {
            if let (Some(bn), Some(mean), Some(var)) =
                (&mut layer.batch_norm, &cache.batch_mean, &cache.batch_var)
            {
                Zip::from(&mut bn.running_mean)
                    .and(mean)
                    .for_each(|r, &m| *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * m);
                Zip::from(&mut bn.running_var)
                    .and(var)
                    .for_each(|r, &v| *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * v * unbias);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 256,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), AeError> {
        let bad = |m: &str| Err(AeError::InvalidTrainConfig(m.to_string()));
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("adam betas must be in [0, 1)");
        }
        if !(self.epsilon > 0.0) {
            return bad("adam epsilon must be positive");
        }
        Ok(())
    }
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: i32,
}

impl Adam {
    fn new(model: &mut AeModel) -> Self {
        let sizes: Vec<usize> = model.params_mut().iter().map(|p| p.len()).collect();
        Self {
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        }
    }

    fn update(&mut self, model: &mut AeModel, grads: &Gradients, cfg: &TrainConfig) {
        self.step += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.step);
        let bc2 = 1.0 - cfg.beta2.powi(self.step);
        let flat = grads.flat();
        let mut offset = 0;
        for ((param, m), v) in model.params_mut().into_iter().zip(&mut self.m).zip(&mut self.v) {
            let grad = &flat[offset..offset + param.len()];
            offset += param.len();
            for i in 0..param.len() {
                let g = grad[i];
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                param[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
            }
        }
    }
}

/// Trains with Adam on mini-batches of rows of `frames`.
///
/// Returns the trained model and the mean training loss of each epoch.
/// Shuffling order comes from `cfg.seed`, so the result is a pure function of
/// the inputs.
pub fn train(
    model: &AeModel,
    frames: ArrayView2<f64>,
    cfg: &TrainConfig,
) -> Result<(AeModel, Vec<f64>), AeError> {
    cfg.validate()?;
    model.check_width(&frames)?;
    if frames.nrows() < cfg.batch_size {
        return Err(AeError::InvalidTrainConfig(format!(
            "{} frames is fewer than batch_size {}",
            frames.nrows(),
            cfg.batch_size
        )));
    }
    let mut model = model.clone();
    let mut adam = Adam::new(&mut model);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..frames.nrows()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        if cfg.shuffle {
            order.shuffle(&mut rng);
        }
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch = frames.select(Axis(0), chunk);
            let (loss, grads, caches) = model
                .loss_grads_caches(batch.view())
                .map_err(|_| AeError::NonFiniteLoss { epoch })?;
            model.update_running_stats(&caches, chunk.len());
            adam.update(&mut model, &grads, cfg);
            total += loss * chunk.len() as f64;
        }
        let mean = total / frames.nrows() as f64;
        if !mean.is_finite() || model.params().iter().any(|p| !p.is_finite()) {
            return Err(AeError::NonFiniteLoss { epoch });
        }
        curve.push(mean);
    }
    Ok((model, curve))
}

/// Model file layout (all integers and reals little-endian):
///
/// ```text
/// magic "ASDAEMDL" | version u8 | seed u64
/// has_features u8 [sample_rate u32 | fft u32 | hop u32 | n_mels u32 | context u32
///                  | fmin f64 | fmax f64 | log_floor f64]
/// input_dim u32 | n_encoder u32 | encoder widths u32… | bottleneck u32
/// | activation u8 | batch_norm u8
/// per layer: weight f64[fan_in·fan_out] (row-major) | bias f64[fan_out]
///            [gamma | beta | running_mean | running_var, each f64[fan_out]]
/// ```
pub fn save_model(model: &AeModel, path: &Path) -> Result<(), AeError> {
    fs::write(path, encode_model(model)?)?;
    Ok(())
}

pub fn encode_model(model: &AeModel) -> Result<Vec<u8>, AeError> {
    let mut b = Vec::new();
    b.extend_from_slice(MODEL_MAGIC);
    binio::put_u8(&mut b, MODEL_VERSION)?;
    binio::put_u64(&mut b, model.seed)?;
    match &model.feature_config {
        Some(fc) => {
            binio::put_u8(&mut b, 1)?;
            binio::put_u32(&mut b, fc.sample_rate_hz)?;
            for v in [fc.fft_size, fc.hop, fc.n_mels, fc.context_frames] {
                binio::put_u32(&mut b, v as u32)?;
            }
            binio::put_f64s(&mut b, [fc.mel_fmin_hz, fc.mel_fmax_hz, fc.log_floor])?;
        }
        None => binio::put_u8(&mut b, 0)?,
    }
    let a = &model.arch;
    binio::put_u32(&mut b, a.input_dim as u32)?;
    binio::put_u32(&mut b, a.encoder.len() as u32)?;
    for &w in &a.encoder {
        binio::put_u32(&mut b, w as u32)?;
    }
    binio::put_u32(&mut b, a.bottleneck as u32)?;
    binio::put_u8(&mut b, a.activation.code())?;
    binio::put_u8(&mut b, u8::from(a.batch_norm))?;
    for layer in &model.layers {
        binio::put_f64s(&mut b, layer.weight.iter().copied())?;
        binio::put_f64s(&mut b, layer.bias.iter().copied())?;
        if let Some(bn) = &layer.batch_norm {
            for arr in [&bn.gamma, &bn.beta, &bn.running_mean, &bn.running_var] {
                binio::put_f64s(&mut b, arr.iter().copied())?;
            }
        }
    }
    Ok(b)
}

pub fn load_model(path: &Path) -> Result<AeModel, AeError> {
    decode_model(&binio::read_all(path)?)
}

pub fn decode_model(bytes: &[u8]) -> Result<AeModel, AeError> {
    let corrupt = |m: &str| AeError::CorruptFile(m.to_string());
    let trunc = || corrupt("truncated");
    let mut r = Reader::new(bytes);
    if r.bytes(8) != Some(MODEL_MAGIC.as_slice()) {
        return Err(corrupt("bad magic"));
    }
    let version = r.u8().ok_or_else(trunc)?;
    if version != MODEL_VERSION {
        return Err(AeError::VersionMismatch {
            found: version,
            expected: MODEL_VERSION,
        });
    }
    let seed = r.u64().ok_or_else(trunc)?;
    let feature_config = match r.u8().ok_or_else(trunc)? {
        0 => None,
        1 => {
            let sample_rate_hz = r.u32().ok_or_else(trunc)?;
            let mut ints = [0usize; 4];
            for v in &mut ints {
                *v = r.u32().ok_or_else(trunc)? as usize;
            }
            let reals = r.f64s(3).ok_or_else(trunc)?;
            Some(FeatureConfig {
                sample_rate_hz,
                fft_size: ints[0],
                hop: ints[1],
                n_mels: ints[2],
                context_frames: ints[3],
                mel_fmin_hz: reals[0],
                mel_fmax_hz: reals[1],
                log_floor: reals[2],
            })
        }
        _ => return Err(corrupt("bad feature flag")),
    };
    let input_dim = r.u32().ok_or_else(trunc)? as usize;
    let n_enc = r.u32().ok_or_else(trunc)? as usize;
    if n_enc > bytes.len() {
        return Err(corrupt("implausible encoder depth"));
    }
    let encoder = (0..n_enc)
        .map(|_| r.u32().map(|w| w as usize).ok_or_else(trunc))
        .collect::<Result<Vec<_>, _>>()?;
    let bottleneck = r.u32().ok_or_else(trunc)? as usize;
    let activation = Activation::from_code(r.u8().ok_or_else(trunc)?)
        .ok_or_else(|| corrupt("bad activation"))?;
    let batch_norm = match r.u8().ok_or_else(trunc)? {
        0 => false,
        1 => true,
        _ => return Err(corrupt("bad batch-norm flag")),
    };
    let arch = AeArchitecture {
        input_dim,
        encoder,
        bottleneck,
        activation,
        batch_norm,
    };
    arch.validate().map_err(|_| corrupt("invalid architecture"))?;
    let shapes = arch.layer_shapes();
    let last = shapes.len() - 1;
    let mut layers = Vec::with_capacity(shapes.len());
    for (i, &(fan_in, fan_out)) in shapes.iter().enumerate() {
        let n = fan_in.checked_mul(fan_out).ok_or_else(trunc)?;
        let weight = Array2::from_shape_vec((fan_in, fan_out), r.f64s(n).ok_or_else(trunc)?)
            .map_err(|_| corrupt("weight shape"))?;
        let bias = Array1::from(r.f64s(fan_out).ok_or_else(trunc)?);
        let hidden = i < last;
        let bn = if hidden && batch_norm {
            let mut take = || r.f64s(fan_out).map(Array1::from).ok_or_else(trunc);
            Some(BatchNorm {
                gamma: take()?,
                beta: take()?,
                running_mean: take()?,
                running_var: take()?,
            })
        } else {
            None
        };
        layers.push(DenseLayer {
            weight,
            bias,
            batch_norm: bn,
            activation: hidden.then_some(activation),
        });
    }
    if !r.is_empty() {
        return Err(corrupt("trailing bytes"));
    }
    Ok(AeModel {
        arch,
        layers,
        feature_config,
        seed,
    })
}

/// Identity fixture: `encoder = []`, bottleneck = D, linear activations and
/// identity weights, so `forward(x) == x`.
pub fn identity_model(dim: usize) -> AeModel {
    let arch = AeArchitecture {
        input_dim: dim,
        encoder: Vec::new(),
        bottleneck: dim,
        activation: Activation::Identity,
        batch_norm: false,
    };
    let mut model = init_model(&arch, 0).expect("valid architecture");
    for layer in &mut model.layers {
        layer.weight = Array2::eye(dim);
    }
    model
}

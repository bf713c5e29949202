//! Synthetic machine-sound corpora in the challenge directory layout.
//!
//! A clip is a harmonic stack plus band-limited noise; target-domain clips
//! shift the fundamental and the noise level; anomalous clips add Poisson-timed
//! broadband bursts on top of exactly the signal the paired normal clip would
//! have had. Every clip draws from its own ChaCha8 stream keyed by
//! (machine, split, domain, condition, index), so output is reproducible and
//! independent of generation order.

use std::cell::RefCell;
use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{self, AudioError};
use crate::datasets::{
    scan_corpus, ClipName, CorpusManifest, DatasetError, Domain, Label, Split,
};
use crate::SAMPLE_RATE_HZ;

/// RMS of the harmonic stack before any peak limiting.
pub const TONAL_RMS: f64 = 0.03;
/// Peak ceiling, in full-scale units.
pub const PEAK_LIMIT: f64 = 0.9;
/// Length of one anomaly burst.
pub const BURST_SECONDS: f64 = 0.05;
/// Relative per-clip jitter of the fundamental.
const F0_JITTER: f64 = 0.01;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid machine spec {machine}: {reason}")]
    InvalidSpec { machine: String, reason: String },
    #[error("invalid synth config: {0}")]
    InvalidConfig(String),
    #[error("I/O failure at {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetShift {
    pub fundamental_scale: f64,
    pub snr_delta_db: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnomalySpec {
    pub burst_rate_hz: f64,
    /// Level of the burst-plus-tone mixture above the tone alone, in dB.
    /// Non-positive gains produce no bursts.
    pub burst_gain_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MachineSpec {
    pub name: String,
    pub fundamental_hz: f64,
    pub n_harmonics: usize,
    /// Amplitude ratio between consecutive harmonics.
    pub harmonic_decay: f64,
    pub noise_band: (f64, f64),
    pub snr_db: f64,
    pub clip_seconds: f64,
    pub target_shift: TargetShift,
    pub anomaly: AnomalySpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthCounts {
    pub train_source: usize,
    pub train_target: usize,
    pub test_normal_per_domain: usize,
    pub test_anomaly_per_domain: usize,
}

impl SynthCounts {
    pub fn clips_per_machine(&self) -> usize {
        self.train_source
            + self.train_target
            + 2 * (self.test_normal_per_domain + self.test_anomaly_per_domain)
    }
}

impl Default for SynthCounts {
    /// Challenge-sized partitions: 990/10 training clips, 200 test clips.
    fn default() -> Self {
        Self {
            train_source: 990,
            train_target: 10,
            test_normal_per_domain: 50,
            test_anomaly_per_domain: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub machines: Vec<MachineSpec>,
    pub counts: SynthCounts,
}

impl MachineSpec {
    fn invalid(&self, reason: impl Into<String>) -> SynthError {
        SynthError::InvalidSpec {
            machine: self.name.clone(),
            reason: reason.into(),
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let nyquist = f64::from(SAMPLE_RATE_HZ) / 2.0;
        if self.name.is_empty() || self.name.contains(['/', '\\']) || self.name.starts_with('.') {
            return Err(self.invalid("name must be a plain directory name"));
        }
        if !(self.fundamental_hz > 0.0 && self.fundamental_hz < nyquist) {
            return Err(self.invalid(format!("fundamental_hz must lie in (0, {nyquist})")));
        }
        let shifted = self.fundamental_hz * self.target_shift.fundamental_scale * (1.0 + F0_JITTER);
        if !(self.target_shift.fundamental_scale > 0.0 && shifted < nyquist) {
            return Err(self.invalid("target fundamental must lie below Nyquist"));
        }
        if self.n_harmonics == 0 {
            return Err(self.invalid("n_harmonics must be at least 1"));
        }
        if !(self.harmonic_decay > 0.0 && self.harmonic_decay <= 1.0) {
            return Err(self.invalid("harmonic_decay must lie in (0, 1]"));
        }
        let (lo, hi) = self.noise_band;
        if !(lo >= 0.0 && lo < hi && hi <= nyquist) {
            return Err(self.invalid(format!("noise band must satisfy 0 <= low < high <= {nyquist}")));
        }
        if !(6.0..=18.0).contains(&self.clip_seconds) {
            return Err(self.invalid("clip_seconds must lie in [6, 18]"));
        }
        if !self.snr_db.is_finite() || !self.target_shift.snr_delta_db.is_finite() {
            return Err(self.invalid("SNR values must be finite"));
        }
        if !(self.anomaly.burst_rate_hz >= 0.0 && self.anomaly.burst_rate_hz.is_finite()) {
            return Err(self.invalid("burst_rate_hz must be finite and non-negative"));
        }
        if self.anomaly.burst_gain_db.is_nan() {
            return Err(self.invalid("burst_gain_db is NaN"));
        }
        Ok(())
    }

    pub fn n_samples(&self) -> usize {
        (self.clip_seconds * f64::from(SAMPLE_RATE_HZ)).round() as usize
    }

    /// Nominal fundamental in a domain, before per-clip jitter.
    pub fn domain_fundamental(&self, domain: Domain) -> f64 {
        match domain {
            Domain::Target => self.fundamental_hz * self.target_shift.fundamental_scale,
            _ => self.fundamental_hz,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.machines.is_empty() {
            return Err(SynthError::InvalidConfig("no machines".into()));
        }
        let c = &self.counts;
        if c.train_source == 0
            || c.train_target == 0
            || c.test_normal_per_domain == 0
            || c.test_anomaly_per_domain == 0
        {
            return Err(SynthError::InvalidConfig("all counts must be at least 1".into()));
        }
        let mut names = BTreeSet::new();
        for m in &self.machines {
            m.validate()?;
            if !names.insert(m.name.as_str()) {
                return Err(SynthError::InvalidConfig(format!("duplicate machine name {}", m.name)));
            }
        }
        Ok(())
    }

    /// Applies one burst gain to every machine.
    pub fn with_burst_gain_db(mut self, gain_db: f64) -> Self {
        for m in &mut self.machines {
            m.anomaly.burst_gain_db = gain_db;
        }
        self
    }

    /// Two short-clip machines with small counts, for tests and quick runs.
    /// Source and target share one distribution, so the domain label carries
    /// no acoustic shift here; [`SynthConfig::full`] has a real one.
    pub fn mini(seed: u64) -> Self {
        let spec = |name: &str, f0: f64, n: usize, decay: f64| MachineSpec {
            name: name.into(),
            fundamental_hz: f0,
            n_harmonics: n,
            harmonic_decay: decay,
            noise_band: (50.0, 7500.0),
            snr_db: 10.0,
            clip_seconds: 6.0,
            // No shift: the metric pools anomalies over both domains, so any
            // shift the model can see moves null-case AUCs away from 0.5.
            target_shift: TargetShift {
                fundamental_scale: 1.0,
                snr_delta_db: 0.0,
            },
            anomaly: AnomalySpec {
                burst_rate_hz: 2.0,
                burst_gain_db: 12.0,
            },
        };
        Self {
            seed,
            machines: vec![spec("fan", 120.0, 8, 0.7), spec("valve", 310.0, 5, 0.6)],
            counts: SynthCounts {
                train_source: 20,
                train_target: 2,
                test_normal_per_domain: 100,
                test_anomaly_per_domain: 100,
            },
        }
    }

    /// Seven machine types with challenge-sized partitions.
    pub fn full(seed: u64) -> Self {
        let spec = |name: &str, f0: f64, n: usize, decay: f64, band: (f64, f64), secs: f64| {
            MachineSpec {
                name: name.into(),
                fundamental_hz: f0,
                n_harmonics: n,
                harmonic_decay: decay,
                noise_band: band,
                snr_db: 6.0,
                clip_seconds: secs,
                target_shift: TargetShift {
                    fundamental_scale: 1.1,
                    snr_delta_db: -3.0,
                },
                anomaly: AnomalySpec {
                    burst_rate_hz: 1.0,
                    burst_gain_db: 6.0,
                },
            }
        };
        Self {
            seed,
            machines: vec![
                spec("ToyCar", 180.0, 10, 0.8, (100.0, 6000.0), 12.0),
                spec("ToyTrain", 90.0, 12, 0.8, (50.0, 5000.0), 12.0),
                spec("bearing", 400.0, 4, 0.5, (1000.0, 7000.0), 10.0),
                spec("fan", 120.0, 8, 0.7, (50.0, 7500.0), 10.0),
                spec("gearbox", 250.0, 6, 0.6, (200.0, 4000.0), 10.0),
                spec("slider", 60.0, 15, 0.85, (100.0, 3000.0), 10.0),
                spec("valve", 310.0, 5, 0.6, (500.0, 7900.0), 10.0),
            ],
            counts: SynthCounts::default(),
        }
    }
}

fn fnv1a(parts: &[&[u8]]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for part in parts {
        for &b in *part {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        // Separator so ("ab", "c") and ("a", "bc") differ.
        h ^= 0xff;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Generator for one clip: the corpus seed selects the key, the clip identity
/// selects the stream.
pub fn clip_rng(seed: u64, machine: &str, split: Split, domain: Domain, label: Label, index: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fnv1a(&[
        machine.as_bytes(),
        split.as_str().as_bytes(),
        domain.as_str().as_bytes(),
        label.as_str().as_bytes(),
        &index.to_le_bytes(),
    ]));
    rng
}

fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn band_limited_noise(rng: &mut ChaCha8Rng, n: usize, band: (f64, f64)) -> Vec<f64> {
    let mut buf: Vec<Complex<f64>> = (0..n)
        .map(|_| Complex::new(rng.sample::<f64, _>(StandardNormal), 0.0))
        .collect();
    let (forward, inverse) = PLANNER.with_borrow_mut(|p| (p.plan_fft_forward(n), p.plan_fft_inverse(n)));
    forward.process(&mut buf);
    let hz_per_bin = f64::from(SAMPLE_RATE_HZ) / n as f64;
    for (k, c) in buf.iter_mut().enumerate() {
        let f = k.min(n - k) as f64 * hz_per_bin;
        if f < band.0 || f > band.1 {
            *c = Complex::new(0.0, 0.0);
        }
    }
    inverse.process(&mut buf);
    buf.iter().map(|c| c.re).collect()
}

/// Renders one clip. `rng` is consumed in a fixed order — fundamental jitter,
/// harmonic phases, noise, then bursts — so a normal and an anomalous clip
/// rendered from equal generator states share everything but the bursts.
pub fn synth_clip(
    spec: &MachineSpec,
    domain: Domain,
    condition: Label,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>, SynthError> {
    spec.validate()?;
    if domain == Domain::Unknown || condition == Label::Unknown {
        return Err(spec.invalid("domain and condition must be known"));
    }
    let n = spec.n_samples();
    let sr = f64::from(SAMPLE_RATE_HZ);
    let nyquist = sr / 2.0;

    let f0 = spec.domain_fundamental(domain) * (1.0 + F0_JITTER * rng.random_range(-1.0..=1.0));
    let phases: Vec<f64> = (0..spec.n_harmonics)
        .map(|_| rng.random_range(0.0..2.0 * PI))
        .collect();
    let mut x = vec![0.0; n];
    let mut amp = 1.0;
    for (h, &phase) in phases.iter().enumerate() {
        let f = f0 * (h + 1) as f64;
        if f >= nyquist {
            break;
        }
        // Rotating phasor instead of one sin() per sample; drift stays ~1e-11.
        let w = 2.0 * PI * f / sr;
        let (step_im, step_re) = w.sin_cos();
        let (mut im, mut re) = phase.sin_cos();
        for v in x.iter_mut() {
            *v += amp * im;
            (re, im) = (re * step_re - im * step_im, re * step_im + im * step_re);
        }
        amp *= spec.harmonic_decay;
    }
    let tone_scale = TONAL_RMS / rms(&x);
    x.iter_mut().for_each(|v| *v *= tone_scale);

    let snr_db = match domain {
        Domain::Target => spec.snr_db + spec.target_shift.snr_delta_db,
        _ => spec.snr_db,
    };
    let noise = band_limited_noise(rng, n, spec.noise_band);
    let noise_scale = TONAL_RMS * 10f64.powf(-snr_db / 20.0) / rms(&noise).max(f64::MIN_POSITIVE);
    for (v, e) in x.iter_mut().zip(&noise) {
        *v += noise_scale * e;
    }

    let gain = spec.anomaly.burst_gain_db;
    if condition == Label::Anomaly && gain > 0.0 && spec.anomaly.burst_rate_hz > 0.0 {
        // Tone plus burst sits `gain` dB above the tone alone.
        let sigma = TONAL_RMS * (10f64.powf(gain / 10.0) - 1.0).sqrt();
        let len = (BURST_SECONDS * sr).round() as usize;
        let gaps = Exp::new(spec.anomaly.burst_rate_hz).expect("positive rate");
        let mut t = gaps.sample(rng);
        while t < spec.clip_seconds {
            let start = (t * sr) as usize;
            for i in 0..len {
                let z: f64 = rng.sample(StandardNormal);
                if let Some(v) = x.get_mut(start + i) {
                    let env = (PI * (i as f64 + 0.5) / len as f64).sin().powi(2);
                    *v += sigma * env * z;
                }
            }
            t += gaps.sample(rng);
        }
    }

    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > PEAK_LIMIT {
        let s = PEAK_LIMIT / peak;
        x.iter_mut().for_each(|v| *v *= s);
    }
    Ok(x)
}

struct Planned {
    path: PathBuf,
    domain: Domain,
    label: Label,
    split: Split,
    index: u32,
}

fn plan_machine(spec: &MachineSpec, counts: &SynthCounts, root: &Path) -> Vec<(Planned, ClipName)> {
    let mut out = Vec::with_capacity(counts.clips_per_machine());
    let mut push = |split: Split, domain: Domain, label: Label, count: usize| {
        for i in 0..count as u32 {
            let mut name = ClipName::labeled(0, domain, split, label, i);
            name.attributes = vec![(
                "f0".to_string(),
                format!("{}", spec.domain_fundamental(domain).round() as i64),
            )];
            let path = root
                .join(&spec.name)
                .join(split.as_str())
                .join(name.file_name());
            out.push((
                Planned {
                    path,
                    domain,
                    label,
                    split,
                    index: i,
                },
                name,
            ));
        }
    };
    push(Split::Train, Domain::Source, Label::Normal, counts.train_source);
    push(Split::Train, Domain::Target, Label::Normal, counts.train_target);
    for domain in [Domain::Source, Domain::Target] {
        push(Split::Test, domain, Label::Normal, counts.test_normal_per_domain);
        push(Split::Test, domain, Label::Anomaly, counts.test_anomaly_per_domain);
    }
    out
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> SynthError + '_ {
    move |source| SynthError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes the corpus under `root` and returns its scanned manifest.
///
/// Machines are generated on separate threads; each clip's content depends
/// only on its own generator stream.
pub fn synth_corpus(cfg: &SynthConfig, root: &Path) -> Result<CorpusManifest, SynthError> {
    cfg.validate()?;
    for spec in &cfg.machines {
        for split in [Split::Train, Split::Test] {
            let dir = root.join(&spec.name).join(split.as_str());
            fs::create_dir_all(&dir).map_err(io(&dir))?;
        }
    }
    std::thread::scope(|scope| {
        let handles: Vec<_> = cfg
            .machines
            .iter()
            .map(|spec| scope.spawn(move || write_machine(cfg.seed, spec, &cfg.counts, root)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("synthesis thread panicked"))
            .collect::<Result<Vec<()>, _>>()
    })?;
    Ok(scan_corpus(root)?)
}

fn write_machine(seed: u64, spec: &MachineSpec, counts: &SynthCounts, root: &Path) -> Result<(), SynthError> {
    let plan = plan_machine(spec, counts, root);
    let mut csv = String::from("file_name,d1p,d1v\n");
    for (p, name) in &plan {
        let mut rng = clip_rng(seed, &spec.name, p.split, p.domain, p.label, p.index);
        let wave = synth_clip(spec, p.domain, p.label, &mut rng)?;
        audio::write_wav(&p.path, &wave)?;
        let (k, v) = &name.attributes[0];
        csv.push_str(&format!(
            "{}/{}/{},{},{}\n",
            spec.name,
            p.split,
            name.file_name(),
            k,
            v
        ));
    }
    let csv_path = root.join(&spec.name).join("attributes_00.csv");
    fs::write(&csv_path, csv).map_err(io(&csv_path))
}

//! Deterministic synthetic CSI generator.
//!
//! Each class gets a multipath frequency response per antenna,
//! H[j] = Σ_p a_p·exp(−i·2π·j·τ_p), where τ_p is a dimensionless
//! per-subcarrier phase rate. Every measurement of an instance then applies
//! the impairments that make raw CSI hard to use directly: a random linear
//! phase slope and offset (clock asynchrony between transmitter and
//! receiver), a random amplitude scale (received-signal-strength
//! variation), additive complex Gaussian noise, and optionally bursty
//! subband interference.
//!
//! Every random draw is keyed by (seed, role, class, instance, measurement)
//! substreams, so generation is a pure function of the config — identical
//! across runs, draw-order free, and stable under reordering.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};

use thiserror::Error;

use crate::csi::{CsiDataset, CsiInstance};
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid generator config: {0}")]
    ConfigInvalid(String),
}

pub type Result<T> = std::result::Result<T, SynthError>;

const ROLE_PATHS: u64 = 0x7061_7468;
const ROLE_MEAS: u64 = 0x6d65_6173;
const ROLE_NOISE: u64 = 0x6e6f_6973;
const ROLE_RFI: u64 = 0x7266_6921;

/// Bursty subband interference: with probability `burst_prob` per
/// measurement, complex Gaussian energy of std `burst_std` is added to the
/// `subband_width` subcarriers starting at `subband_start`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RfiConfig {
    pub subband_start: usize,
    pub subband_width: usize,
    pub burst_std: f64,
    pub burst_prob: f64,
}

impl Default for RfiConfig {
    fn default() -> Self {
        RfiConfig {
            subband_start: 8,
            subband_width: 8,
            burst_std: 3.0,
            burst_prob: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub classes: usize,
    pub instances_per_class: usize,
    /// Measurements per instance.
    pub m: usize,
    /// Subcarriers.
    pub n: usize,
    /// Antenna pairs.
    pub c: usize,
    /// Multipath components per (class, antenna).
    pub paths: usize,
    /// Range of the per-subcarrier phase rate τ_p, inside [0, 1).
    pub delay_spread: (f64, f64),
    /// Range of the path amplitudes a_p.
    pub path_amp: (f64, f64),
    /// Std of the additive complex Gaussian noise (per component).
    pub noise_std: f64,
    /// Per-measurement linear phase slope range, radians per subcarrier.
    pub phase_slope: (f64, f64),
    /// Per-measurement phase offset range, radians.
    pub phase_offset: (f64, f64),
    /// Per-measurement amplitude scale range; lower bound must be > 0.
    pub amp_scale: (f64, f64),
    pub rfi: Option<RfiConfig>,
    pub seed: u64,
}

impl Default for SynthConfig {
    /// Desk-scale default: 10 classes, 250 instances each (intended
    /// 200 train / 50 test split), 5 measurements x 30 subcarriers x 1
    /// antenna pair, full slope/offset/scale impairments, light noise.
    fn default() -> Self {
        SynthConfig {
            classes: 10,
            instances_per_class: 250,
            m: 5,
            n: 30,
            c: 1,
            paths: 4,
            delay_spread: (0.0, 1.0),
            path_amp: (0.5, 1.0),
            noise_std: 0.02,
            phase_slope: (-0.2, 0.2),
            phase_offset: (-PI, PI),
            amp_scale: (0.5, 2.0),
            rfi: None,
            seed: 7,
        }
    }
}

impl SynthConfig {
    /// Copy of this config with every impairment switched off: no slope,
    /// no offset, unit scale, no noise, no interference.
    pub fn impairment_free(&self) -> SynthConfig {
        SynthConfig {
            noise_std: 0.0,
            phase_slope: (0.0, 0.0),
            phase_offset: (0.0, 0.0),
            amp_scale: (1.0, 1.0),
            rfi: None,
            ..self.clone()
        }
    }

    fn validate(&self) -> Result<()> {
        let positive = [
            ("classes", self.classes),
            ("instances_per_class", self.instances_per_class),
            ("m", self.m),
            ("n", self.n),
            ("c", self.c),
            ("paths", self.paths),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(SynthError::ConfigInvalid(format!("{name} must be > 0")));
            }
        }
        let ranges = [
            ("delay_spread", self.delay_spread),
            ("path_amp", self.path_amp),
            ("phase_slope", self.phase_slope),
            ("phase_offset", self.phase_offset),
            ("amp_scale", self.amp_scale),
        ];
        for (name, (lo, hi)) in ranges {
            if !(lo <= hi) {
                return Err(SynthError::ConfigInvalid(format!(
                    "{name} range ({lo}, {hi}) not well-ordered"
                )));
            }
        }
        if self.amp_scale.0 <= 0.0 {
            return Err(SynthError::ConfigInvalid(
                "amp_scale lower bound must be > 0".into(),
            ));
        }
        if self.noise_std < 0.0 {
            return Err(SynthError::ConfigInvalid("noise_std must be >= 0".into()));
        }
        if let Some(rfi) = &self.rfi {
            if rfi.subband_start >= self.n || rfi.subband_start + rfi.subband_width > self.n {
                return Err(SynthError::ConfigInvalid(format!(
                    "rfi subband {}+{} outside 0..{}",
                    rfi.subband_start, rfi.subband_width, self.n
                )));
            }
            if !(0.0..=1.0).contains(&rfi.burst_prob) {
                return Err(SynthError::ConfigInvalid(format!(
                    "rfi burst_prob {} outside [0, 1]",
                    rfi.burst_prob
                )));
            }
        }
        Ok(())
    }
}

/// Uniform draw from a possibly degenerate range. A degenerate range
/// returns its bound exactly and consumes no randomness, so
/// impairment-free configs stay bit-exact.
fn draw(rng: &mut Rng, range: (f64, f64)) -> f64 {
    if range.0 == range.1 {
        range.0
    } else {
        rng.uniform(range.0, range.1)
    }
}

/// Multipath frequency response of one class: for every antenna pair a
/// complex vector over the n subcarriers, deterministic in
/// (seed, class, antenna).
pub fn class_response(cfg: &SynthConfig, class_id: usize) -> Vec<Vec<(f64, f64)>> {
    (0..cfg.c)
        .map(|antenna| {
            let mut rng = Rng::substream(cfg.seed, &[ROLE_PATHS, class_id as u64, antenna as u64]);
            let paths: Vec<(f64, f64)> = (0..cfg.paths)
                .map(|_| {
                    (
                        draw(&mut rng, cfg.path_amp),
                        draw(&mut rng, cfg.delay_spread),
                    )
                })
                .collect();
            (0..cfg.n)
                .map(|j| {
                    let mut re = 0.0;
                    let mut im = 0.0;
                    for &(amp, tau) in &paths {
                        let theta = TAU * j as f64 * tau;
                        re += amp * theta.cos();
                        im -= amp * theta.sin();
                    }
                    (re, im)
                })
                .collect()
        })
        .collect()
}

/// Generate the full dataset described by `cfg`, ordered class-major.
pub fn generate(cfg: &SynthConfig) -> Result<CsiDataset> {
    cfg.validate()?;
    let responses: Vec<Vec<Vec<(f64, f64)>>> =
        (0..cfg.classes).map(|k| class_response(cfg, k)).collect();
    let mut instances = Vec::with_capacity(cfg.classes * cfg.instances_per_class);
    for class in 0..cfg.classes {
        for inst_id in 0..cfg.instances_per_class {
            instances.push(generate_instance(cfg, &responses[class], class, inst_id));
        }
    }
    let label_names = (0..cfg.classes).map(|k| format!("class_{k:03}")).collect();
    let mut meta = BTreeMap::new();
    meta.insert("source".to_string(), "synth".to_string());
    meta.insert("seed".to_string(), cfg.seed.to_string());
    meta.insert(
        "rfi".to_string(),
        if cfg.rfi.is_some() { "on" } else { "off" }.to_string(),
    );
    CsiDataset::new(instances, label_names, meta)
        .map_err(|e| SynthError::ConfigInvalid(e.to_string()))
}

fn generate_instance(
    cfg: &SynthConfig,
    response: &[Vec<(f64, f64)>],
    class: usize,
    inst_id: usize,
) -> CsiInstance {
    let mut planes = Tensor::zeros(&[2 * cfg.m, cfg.n, cfg.c]);
    let ids = |role: u64, meas: usize| [role, class as u64, inst_id as u64, meas as u64];
    for i in 0..cfg.m {
        let mut meas_rng = Rng::substream(cfg.seed, &ids(ROLE_MEAS, i));
        let slope = draw(&mut meas_rng, cfg.phase_slope);
        let offset = draw(&mut meas_rng, cfg.phase_offset);
        let scale = draw(&mut meas_rng, cfg.amp_scale);
        let mut noise_rng = Rng::substream(cfg.seed, &ids(ROLE_NOISE, i));
        let mut rfi_rng = Rng::substream(cfg.seed, &ids(ROLE_RFI, i));
        let burst = cfg.rfi.filter(|rfi| rfi_rng.next_f64() < rfi.burst_prob);
        for j in 0..cfg.n {
            let phi = slope * j as f64 + offset;
            let (cos_phi, sin_phi) = (phi.cos(), phi.sin());
            for a in 0..cfg.c {
                let (h_re, h_im) = response[a][j];
                let mut re = scale * (h_re * cos_phi - h_im * sin_phi);
                let mut im = scale * (h_re * sin_phi + h_im * cos_phi);
                if cfg.noise_std > 0.0 {
                    re += cfg.noise_std * noise_rng.normal();
                    im += cfg.noise_std * noise_rng.normal();
                }
                if let Some(rfi) = burst {
                    if j >= rfi.subband_start && j < rfi.subband_start + rfi.subband_width {
                        re += rfi.burst_std * rfi_rng.normal();
                        im += rfi.burst_std * rfi_rng.normal();
                    }
                }
                planes.set(&[2 * i, j, a], re);
                planes.set(&[2 * i + 1, j, a], im);
            }
        }
    }
    CsiInstance::new(planes, class).expect("generated planes have shape [2m, n, c]")
}

// --- brute-force oracle -------------------------------------------------

/// Accuracy of a nearest-centroid classifier on raw flattened planes:
/// centroids from `train`, evaluation on `test`. Brute force by design —
/// it is the independent yardstick for class separability.
pub fn nearest_centroid_accuracy(train: &CsiDataset, test: &CsiDataset) -> f64 {
    let k = train.num_classes();
    let dim = train.instances()[0].planes().size();
    let mut centroids = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for inst in train.instances() {
        counts[inst.label()] += 1;
        for (acc, &v) in centroids[inst.label()].iter_mut().zip(inst.planes().data()) {
            *acc += v;
        }
    }
    for (centroid, &count) in centroids.iter_mut().zip(&counts) {
        if count > 0 {
            for v in centroid.iter_mut() {
                *v /= count as f64;
            }
        }
    }
    let mut correct = 0usize;
    for inst in test.instances() {
        let mut best = (f64::INFINITY, 0usize);
        for (label, centroid) in centroids.iter().enumerate() {
            if counts[label] == 0 {
                continue;
            }
            let dist: f64 = centroid
                .iter()
                .zip(inst.planes().data())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if dist < best.0 {
                best = (dist, label);
            }
        }
        if best.1 == inst.label() {
            correct += 1;
        }
    }
    correct as f64 / test.len() as f64
}

/// Separability report from the nearest-centroid oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct SanityReport {
    /// Accuracy on the impairment-free variant of the config.
    pub impairment_free_accuracy: f64,
    /// Accuracy on the config as given (raw complex values, no cleanup).
    pub impaired_accuracy: f64,
}

/// Generate both the impairment-free variant and the config as given,
/// split each per class, and measure nearest-centroid accuracy on raw
/// complex values. Impairment-free classes must separate perfectly; the
/// impaired accuracy is recorded to show what the impairments destroy.
pub fn oracle_sanity_check(cfg: &SynthConfig, train_per_class: usize) -> Result<SanityReport> {
    let clean = generate(&cfg.impairment_free())?;
    let (train, test) = clean
        .split_per_class(train_per_class)
        .map_err(|e| SynthError::ConfigInvalid(e.to_string()))?;
    let impairment_free_accuracy = nearest_centroid_accuracy(&train, &test);

    let impaired = generate(cfg)?;
    let (train, test) = impaired
        .split_per_class(train_per_class)
        .map_err(|e| SynthError::ConfigInvalid(e.to_string()))?;
    let impaired_accuracy = nearest_centroid_accuracy(&train, &test);

    Ok(SanityReport {
        impairment_free_accuracy,
        impaired_accuracy,
    })
}

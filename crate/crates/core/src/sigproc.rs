//! Classical CSI preprocessing: amplitude extraction, per-measurement
//! normalization, phase extraction, unwrapping, sanitization, and a probe
//! that quantifies how unstable unwrapping is near its threshold.
//!
//! The unwrap scan adds or subtracts one compensation of 2π to all
//! following subcarriers whenever an adjacent raw phase difference exceeds
//! the threshold. Sanitization then removes the endpoint slope and the mean
//! of the de-sloped vector, cancelling the linear phase shift caused by
//! clock asynchrony between transmitter and receiver.

use std::f64::consts::{PI, TAU};

use thiserror::Error;

use crate::csi::CsiInstance;
use crate::tensor::Tensor;

#[derive(Debug, Error, PartialEq)]
pub enum SigprocError {
    #[error("phase vector of length {0} is too short to sanitize")]
    DegenerateLength(usize),
    #[error("phase vectors of lengths {0} and {1} cannot be compared")]
    LengthMismatch(usize, usize),
}

pub type Result<T> = std::result::Result<T, SigprocError>;

/// Per-subcarrier phase in radians. Raw (pre-unwrap) values lie in (−π, π].
/// `undefined[j]` marks subcarriers whose complex value was exactly zero;
/// their phase is reported as 0.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseVector {
    pub values: Vec<f64>,
    pub undefined: Vec<bool>,
}

impl PhaseVector {
    pub fn new(values: Vec<f64>) -> Self {
        let undefined = vec![false; values.len()];
        PhaseVector { values, undefined }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// How the amplitude of each measurement slice is normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    /// Divide every [n]-slice (fixed sample, fixed antenna) by its L2 norm.
    #[default]
    L2PerMeasurement,
    /// Divide every [n]-slice by its maximum.
    MaxPerMeasurement,
    None,
}

/// Slope estimator used by sanitization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SlopeFit {
    /// (p[n−1] − p[0]) / (n−1), the convention of the classical method.
    #[default]
    Endpoint,
    /// Ordinary least-squares line over subcarrier index.
    LeastSquares,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub unwrap_threshold: f64,
    pub normalization: Normalization,
    pub sanitize: bool,
    pub slope_fit: SlopeFit,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            unwrap_threshold: PI,
            normalization: Normalization::L2PerMeasurement,
            sanitize: true,
            slope_fit: SlopeFit::Endpoint,
        }
    }
}

impl PipelineConfig {
    /// Pass-through configuration: no normalization, no sanitization.
    pub fn identity() -> Self {
        PipelineConfig {
            unwrap_threshold: PI,
            normalization: Normalization::None,
            sanitize: false,
            slope_fit: SlopeFit::Endpoint,
        }
    }
}

/// |C| per (sample, subcarrier, antenna): output shape [m, n, c].
pub fn amplitude(inst: &CsiInstance) -> Tensor {
    let (m, n, c) = (inst.m(), inst.n(), inst.c());
    let planes = inst.planes();
    let mut out = Tensor::zeros(&[m, n, c]);
    for i in 0..m {
        for j in 0..n {
            for a in 0..c {
                let re = planes.at(&[2 * i, j, a]);
                let im = planes.at(&[2 * i + 1, j, a]);
                out.set(&[i, j, a], re.hypot(im));
            }
        }
    }
    out
}

/// Normalize an [m, n, c] amplitude tensor slice-by-slice. Zero-norm slices
/// pass through unchanged so degenerate inputs never abort a batch pipeline.
pub fn normalize_amplitude(amp: &Tensor, mode: Normalization) -> Tensor {
    if mode == Normalization::None {
        return amp.clone();
    }
    let shape = amp.shape().to_vec();
    let (m, n, c) = (shape[0], shape[1], shape[2]);
    let mut out = amp.clone();
    for i in 0..m {
        for a in 0..c {
            let denom = match mode {
                Normalization::L2PerMeasurement => (0..n)
                    .map(|j| amp.at(&[i, j, a]).powi(2))
                    .sum::<f64>()
                    .sqrt(),
                Normalization::MaxPerMeasurement => {
                    (0..n).map(|j| amp.at(&[i, j, a])).fold(0.0f64, f64::max)
                }
                Normalization::None => unreachable!(),
            };
            if denom > 0.0 {
                for j in 0..n {
                    out.set(&[i, j, a], amp.at(&[i, j, a]) / denom);
                }
            }
        }
    }
    out
}

/// atan2 with the (−π, π] branch: −1+0i maps to +π, not −π, and an exactly
/// zero complex value reports phase 0 with the undefined flag set.
fn phase_of(re: f64, im: f64) -> (f64, bool) {
    if re == 0.0 && im == 0.0 {
        return (0.0, true);
    }
    // Collapse −0.0 to +0.0 so atan2(−0.0, −1.0) cannot yield −π.
    let im = if im == 0.0 { 0.0 } else { im };
    (im.atan2(re), false)
}

/// Raw phase of one (sample, antenna) slice across subcarriers.
pub fn phase_vector(inst: &CsiInstance, sample: usize, antenna: usize) -> PhaseVector {
    let n = inst.n();
    let mut values = Vec::with_capacity(n);
    let mut undefined = Vec::with_capacity(n);
    for j in 0..n {
        let (re, im) = inst
            .complex_at(sample, j, antenna)
            .expect("indices validated by caller loop");
        let (theta, undef) = phase_of(re, im);
        values.push(theta);
        undefined.push(undef);
    }
    PhaseVector { values, undefined }
}

/// Raw phase for every (sample, antenna) pair, sample-major.
pub fn phases(inst: &CsiInstance) -> Vec<PhaseVector> {
    let mut out = Vec::with_capacity(inst.m() * inst.c());
    for i in 0..inst.m() {
        for a in 0..inst.c() {
            out.push(phase_vector(inst, i, a));
        }
    }
    out
}

/// Single-pass unwrap: scanning j = 1..n−1, whenever the raw neighbour
/// difference exceeds `threshold` the running correction gains ∓2π, which
/// then applies to all following subcarriers.
pub fn unwrap(p: &PhaseVector, threshold: f64) -> PhaseVector {
    let mut out = p.values.clone();
    let mut correction = 0.0;
    for j in 1..p.values.len() {
        let diff = p.values[j] - p.values[j - 1];
        if diff > threshold {
            correction -= TAU;
        } else if diff < -threshold {
            correction += TAU;
        }
        out[j] = p.values[j] + correction;
    }
    PhaseVector {
        values: out,
        undefined: p.undefined.clone(),
    }
}

fn slope_of(values: &[f64], fit: SlopeFit) -> f64 {
    let n = values.len();
    match fit {
        SlopeFit::Endpoint => (values[n - 1] - values[0]) / (n - 1) as f64,
        SlopeFit::LeastSquares => {
            let nf = n as f64;
            let x_mean = (nf - 1.0) / 2.0;
            let y_mean = values.iter().sum::<f64>() / nf;
            let mut num = 0.0;
            let mut den = 0.0;
            for (j, &y) in values.iter().enumerate() {
                let dx = j as f64 - x_mean;
                num += dx * (y - y_mean);
                den += dx * dx;
            }
            num / den
        }
    }
}

/// Remove the linear phase trend from an (already unwrapped) vector:
/// subtract the fitted slope times the subcarrier index, then the mean of
/// the de-sloped vector. The result has zero mean and, under the endpoint
/// fit, equal first and last entries.
pub fn sanitize_with(p: &PhaseVector, fit: SlopeFit) -> Result<PhaseVector> {
    let n = p.values.len();
    if n < 2 {
        return Err(SigprocError::DegenerateLength(n));
    }
    let slope = slope_of(&p.values, fit);
    let desloped: Vec<f64> = p
        .values
        .iter()
        .enumerate()
        .map(|(j, &v)| v - slope * j as f64)
        .collect();
    let offset = desloped.iter().sum::<f64>() / n as f64;
    Ok(PhaseVector {
        values: desloped.iter().map(|v| v - offset).collect(),
        undefined: p.undefined.clone(),
    })
}

/// [`sanitize_with`] under the default endpoint slope.
pub fn sanitize(p: &PhaseVector) -> Result<PhaseVector> {
    sanitize_with(p, SlopeFit::Endpoint)
}

/// Re-assemble an instance from (normalized) amplitude and (sanitized)
/// phase: re = A·cos θ̂, im = A·sin θ̂. Shape is preserved.
pub fn sanitized_complex(inst: &CsiInstance, cfg: &PipelineConfig) -> Result<CsiInstance> {
    let (m, n, c) = (inst.m(), inst.n(), inst.c());
    let amp = normalize_amplitude(&amplitude(inst), cfg.normalization);
    let mut planes = Tensor::zeros(&[2 * m, n, c]);
    for i in 0..m {
        for a in 0..c {
            let mut theta = phase_vector(inst, i, a);
            if cfg.sanitize {
                theta = sanitize_with(&unwrap(&theta, cfg.unwrap_threshold), cfg.slope_fit)?;
            }
            for j in 0..n {
                let amp_ij = amp.at(&[i, j, a]);
                planes.set(&[2 * i, j, a], amp_ij * theta.values[j].cos());
                planes.set(&[2 * i + 1, j, a], amp_ij * theta.values[j].sin());
            }
        }
    }
    Ok(inst
        .with_planes(planes)
        .expect("re-assembled planes keep the input shape"))
}

/// Distances between two phase vectors before and after unwrapping.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeReport {
    /// L∞ distance of the raw vectors, radians.
    pub pre_dist: f64,
    /// L∞ distance after unwrapping both, radians.
    pub post_dist: f64,
    /// Whether some adjacent difference of the two vectors falls on
    /// opposite sides of the unwrap threshold, i.e. only one of them gets
    /// the 2π compensation at that position.
    pub straddled: bool,
}

fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Which compensation an adjacent difference triggers: −1 for −2π, +1 for
/// +2π, 0 for none.
fn correction_side(diff: f64, threshold: f64) -> i8 {
    if diff > threshold {
        -1
    } else if diff < -threshold {
        1
    } else {
        0
    }
}

/// Measure how far apart two nearly identical raw vectors land after
/// unwrapping. Near-threshold differences make `post_dist` jump by ~2π even
/// when `pre_dist` is tiny.
pub fn unwrap_instability_probe(
    p_a: &PhaseVector,
    p_b: &PhaseVector,
    threshold: f64,
) -> Result<ProbeReport> {
    if p_a.len() != p_b.len() {
        return Err(SigprocError::LengthMismatch(p_a.len(), p_b.len()));
    }
    let pre_dist = linf(&p_a.values, &p_b.values);
    let post_dist = linf(
        &unwrap(p_a, threshold).values,
        &unwrap(p_b, threshold).values,
    );
    let straddled = (1..p_a.len()).any(|j| {
        let da = p_a.values[j] - p_a.values[j - 1];
        let db = p_b.values[j] - p_b.values[j - 1];
        correction_side(da, threshold) != correction_side(db, threshold)
    });
    Ok(ProbeReport {
        pre_dist,
        post_dist,
        straddled,
    })
}

/// A pair of raw phase vectors with nearly identical shapes whose first
/// adjacent difference straddles the π threshold (3.10 vs 3.18 rad), so one
/// of them is unwrapped and the other is not.
pub fn straddling_pair() -> (PhaseVector, PhaseVector) {
    let a = vec![-1.55, 1.55, 1.75, 1.90, 2.00, 2.10, 2.15, 2.20];
    let b: Vec<f64> = a
        .iter()
        .map(|v| if *v < 0.0 { v - 0.04 } else { v + 0.04 })
        .collect();
    (PhaseVector::new(a), PhaseVector::new(b))
}

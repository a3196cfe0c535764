//! Declarative network architectures for raw-CSI context awareness.
//!
//! An [`ArchitectureSpec`] describes a conv stack, a bank of parallel
//! average pools, and FC/dropout stages ending in a softmax. The framework
//! rule is structural: the first conv stage has kernel and stride 2x1 so it
//! combines the real and imaginary row of exactly one measurement-
//! subcarrier cell and never mixes neighbours. The first stage runs with
//! valid padding; later stages use same padding and stride 1x1 so the pool
//! bank sees the full spatial extent.
//!
//! Two presets ship: `signfi_preset` for the gesture datasets and
//! `activity_preset` for the interference-prone activity datasets.

use thiserror::Error;

use crate::nn::{
    check_shapes, BatchNormLayer, ConvLayer, ConvSpec, DenseLayer, Layer, Network, Padding,
    ShapeTrace,
};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Default filter count for every conv stage; configurable per stage.
pub const DEFAULT_FILTERS: usize = 32;

#[derive(Debug, Error, PartialEq)]
pub enum FrameworkError {
    #[error("input shape incompatible with preset: {0}")]
    ShapeIncompatible(String),
    #[error("validation failed: {0}")]
    ValidationFailed(String),
    #[error("invalid ablation knob: {0}")]
    InvalidKnob(String),
    #[error("architecture parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, FrameworkError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvStage {
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub filters: usize,
    pub batch_norm: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FcStage {
    pub units: usize,
    pub dropout: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArchitectureSpec {
    /// (2m, n, c) as seen by the first conv layer.
    pub input_shape: (usize, usize, usize),
    pub num_classes: usize,
    pub conv_stages: Vec<ConvStage>,
    /// Parallel average-pool sizes over the conv-stack output. Empty means
    /// the conv output is flattened directly (the avg-pool ablation).
    pub pool_bank: Vec<(usize, usize)>,
    pub fc_stages: Vec<FcStage>,
}

impl ArchitectureSpec {
    /// Same architecture with every conv stage at `filters` filters.
    pub fn with_filters(mut self, filters: usize) -> Self {
        for stage in &mut self.conv_stages {
            stage.filters = filters;
        }
        self
    }

    fn conv_specs(&self) -> Vec<ConvSpec> {
        self.conv_stages
            .iter()
            .enumerate()
            .map(|(i, s)| ConvSpec {
                kernel: s.kernel,
                stride: s.stride,
                filters: s.filters,
                padding: if i == 0 {
                    Padding::Valid
                } else {
                    Padding::Same
                },
            })
            .collect()
    }
}

/// Preset tuned for the SignFi gesture datasets: four conv stages with
/// batch norm, a five-pool bank, one FC(1000) stage with dropout 0.8.
pub fn signfi_preset(
    input_shape: (usize, usize, usize),
    num_classes: usize,
) -> Result<ArchitectureSpec> {
    let (rows, n, _c) = input_shape;
    // After the stride-2x1 first stage the spatial height is rows/2; the
    // largest pool is 40x3.
    if rows < 80 || n < 10 {
        return Err(FrameworkError::ShapeIncompatible(format!(
            "signfi preset needs input rows >= 80 and subcarriers >= 10, got {rows}x{n}"
        )));
    }
    let conv = |kernel, stride| ConvStage {
        kernel,
        stride,
        filters: DEFAULT_FILTERS,
        batch_norm: true,
    };
    Ok(ArchitectureSpec {
        input_shape,
        num_classes,
        conv_stages: vec![
            conv((2, 1), (2, 1)),
            conv((3, 3), (1, 1)),
            conv((5, 5), (1, 1)),
            conv((10, 10), (1, 1)),
        ],
        pool_bank: vec![(3, 3), (5, 5), (10, 3), (20, 3), (40, 3)],
        fc_stages: vec![FcStage {
            units: 1000,
            dropout: 0.8,
        }],
    })
}

/// Preset tuned for the interference-prone activity datasets: seven conv
/// stages (the tail all 1xk, since consecutive samples may be uncorrelated
/// under interference), a 1x2/1x3/1x4 pool bank, two FC(1000)+dropout(0.8)
/// stages.
pub fn activity_preset(
    input_shape: (usize, usize, usize),
    num_classes: usize,
) -> Result<ArchitectureSpec> {
    let (rows, n, _c) = input_shape;
    if rows < 2 || n < 16 {
        return Err(FrameworkError::ShapeIncompatible(format!(
            "activity preset needs input rows >= 2 and subcarriers >= 16, got {rows}x{n}"
        )));
    }
    let conv = |kernel, stride| ConvStage {
        kernel,
        stride,
        filters: DEFAULT_FILTERS,
        batch_norm: true,
    };
    let mut conv_stages = vec![conv((2, 1), (2, 1))];
    for kw in [2, 3, 4, 8, 12, 16] {
        conv_stages.push(conv((1, kw), (1, 1)));
    }
    let fc = FcStage {
        units: 1000,
        dropout: 0.8,
    };
    Ok(ArchitectureSpec {
        input_shape,
        num_classes,
        conv_stages,
        pool_bank: vec![(1, 2), (1, 3), (1, 4)],
        fc_stages: vec![fc, fc],
    })
}

/// Enforce the framework's structural rules and compute every intermediate
/// shape. `build` succeeds exactly when this does.
pub fn validate(spec: &ArchitectureSpec) -> Result<ShapeTrace> {
    let (rows, n, c) = spec.input_shape;
    if rows % 2 != 0 || rows < 2 {
        return Err(FrameworkError::ValidationFailed(format!(
            "input rows must be even and >= 2 (interleaved re/im), got {rows}"
        )));
    }
    if n == 0 || c == 0 {
        return Err(FrameworkError::ValidationFailed(format!(
            "degenerate input shape {:?}",
            spec.input_shape
        )));
    }
    let first = spec
        .conv_stages
        .first()
        .ok_or_else(|| FrameworkError::ValidationFailed("no conv stages".into()))?;
    if first.kernel != (2, 1) || first.stride != (2, 1) {
        return Err(FrameworkError::ValidationFailed(
            "first stage must be 2x1/2x1".into(),
        ));
    }
    for (i, stage) in spec.conv_stages.iter().enumerate() {
        if stage.filters == 0 {
            return Err(FrameworkError::ValidationFailed(format!(
                "conv stage {} has zero filters",
                i + 1
            )));
        }
    }
    for (i, fc) in spec.fc_stages.iter().enumerate() {
        if fc.units == 0 {
            return Err(FrameworkError::ValidationFailed(format!(
                "fc stage {} has zero units",
                i + 1
            )));
        }
        if !(0.0..1.0).contains(&fc.dropout) {
            return Err(FrameworkError::ValidationFailed(format!(
                "fc stage {} dropout {} outside [0, 1)",
                i + 1,
                fc.dropout
            )));
        }
    }
    let fc_widths: Vec<usize> = spec.fc_stages.iter().map(|f| f.units).collect();
    check_shapes(
        spec.input_shape,
        &spec.conv_specs(),
        &spec.pool_bank,
        &fc_widths,
        spec.num_classes,
    )
    .map_err(|e| FrameworkError::ValidationFailed(e.to_string()))
}

fn glorot(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut Rng) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Tensor::from_fn(shape, |_| rng.uniform(-limit, limit))
}

/// Wire a validated spec into a network: conv(+BN, ReLU) stack, pool bank
/// (or flatten), FC(ReLU, dropout) stages, final dense to the class count.
/// Kernels and dense weights are initialized from seed-keyed substreams;
/// biases start at zero, batch-norm at gamma 1 / beta 0.
pub fn build(spec: &ArchitectureSpec, seed: u64) -> Result<Network> {
    let trace = validate(spec)?;
    let mut layers = Vec::new();
    let mut cin = spec.input_shape.2;
    for (i, stage) in spec.conv_stages.iter().enumerate() {
        let (kh, kw) = stage.kernel;
        let cout = stage.filters;
        let mut rng = Rng::substream(seed, &[0x696e_6974, i as u64]);
        layers.push(Layer::Conv(ConvLayer {
            name: format!("conv{i}"),
            kernel: glorot(
                &[kh, kw, cin, cout],
                kh * kw * cin,
                kh * kw * cout,
                &mut rng,
            ),
            bias: Tensor::zeros(&[cout]),
            stride: stage.stride,
            padding: if i == 0 {
                Padding::Valid
            } else {
                Padding::Same
            },
        }));
        if stage.batch_norm {
            layers.push(Layer::BatchNorm(BatchNormLayer::new(
                format!("bn{i}"),
                cout,
            )));
        }
        layers.push(Layer::Relu);
        cin = cout;
    }
    if spec.pool_bank.is_empty() {
        layers.push(Layer::Flatten);
    } else {
        layers.push(Layer::PoolBank(spec.pool_bank.clone()));
    }
    let mut width = trace.concat_len;
    for (j, fc) in spec.fc_stages.iter().enumerate() {
        let mut rng = Rng::substream(seed, &[0x696e_6974, 0x1000 + j as u64]);
        layers.push(Layer::Dense(DenseLayer {
            name: format!("fc{j}"),
            weight: glorot(&[width, fc.units], width, fc.units, &mut rng),
            bias: Tensor::zeros(&[fc.units]),
        }));
        layers.push(Layer::Relu);
        layers.push(Layer::Dropout(fc.dropout));
        width = fc.units;
    }
    let mut rng = Rng::substream(seed, &[0x696e_6974, 0x2000]);
    layers.push(Layer::Dense(DenseLayer {
        name: "out".into(),
        weight: glorot(
            &[width, spec.num_classes],
            width,
            spec.num_classes,
            &mut rng,
        ),
        bias: Tensor::zeros(&[spec.num_classes]),
    }));
    Ok(Network::new(layers))
}

/// Structural ablations over a base spec.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblationKnob {
    /// Keep the 2x1 first stage plus the first k−1 remaining stages.
    ConvDepth(usize),
    /// Remove all batch-norm layers.
    BatchNormOff,
    /// Replace the pool bank with a direct flatten of the conv output.
    AvgPoolOff,
}

impl AblationKnob {
    pub fn label(&self) -> String {
        match self {
            AblationKnob::ConvDepth(k) => format!("conv_depth_{k}"),
            AblationKnob::BatchNormOff => "batch_norm_off".into(),
            AblationKnob::AvgPoolOff => "avg_pool_off".into(),
        }
    }
}

pub fn ablate(spec: &ArchitectureSpec, knob: AblationKnob) -> Result<ArchitectureSpec> {
    let mut out = spec.clone();
    match knob {
        AblationKnob::ConvDepth(k) => {
            if k < 1 || k > spec.conv_stages.len() {
                return Err(FrameworkError::InvalidKnob(format!(
                    "conv depth {} outside 1..={}",
                    k,
                    spec.conv_stages.len()
                )));
            }
            out.conv_stages.truncate(k);
        }
        AblationKnob::BatchNormOff => {
            for stage in &mut out.conv_stages {
                stage.batch_norm = false;
            }
        }
        AblationKnob::AvgPoolOff => {
            out.pool_bank.clear();
        }
    }
    Ok(out)
}

// --- textual form -------------------------------------------------------

/// Serialize to the architecture config grammar: one `conv_N` key per conv
/// stage, one `ap_N` key per pool, one `fc_N` key per FC stage.
pub fn to_config_string(spec: &ArchitectureSpec) -> String {
    let mut out = String::new();
    let (rows, n, c) = spec.input_shape;
    out.push_str(&format!("input_shape = {rows}x{n}x{c}\n"));
    out.push_str(&format!("num_classes = {}\n", spec.num_classes));
    for (i, s) in spec.conv_stages.iter().enumerate() {
        out.push_str(&format!(
            "conv_{} = kernel {}x{} stride {}x{} filters {} bn {}\n",
            i + 1,
            s.kernel.0,
            s.kernel.1,
            s.stride.0,
            s.stride.1,
            s.filters,
            if s.batch_norm { "on" } else { "off" }
        ));
    }
    for (i, (ph, pw)) in spec.pool_bank.iter().enumerate() {
        out.push_str(&format!("ap_{} = {ph}x{pw}\n", i + 1));
    }
    for (i, fc) in spec.fc_stages.iter().enumerate() {
        out.push_str(&format!(
            "fc_{} = units {} dropout {}\n",
            i + 1,
            fc.units,
            fc.dropout
        ));
    }
    out
}

fn parse_pair(s: &str) -> Result<(usize, usize)> {
    let (a, b) = s
        .split_once('x')
        .ok_or_else(|| FrameworkError::Parse(format!("expected AxB pair, got '{s}'")))?;
    Ok((
        a.trim()
            .parse()
            .map_err(|_| FrameworkError::Parse(format!("bad integer in pair '{s}'")))?,
        b.trim()
            .parse()
            .map_err(|_| FrameworkError::Parse(format!("bad integer in pair '{s}'")))?,
    ))
}

/// Parse the architecture grammar from `(key, value)` pairs, e.g. the
/// `[architecture]` section of a run config or a standalone spec file.
pub fn from_config_pairs(pairs: &[(String, String)]) -> Result<ArchitectureSpec> {
    let mut input_shape = None;
    let mut num_classes = None;
    let mut convs: Vec<(usize, ConvStage)> = Vec::new();
    let mut pools: Vec<(usize, (usize, usize))> = Vec::new();
    let mut fcs: Vec<(usize, FcStage)> = Vec::new();
    for (key, value) in pairs {
        if key == "input_shape" {
            let parts: Vec<&str> = value.split('x').collect();
            if parts.len() != 3 {
                return Err(FrameworkError::Parse(format!(
                    "input_shape must be RxNxC, got '{value}'"
                )));
            }
            let dims: Vec<usize> = parts
                .iter()
                .map(|p| {
                    p.trim()
                        .parse()
                        .map_err(|_| FrameworkError::Parse(format!("bad input_shape '{value}'")))
                })
                .collect::<Result<_>>()?;
            input_shape = Some((dims[0], dims[1], dims[2]));
        } else if key == "num_classes" {
            num_classes = Some(
                value
                    .parse()
                    .map_err(|_| FrameworkError::Parse(format!("bad num_classes '{value}'")))?,
            );
        } else if let Some(idx) = key.strip_prefix("conv_") {
            let idx: usize = idx
                .parse()
                .map_err(|_| FrameworkError::Parse(format!("bad conv key '{key}'")))?;
            convs.push((idx, parse_conv_stage(value)?));
        } else if let Some(idx) = key.strip_prefix("ap_") {
            let idx: usize = idx
                .parse()
                .map_err(|_| FrameworkError::Parse(format!("bad pool key '{key}'")))?;
            pools.push((idx, parse_pair(value)?));
        } else if let Some(idx) = key.strip_prefix("fc_") {
            let idx: usize = idx
                .parse()
                .map_err(|_| FrameworkError::Parse(format!("bad fc key '{key}'")))?;
            fcs.push((idx, parse_fc_stage(value)?));
        } else {
            return Err(FrameworkError::Parse(format!(
                "unknown architecture key '{key}'"
            )));
        }
    }
    convs.sort_by_key(|(i, _)| *i);
    pools.sort_by_key(|(i, _)| *i);
    fcs.sort_by_key(|(i, _)| *i);
    Ok(ArchitectureSpec {
        input_shape: input_shape
            .ok_or_else(|| FrameworkError::Parse("missing input_shape".into()))?,
        num_classes: num_classes
            .ok_or_else(|| FrameworkError::Parse("missing num_classes".into()))?,
        conv_stages: convs.into_iter().map(|(_, s)| s).collect(),
        pool_bank: pools.into_iter().map(|(_, p)| p).collect(),
        fc_stages: fcs.into_iter().map(|(_, f)| f).collect(),
    })
}

fn parse_conv_stage(value: &str) -> Result<ConvStage> {
    let tokens: Vec<&str> = value.split_whitespace().collect();
    let mut kernel = None;
    let mut stride = None;
    let mut filters = DEFAULT_FILTERS;
    let mut batch_norm = true;
    let mut i = 0;
    while i + 1 < tokens.len() {
        match tokens[i] {
            "kernel" => kernel = Some(parse_pair(tokens[i + 1])?),
            "stride" => stride = Some(parse_pair(tokens[i + 1])?),
            "filters" => {
                filters = tokens[i + 1]
                    .parse()
                    .map_err(|_| FrameworkError::Parse(format!("bad filters in '{value}'")))?
            }
            "bn" => batch_norm = tokens[i + 1] == "on",
            other => {
                return Err(FrameworkError::Parse(format!(
                    "unknown conv attribute '{other}'"
                )))
            }
        }
        i += 2;
    }
    Ok(ConvStage {
        kernel: kernel
            .ok_or_else(|| FrameworkError::Parse(format!("conv missing kernel: '{value}'")))?,
        stride: stride
            .ok_or_else(|| FrameworkError::Parse(format!("conv missing stride: '{value}'")))?,
        filters,
        batch_norm,
    })
}

fn parse_fc_stage(value: &str) -> Result<FcStage> {
    let tokens: Vec<&str> = value.split_whitespace().collect();
    let mut units = None;
    let mut dropout = 0.0;
    let mut i = 0;
    while i + 1 < tokens.len() {
        match tokens[i] {
            "units" => {
                units = Some(
                    tokens[i + 1]
                        .parse()
                        .map_err(|_| FrameworkError::Parse(format!("bad units in '{value}'")))?,
                )
            }
            "dropout" => {
                dropout = tokens[i + 1]
                    .parse()
                    .map_err(|_| FrameworkError::Parse(format!("bad dropout in '{value}'")))?
            }
            other => {
                return Err(FrameworkError::Parse(format!(
                    "unknown fc attribute '{other}'"
                )))
            }
        }
        i += 2;
    }
    Ok(FcStage {
        units: units
            .ok_or_else(|| FrameworkError::Parse(format!("fc missing units: '{value}'")))?,
        dropout,
    })
}

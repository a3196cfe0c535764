//! Static shape checking: walk a conv stack / pool bank / FC description
//! and compute every intermediate shape without building or running
//! anything. A spec that passes this check cannot hit a runtime shape
//! error in the engine — the builder uses the same geometry code.

use super::ops::{conv_geometry, Padding};
use super::{NnError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub filters: usize,
    pub padding: Padding,
}

/// Every intermediate shape of a framework-style network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShapeTrace {
    /// Output of each conv stage, (H, W, C).
    pub conv_outputs: Vec<(usize, usize, usize)>,
    /// Output of each pool in the bank, (H, W, C); empty when the
    /// architecture flattens the conv output directly.
    pub pool_outputs: Vec<(usize, usize, usize)>,
    /// Length of the concatenated feature vector feeding the FC stages.
    pub concat_len: usize,
    /// Width after each FC stage.
    pub fc_widths: Vec<usize>,
    pub num_classes: usize,
}

pub fn conv_output_shape(
    input: (usize, usize, usize),
    spec: &ConvSpec,
) -> Result<(usize, usize, usize)> {
    let g = conv_geometry(input, spec.kernel, spec.stride, spec.padding)?;
    Ok((g.oh, g.ow, spec.filters))
}

pub fn pool_output_shape(
    input: (usize, usize, usize),
    pool: (usize, usize),
) -> Result<(usize, usize, usize)> {
    let (h, w, c) = input;
    let (ph, pw) = pool;
    if ph == 0 || pw == 0 || ph > h || pw > w {
        return Err(NnError::PoolTooLarge(format!(
            "pool {ph}x{pw} on {h}x{w} conv output"
        )));
    }
    Ok((h / ph, w / pw, c))
}

/// Compose conv stages, a (possibly empty) pool bank, and FC widths over an
/// input shape, erroring out at the first stage whose geometry fails.
pub fn check_shapes(
    input: (usize, usize, usize),
    convs: &[ConvSpec],
    pools: &[(usize, usize)],
    fc_widths: &[usize],
    num_classes: usize,
) -> Result<ShapeTrace> {
    let mut shape = input;
    let mut conv_outputs = Vec::with_capacity(convs.len());
    for spec in convs {
        shape = conv_output_shape(shape, spec)?;
        conv_outputs.push(shape);
    }
    let mut pool_outputs = Vec::with_capacity(pools.len());
    let concat_len = if pools.is_empty() {
        shape.0 * shape.1 * shape.2
    } else {
        let mut total = 0;
        for &pool in pools {
            let out = pool_output_shape(shape, pool)?;
            pool_outputs.push(out);
            total += out.0 * out.1 * out.2;
        }
        total
    };
    for &u in fc_widths {
        if u == 0 {
            return Err(NnError::ShapeMismatch("zero-width FC stage".into()));
        }
    }
    if num_classes < 2 {
        return Err(NnError::ShapeMismatch(format!(
            "softmax needs >= 2 classes, got {num_classes}"
        )));
    }
    Ok(ShapeTrace {
        conv_outputs,
        pool_outputs,
        concat_len,
        fc_widths: fc_widths.to_vec(),
        num_classes,
    })
}

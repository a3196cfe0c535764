//! Layer graph and batched forward/backward passes.
//!
//! A `Network` is a flat sequence of layers applied to a batch tensor whose
//! first axis is the batch dimension: rank-4 `[N,H,W,C]` through the conv
//! stack, rank-2 `[N,D]` after the pool bank / flatten. Training forward
//! passes record per-layer caches so `backward` can produce exact
//! reverse-mode gradients of the mean cross-entropy; infer passes take
//! `&self` and mutate nothing.

use std::collections::BTreeMap;

use crate::rng::Rng;
use crate::tensor::Tensor;

use super::ops::{
    bn_batch_stats, col2im, conv_geometry, dropout_mask, im2col, matmul_flat, matmul_nt, matmul_tn,
    softmax_cross_entropy, ConvGeom, Padding,
};
use super::{Mode, NnError, Result};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Per-parameter gradient tensors, keyed by the owning layer's
/// dotted parameter name (e.g. `conv0.kernel`).
pub type Gradients = BTreeMap<String, Tensor>;

#[derive(Debug, Clone)]
pub struct ConvLayer {
    pub name: String,
    /// [kh, kw, cin, cout]
    pub kernel: Tensor,
    /// [cout]
    pub bias: Tensor,
    pub stride: (usize, usize),
    pub padding: Padding,
}

#[derive(Debug, Clone)]
pub struct BatchNormLayer {
    pub name: String,
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
}

impl BatchNormLayer {
    pub fn new(name: impl Into<String>, channels: usize) -> Self {
        BatchNormLayer {
            name: name.into(),
            gamma: Tensor::filled(&[channels], 1.0),
            beta: Tensor::zeros(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::filled(&[channels], 1.0),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DenseLayer {
    pub name: String,
    /// [d, u]
    pub weight: Tensor,
    /// [u]
    pub bias: Tensor,
}

#[derive(Debug, Clone)]
pub enum Layer {
    Conv(ConvLayer),
    BatchNorm(BatchNormLayer),
    Relu,
    /// Parallel average pools over the same input, flattened and
    /// concatenated in bank order. Output is rank 2.
    PoolBank(Vec<(usize, usize)>),
    /// Flatten everything after the batch axis. Output is rank 2.
    Flatten,
    Dropout(f64),
    Dense(DenseLayer),
}

enum LayerCache {
    Conv { cols: Vec<f64>, geom: ConvGeom },
    BatchNorm { xhat: Vec<f64>, inv: Vec<f64> },
    Relu { active: Vec<bool> },
    PoolBank { in_shape: (usize, usize, usize) },
    Flatten { in_shape: Vec<usize> },
    Dropout { mask: Option<Vec<f64>> },
    Dense { input: Tensor },
}

/// Result of a recorded (train-mode) forward pass.
pub struct ForwardPass {
    pub logits: Tensor,
    caches: Vec<LayerCache>,
}

#[derive(Debug, Clone)]
pub struct Network {
    pub layers: Vec<Layer>,
    mode: Mode,
}

impl Network {
    pub fn new(layers: Vec<Layer>) -> Self {
        Network {
            layers,
            mode: Mode::Train,
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    /// Switch to infer mode; the returned network is immutable under
    /// `forward_infer`/`predict_probs` and safe to share across threads.
    pub fn freeze(mut self) -> Network {
        self.mode = Mode::Infer;
        self
    }

    pub fn parameters(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Conv(c) => {
                    out.push((format!("{}.kernel", c.name), &c.kernel));
                    out.push((format!("{}.bias", c.name), &c.bias));
                }
                Layer::BatchNorm(b) => {
                    out.push((format!("{}.gamma", b.name), &b.gamma));
                    out.push((format!("{}.beta", b.name), &b.beta));
                }
                Layer::Dense(d) => {
                    out.push((format!("{}.weight", d.name), &d.weight));
                    out.push((format!("{}.bias", d.name), &d.bias));
                }
                _ => {}
            }
        }
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Conv(c) => {
                    out.push((format!("{}.kernel", c.name), &mut c.kernel));
                    out.push((format!("{}.bias", c.name), &mut c.bias));
                }
                Layer::BatchNorm(b) => {
                    out.push((format!("{}.gamma", b.name), &mut b.gamma));
                    out.push((format!("{}.beta", b.name), &mut b.beta));
                }
                Layer::Dense(d) => {
                    out.push((format!("{}.weight", d.name), &mut d.weight));
                    out.push((format!("{}.bias", d.name), &mut d.bias));
                }
                _ => {}
            }
        }
        out
    }

    /// Non-learned state: batch-norm running statistics.
    pub fn buffers(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for layer in &self.layers {
            if let Layer::BatchNorm(b) = layer {
                out.push((format!("{}.running_mean", b.name), &b.running_mean));
                out.push((format!("{}.running_var", b.name), &b.running_var));
            }
        }
        out
    }

    pub fn buffers_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            if let Layer::BatchNorm(b) = layer {
                out.push((format!("{}.running_mean", b.name), &mut b.running_mean));
                out.push((format!("{}.running_var", b.name), &mut b.running_var));
            }
        }
        out
    }

    /// Recorded train-mode forward pass over a batch. Updates batch-norm
    /// running statistics and consumes dropout randomness from `rng`.
    pub fn forward_train(&mut self, batch: &Tensor, rng: &mut Rng) -> Result<ForwardPass> {
        let mut x = batch.clone();
        let mut caches = Vec::with_capacity(self.layers.len());
        for idx in 0..self.layers.len() {
            let (y, cache, bn_update) =
                forward_layer(&self.layers[idx], &x, Mode::Train, Some(rng))?;
            if let Some(stats) = bn_update {
                if let Layer::BatchNorm(b) = &mut self.layers[idx] {
                    for i in 0..stats.mean.len() {
                        let rm = b.running_mean.data()[i];
                        let rv = b.running_var.data()[i];
                        b.running_mean.data_mut()[i] =
                            (1.0 - BN_MOMENTUM) * rm + BN_MOMENTUM * stats.mean[i];
                        b.running_var.data_mut()[i] =
                            (1.0 - BN_MOMENTUM) * rv + BN_MOMENTUM * stats.var[i];
                    }
                }
            }
            caches.push(cache);
            x = y;
        }
        Ok(ForwardPass { logits: x, caches })
    }

    /// Pure infer-mode forward pass: batch-norm uses running statistics,
    /// dropout is the identity, nothing is mutated.
    pub fn forward_infer(&self, batch: &Tensor) -> Result<Tensor> {
        let mut x = batch.clone();
        for layer in &self.layers {
            let (y, _, _) = forward_layer(layer, &x, Mode::Infer, None)?;
            x = y;
        }
        Ok(x)
    }

    /// Softmax over infer-mode logits: one probability row per instance.
    pub fn predict_probs(&self, batch: &Tensor) -> Result<Tensor> {
        let logits = self.forward_infer(batch)?;
        let (n, k) = (logits.shape()[0], logits.shape()[1]);
        let mut out = Vec::with_capacity(n * k);
        for row in 0..n {
            let slice = Tensor::from_vec(&[k], logits.data()[row * k..(row + 1) * k].to_vec())
                .expect("row slice");
            let (_, probs, _) = softmax_cross_entropy(&slice, 0)?;
            out.extend_from_slice(probs.data());
        }
        Tensor::from_vec(&[n, k], out).map_err(|e| NnError::ShapeMismatch(e.to_string()))
    }

    /// Mean cross-entropy and its exact gradients w.r.t. every parameter,
    /// from a recorded forward pass.
    pub fn backward(&self, pass: &ForwardPass, labels: &[usize]) -> Result<(f64, Gradients)> {
        let (loss, mut grad) = mean_cross_entropy(&pass.logits, labels)?;
        let mut grads = Gradients::new();
        for (layer, cache) in self.layers.iter().zip(&pass.caches).rev() {
            grad = backward_layer(layer, cache, &grad, &mut grads)?;
        }
        Ok((loss, grads))
    }

    /// Train-mode forward + backward in one call: the loss and exact
    /// gradients of the mean cross-entropy over the batch.
    pub fn loss_and_gradients(
        &mut self,
        batch: &Tensor,
        labels: &[usize],
        rng: &mut Rng,
    ) -> Result<(f64, Gradients)> {
        let pass = self.forward_train(batch, rng)?;
        self.backward(&pass, labels)
    }
}

/// Mean softmax cross-entropy over logit rows; gradient rows are
/// (probs − onehot)/N.
pub(crate) fn mean_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    if logits.rank() != 2 || logits.shape()[0] != labels.len() {
        return Err(NnError::ShapeMismatch(format!(
            "logits {:?} vs {} labels",
            logits.shape(),
            labels.len()
        )));
    }
    let (n, k) = (logits.shape()[0], logits.shape()[1]);
    let mut loss = 0.0;
    let mut dlogits = vec![0.0; n * k];
    for i in 0..n {
        let row =
            Tensor::from_vec(&[k], logits.data()[i * k..(i + 1) * k].to_vec()).expect("row slice");
        let (l, _, dl) = softmax_cross_entropy(&row, labels[i])?;
        loss += l;
        for (j, &g) in dl.data().iter().enumerate() {
            dlogits[i * k + j] = g / n as f64;
        }
    }
    Ok((
        loss / n as f64,
        Tensor::from_vec(&[n, k], dlogits).expect("dlogits"),
    ))
}

type LayerOut = (Tensor, LayerCache, Option<super::ops::BnStats>);

fn forward_layer(layer: &Layer, x: &Tensor, mode: Mode, rng: Option<&mut Rng>) -> Result<LayerOut> {
    match layer {
        Layer::Conv(c) => {
            if x.rank() != 4 {
                return Err(NnError::ShapeMismatch(format!(
                    "conv layer {} expects [N,H,W,C], got {:?}",
                    c.name,
                    x.shape()
                )));
            }
            let (n, h, w, cin) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
            let kshape = c.kernel.shape();
            if kshape[2] != cin {
                return Err(NnError::ShapeMismatch(format!(
                    "conv layer {} kernel {:?} vs input channels {}",
                    c.name, kshape, cin
                )));
            }
            let cout = kshape[3];
            let g = conv_geometry((h, w, cin), (kshape[0], kshape[1]), c.stride, c.padding)?;
            let patch = g.patch_len();
            let positions = g.oh * g.ow;
            let mut cols = vec![0.0; n * positions * patch];
            let in_stride = h * w * cin;
            for i in 0..n {
                im2col(
                    &x.data()[i * in_stride..(i + 1) * in_stride],
                    &g,
                    &mut cols[i * positions * patch..(i + 1) * positions * patch],
                );
            }
            let mut out = matmul_flat(&cols, n * positions, patch, c.kernel.data(), cout);
            for row in out.chunks_exact_mut(cout) {
                for (o, &b) in row.iter_mut().zip(c.bias.data()) {
                    *o += b;
                }
            }
            let y = Tensor::from_vec(&[n, g.oh, g.ow, cout], out)
                .map_err(|e| NnError::ShapeMismatch(e.to_string()))?;
            Ok((y, LayerCache::Conv { cols, geom: g }, None))
        }
        Layer::BatchNorm(b) => {
            if x.rank() != 4 {
                return Err(NnError::ShapeMismatch(format!(
                    "batch-norm layer {} expects [N,H,W,C], got {:?}",
                    b.name,
                    x.shape()
                )));
            }
            let n = x.shape()[0];
            let c = x.shape()[3];
            if b.gamma.size() != c {
                return Err(NnError::ShapeMismatch(format!(
                    "batch-norm layer {} has {} channels, input has {}",
                    b.name,
                    b.gamma.size(),
                    c
                )));
            }
            match mode {
                Mode::Train => {
                    if n < 2 {
                        return Err(NnError::BatchTooSmall(n));
                    }
                    let stats = bn_batch_stats(x);
                    let inv: Vec<f64> = stats
                        .var
                        .iter()
                        .map(|&v| 1.0 / (v + BN_EPS).sqrt())
                        .collect();
                    let mut xhat = vec![0.0; x.size()];
                    for (i, &v) in x.data().iter().enumerate() {
                        xhat[i] = (v - stats.mean[i % c]) * inv[i % c];
                    }
                    let y = Tensor::from_fn(x.shape(), |i| {
                        b.gamma.data()[i % c] * xhat[i] + b.beta.data()[i % c]
                    });
                    Ok((y, LayerCache::BatchNorm { xhat, inv }, Some(stats)))
                }
                Mode::Infer => {
                    let y = Tensor::from_fn(x.shape(), |i| {
                        let ch = i % c;
                        b.gamma.data()[ch] * (x.flat(i) - b.running_mean.data()[ch])
                            / (b.running_var.data()[ch] + BN_EPS).sqrt()
                            + b.beta.data()[ch]
                    });
                    Ok((
                        y,
                        LayerCache::BatchNorm {
                            xhat: Vec::new(),
                            inv: Vec::new(),
                        },
                        None,
                    ))
                }
            }
        }
        Layer::Relu => {
            let active: Vec<bool> = x.data().iter().map(|&v| v > 0.0).collect();
            let y = Tensor::from_fn(x.shape(), |i| x.flat(i).max(0.0));
            Ok((y, LayerCache::Relu { active }, None))
        }
        Layer::PoolBank(pools) => {
            assert!(!pools.is_empty(), "pool bank must not be empty");
            if x.rank() != 4 {
                return Err(NnError::ShapeMismatch(format!(
                    "pool bank expects [N,H,W,C], got {:?}",
                    x.shape()
                )));
            }
            let (n, h, w, c) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
            for &(ph, pw) in pools.iter() {
                if ph == 0 || pw == 0 || ph > h || pw > w {
                    return Err(NnError::PoolTooLarge(format!(
                        "pool {ph}x{pw} on {h}x{w} input"
                    )));
                }
            }
            let seg_len: usize = pools.iter().map(|&(ph, pw)| (h / ph) * (w / pw) * c).sum();
            let mut out = vec![0.0; n * seg_len];
            let in_stride = h * w * c;
            for i in 0..n {
                let xi = &x.data()[i * in_stride..(i + 1) * in_stride];
                let mut offset = i * seg_len;
                for &(ph, pw) in pools.iter() {
                    let (oh, ow) = (h / ph, w / pw);
                    let scale = 1.0 / (ph * pw) as f64;
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let dst = offset + (oy * ow + ox) * c;
                            for dy in 0..ph {
                                let iy = oy * ph + dy;
                                for dx in 0..pw {
                                    let src = (iy * w + ox * pw + dx) * c;
                                    for ch in 0..c {
                                        out[dst + ch] += xi[src + ch];
                                    }
                                }
                            }
                        }
                    }
                    for v in &mut out[offset..offset + oh * ow * c] {
                        *v *= scale;
                    }
                    offset += oh * ow * c;
                }
            }
            let y = Tensor::from_vec(&[n, seg_len], out)
                .map_err(|e| NnError::ShapeMismatch(e.to_string()))?;
            Ok((
                y,
                LayerCache::PoolBank {
                    in_shape: (h, w, c),
                },
                None,
            ))
        }
        Layer::Flatten => {
            let n = x.shape()[0];
            let rest: usize = x.shape()[1..].iter().product();
            let y = x
                .reshape(&[n, rest])
                .map_err(|e| NnError::ShapeMismatch(e.to_string()))?;
            Ok((
                y,
                LayerCache::Flatten {
                    in_shape: x.shape().to_vec(),
                },
                None,
            ))
        }
        Layer::Dropout(p) => {
            if mode == Mode::Infer || *p == 0.0 {
                return Ok((x.clone(), LayerCache::Dropout { mask: None }, None));
            }
            let rng = rng.expect("train-mode dropout needs an rng");
            let mask = dropout_mask(x.size(), *p, rng);
            let y = Tensor::from_fn(x.shape(), |i| x.flat(i) * mask[i]);
            Ok((y, LayerCache::Dropout { mask: Some(mask) }, None))
        }
        Layer::Dense(d) => {
            if x.rank() != 2 || x.shape()[1] != d.weight.shape()[0] {
                return Err(NnError::ShapeMismatch(format!(
                    "dense layer {} expects [N,{}], got {:?}",
                    d.name,
                    d.weight.shape()[0],
                    x.shape()
                )));
            }
            let (n, din) = (x.shape()[0], x.shape()[1]);
            let u = d.weight.shape()[1];
            let mut out = matmul_flat(x.data(), n, din, d.weight.data(), u);
            for row in out.chunks_exact_mut(u) {
                for (o, &b) in row.iter_mut().zip(d.bias.data()) {
                    *o += b;
                }
            }
            let y = Tensor::from_vec(&[n, u], out)
                .map_err(|e| NnError::ShapeMismatch(e.to_string()))?;
            Ok((y, LayerCache::Dense { input: x.clone() }, None))
        }
    }
}

fn backward_layer(
    layer: &Layer,
    cache: &LayerCache,
    dy: &Tensor,
    grads: &mut Gradients,
) -> Result<Tensor> {
    match (layer, cache) {
        (Layer::Conv(c), LayerCache::Conv { cols, geom: g }) => {
            let cout = c.kernel.shape()[3];
            let patch = g.patch_len();
            let positions = g.oh * g.ow;
            let n = dy.shape()[0];
            let rows = n * positions;

            let mut dbias = vec![0.0; cout];
            for row in dy.data().chunks_exact(cout) {
                for (acc, &v) in dbias.iter_mut().zip(row) {
                    *acc += v;
                }
            }
            let dkernel = matmul_tn(cols, rows, patch, dy.data(), cout);
            grads.insert(
                format!("{}.kernel", c.name),
                Tensor::from_vec(c.kernel.shape(), dkernel).expect("dkernel shape"),
            );
            grads.insert(
                format!("{}.bias", c.name),
                Tensor::from_vec(&[cout], dbias).expect("dbias shape"),
            );

            let dcols = matmul_nt(dy.data(), rows, cout, c.kernel.data(), patch);
            let in_stride = g.h * g.w * g.cin;
            let mut dx = vec![0.0; n * in_stride];
            for i in 0..n {
                col2im(
                    &dcols[i * positions * patch..(i + 1) * positions * patch],
                    g,
                    &mut dx[i * in_stride..(i + 1) * in_stride],
                );
            }
            Ok(Tensor::from_vec(&[n, g.h, g.w, g.cin], dx).expect("dx shape"))
        }
        (Layer::BatchNorm(b), LayerCache::BatchNorm { xhat, inv }) => {
            assert!(
                !xhat.is_empty(),
                "backward through an infer-mode batch-norm pass"
            );
            let c = b.gamma.size();
            let m = dy.size() / c;
            let mut sum_dy = vec![0.0; c];
            let mut sum_dy_xhat = vec![0.0; c];
            for (i, &g) in dy.data().iter().enumerate() {
                sum_dy[i % c] += g;
                sum_dy_xhat[i % c] += g * xhat[i];
            }
            grads.insert(
                format!("{}.gamma", b.name),
                Tensor::from_vec(&[c], sum_dy_xhat.clone()).expect("dgamma"),
            );
            grads.insert(
                format!("{}.beta", b.name),
                Tensor::from_vec(&[c], sum_dy.clone()).expect("dbeta"),
            );
            let mf = m as f64;
            let dx = Tensor::from_fn(dy.shape(), |i| {
                let ch = i % c;
                b.gamma.data()[ch] * inv[ch] / mf
                    * (mf * dy.flat(i) - xhat[i] * sum_dy_xhat[ch] - sum_dy[ch])
            });
            Ok(dx)
        }
        (Layer::Relu, LayerCache::Relu { active }) => Ok(Tensor::from_fn(dy.shape(), |i| {
            if active[i] {
                dy.flat(i)
            } else {
                0.0
            }
        })),
        (Layer::PoolBank(pools), LayerCache::PoolBank { in_shape }) => {
            let (h, w, c) = *in_shape;
            let n = dy.shape()[0];
            let seg_len = dy.shape()[1];
            let in_stride = h * w * c;
            let mut dx = vec![0.0; n * in_stride];
            for i in 0..n {
                let dyi = &dy.data()[i * seg_len..(i + 1) * seg_len];
                let dxi = &mut dx[i * in_stride..(i + 1) * in_stride];
                let mut offset = 0;
                for &(ph, pw) in pools.iter() {
                    let (oh, ow) = (h / ph, w / pw);
                    let scale = 1.0 / (ph * pw) as f64;
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let src = offset + (oy * ow + ox) * c;
                            for dyy in 0..ph {
                                let iy = oy * ph + dyy;
                                for dxx in 0..pw {
                                    let dst = (iy * w + ox * pw + dxx) * c;
                                    for ch in 0..c {
                                        dxi[dst + ch] += dyi[src + ch] * scale;
                                    }
                                }
                            }
                        }
                    }
                    offset += oh * ow * c;
                }
            }
            Ok(Tensor::from_vec(&[n, h, w, c], dx).expect("pool dx shape"))
        }
        (Layer::Flatten, LayerCache::Flatten { in_shape }) => dy
            .reshape(in_shape)
            .map_err(|e| NnError::ShapeMismatch(e.to_string())),
        (Layer::Dropout(_), LayerCache::Dropout { mask }) => match mask {
            None => Ok(dy.clone()),
            Some(mask) => Ok(Tensor::from_fn(dy.shape(), |i| dy.flat(i) * mask[i])),
        },
        (Layer::Dense(d), LayerCache::Dense { input }) => {
            let (n, din) = (input.shape()[0], input.shape()[1]);
            let u = d.weight.shape()[1];
            let dweight = matmul_tn(input.data(), n, din, dy.data(), u);
            let mut dbias = vec![0.0; u];
            for row in dy.data().chunks_exact(u) {
                for (acc, &v) in dbias.iter_mut().zip(row) {
                    *acc += v;
                }
            }
            grads.insert(
                format!("{}.weight", d.name),
                Tensor::from_vec(&[din, u], dweight).expect("dweight"),
            );
            grads.insert(
                format!("{}.bias", d.name),
                Tensor::from_vec(&[u], dbias).expect("dbias"),
            );
            let dx = matmul_nt(dy.data(), n, u, d.weight.data(), din);
            Ok(Tensor::from_vec(&[n, din], dx).expect("dense dx"))
        }
        _ => unreachable!("layer/cache mismatch"),
    }
}

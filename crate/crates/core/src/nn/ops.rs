//! Layer forward kernels on single instances plus the flat matmul / im2col
//! machinery shared with the batched network engine.

use crate::rng::Rng;
use crate::tensor::Tensor;

use super::{Mode, NnError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// No padding; output extent floor((in − k)/s) + 1.
    Valid,
    /// Symmetric zero padding to output extent ceil(in/s); when the total
    /// pad is odd the extra column/row goes on the high side.
    Same,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    None,
}

// --- flat matrix kernels ----------------------------------------------------

/// C[p,r] = A[p,q] · B[q,r].
pub(crate) fn matmul_flat(a: &[f64], p: usize, q: usize, b: &[f64], r: usize) -> Vec<f64> {
    debug_assert_eq!(a.len(), p * q);
    debug_assert_eq!(b.len(), q * r);
    let mut out = vec![0.0; p * r];
    for i in 0..p {
        let row = &a[i * q..(i + 1) * q];
        let out_row = &mut out[i * r..(i + 1) * r];
        for (k, &a_ik) in row.iter().enumerate() {
            let b_row = &b[k * r..(k + 1) * r];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += a_ik * bv;
            }
        }
    }
    out
}

/// C[q,r] = Aᵀ · B with A[p,q], B[p,r].
pub(crate) fn matmul_tn(a: &[f64], p: usize, q: usize, b: &[f64], r: usize) -> Vec<f64> {
    debug_assert_eq!(a.len(), p * q);
    debug_assert_eq!(b.len(), p * r);
    let mut out = vec![0.0; q * r];
    for i in 0..p {
        let a_row = &a[i * q..(i + 1) * q];
        let b_row = &b[i * r..(i + 1) * r];
        for (k, &a_ik) in a_row.iter().enumerate() {
            let out_row = &mut out[k * r..(k + 1) * r];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += a_ik * bv;
            }
        }
    }
    out
}

/// C[p,r] = A · Bᵀ with A[p,q], B[r,q].
pub(crate) fn matmul_nt(a: &[f64], p: usize, q: usize, b: &[f64], r: usize) -> Vec<f64> {
    debug_assert_eq!(a.len(), p * q);
    debug_assert_eq!(b.len(), r * q);
    let mut out = vec![0.0; p * r];
    for i in 0..p {
        let a_row = &a[i * q..(i + 1) * q];
        let out_row = &mut out[i * r..(i + 1) * r];
        for (j, o) in out_row.iter_mut().enumerate() {
            let b_row = &b[j * q..(j + 1) * q];
            *o = a_row.iter().zip(b_row).map(|(x, y)| x * y).sum();
        }
    }
    out
}

// --- convolution geometry ---------------------------------------------------

/// Resolved geometry of one convolution: output extents and pad offsets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub h: usize,
    pub w: usize,
    pub cin: usize,
    pub kh: usize,
    pub kw: usize,
    pub sh: usize,
    pub sw: usize,
    pub pad_top: usize,
    pub pad_left: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvGeom {
    pub fn patch_len(&self) -> usize {
        self.kh * self.kw * self.cin
    }
}

pub(crate) fn conv_geometry(
    input: (usize, usize, usize),
    kernel: (usize, usize),
    stride: (usize, usize),
    padding: Padding,
) -> Result<ConvGeom> {
    let (h, w, cin) = input;
    let (kh, kw) = kernel;
    let (sh, sw) = stride;
    if kh == 0 || kw == 0 || sh == 0 || sw == 0 {
        return Err(NnError::ShapeMismatch(format!(
            "kernel {kh}x{kw} / stride {sh}x{sw} must be positive"
        )));
    }
    let (oh, ow, pad_top, pad_left) = match padding {
        Padding::Valid => {
            if kh > h || kw > w {
                return Err(NnError::KernelTooLarge(format!(
                    "{kh}x{kw} kernel on {h}x{w} input with valid padding"
                )));
            }
            ((h - kh) / sh + 1, (w - kw) / sw + 1, 0, 0)
        }
        Padding::Same => {
            let oh = h.div_ceil(sh);
            let ow = w.div_ceil(sw);
            let pad_h = ((oh - 1) * sh + kh).saturating_sub(h);
            let pad_w = ((ow - 1) * sw + kw).saturating_sub(w);
            (oh, ow, pad_h / 2, pad_w / 2)
        }
    };
    Ok(ConvGeom {
        h,
        w,
        cin,
        kh,
        kw,
        sh,
        sw,
        pad_top,
        pad_left,
        oh,
        ow,
    })
}

/// Unroll every receptive field into a row of `cols` ([oh·ow, kh·kw·cin]),
/// column order (dh, dw, ci) — the same row-major order as the kernel
/// tensor [kh, kw, cin, cout], so the convolution is one matmul.
pub(crate) fn im2col(x: &[f64], g: &ConvGeom, cols: &mut [f64]) {
    let patch = g.patch_len();
    debug_assert_eq!(cols.len(), g.oh * g.ow * patch);
    cols.fill(0.0);
    for oy in 0..g.oh {
        let iy0 = (oy * g.sh) as isize - g.pad_top as isize;
        for ox in 0..g.ow {
            let ix0 = (ox * g.sw) as isize - g.pad_left as isize;
            let row = (oy * g.ow + ox) * patch;
            for dh in 0..g.kh {
                let iy = iy0 + dh as isize;
                if iy < 0 || iy >= g.h as isize {
                    continue;
                }
                for dw in 0..g.kw {
                    let ix = ix0 + dw as isize;
                    if ix < 0 || ix >= g.w as isize {
                        continue;
                    }
                    let src = (iy as usize * g.w + ix as usize) * g.cin;
                    let dst = row + (dh * g.kw + dw) * g.cin;
                    cols[dst..dst + g.cin].copy_from_slice(&x[src..src + g.cin]);
                }
            }
        }
    }
}

/// Scatter-add of column gradients back onto the input image.
pub(crate) fn col2im(dcols: &[f64], g: &ConvGeom, dx: &mut [f64]) {
    let patch = g.patch_len();
    debug_assert_eq!(dx.len(), g.h * g.w * g.cin);
    for oy in 0..g.oh {
        let iy0 = (oy * g.sh) as isize - g.pad_top as isize;
        for ox in 0..g.ow {
            let ix0 = (ox * g.sw) as isize - g.pad_left as isize;
            let row = (oy * g.ow + ox) * patch;
            for dh in 0..g.kh {
                let iy = iy0 + dh as isize;
                if iy < 0 || iy >= g.h as isize {
                    continue;
                }
                for dw in 0..g.kw {
                    let ix = ix0 + dw as isize;
                    if ix < 0 || ix >= g.w as isize {
                        continue;
                    }
                    let dst = (iy as usize * g.w + ix as usize) * g.cin;
                    let src = row + (dh * g.kw + dw) * g.cin;
                    for c in 0..g.cin {
                        dx[dst + c] += dcols[src + c];
                    }
                }
            }
        }
    }
}

// --- single-instance forward ops -------------------------------------------

/// Cross-correlation of one instance: x [H,W,Cin] with kernel
/// [kh,kw,Cin,Cout] and bias [Cout] -> [H',W',Cout].
pub fn conv2d_forward(
    x: &Tensor,
    kernel: &Tensor,
    bias: &Tensor,
    stride: (usize, usize),
    padding: Padding,
) -> Result<Tensor> {
    if x.rank() != 3 || kernel.rank() != 4 {
        return Err(NnError::ShapeMismatch(format!(
            "conv2d needs x rank 3 and kernel rank 4, got {:?} / {:?}",
            x.shape(),
            kernel.shape()
        )));
    }
    let (h, w, cin) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (kh, kw, kcin, cout) = (
        kernel.shape()[0],
        kernel.shape()[1],
        kernel.shape()[2],
        kernel.shape()[3],
    );
    if kcin != cin || bias.size() != cout {
        return Err(NnError::ShapeMismatch(format!(
            "kernel {:?} / bias {:?} incompatible with input {:?}",
            kernel.shape(),
            bias.shape(),
            x.shape()
        )));
    }
    let g = conv_geometry((h, w, cin), (kh, kw), stride, padding)?;
    let mut cols = vec![0.0; g.oh * g.ow * g.patch_len()];
    im2col(x.data(), &g, &mut cols);
    let mut out = matmul_flat(&cols, g.oh * g.ow, g.patch_len(), kernel.data(), cout);
    for row in out.chunks_exact_mut(cout) {
        for (o, &b) in row.iter_mut().zip(bias.data()) {
            *o += b;
        }
    }
    Tensor::from_vec(&[g.oh, g.ow, cout], out).map_err(|e| NnError::ShapeMismatch(e.to_string()))
}

/// Non-overlapping average pooling with stride == pool size; remainder
/// rows/columns are discarded.
pub fn avg_pool_forward(x: &Tensor, pool: (usize, usize)) -> Result<Tensor> {
    if x.rank() != 3 {
        return Err(NnError::ShapeMismatch(format!(
            "avg_pool needs rank-3 input, got {:?}",
            x.shape()
        )));
    }
    let (h, w, c) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (ph, pw) = pool;
    if ph == 0 || pw == 0 || ph > h || pw > w {
        return Err(NnError::PoolTooLarge(format!(
            "pool {ph}x{pw} on {h}x{w} input"
        )));
    }
    let (oh, ow) = (h / ph, w / pw);
    let scale = 1.0 / (ph * pw) as f64;
    let xd = x.data();
    let mut out = vec![0.0; oh * ow * c];
    for oy in 0..oh {
        for ox in 0..ow {
            for dy in 0..ph {
                let iy = oy * ph + dy;
                for dx in 0..pw {
                    let ix = ox * pw + dx;
                    let src = (iy * w + ix) * c;
                    let dst = (oy * ow + ox) * c;
                    for ch in 0..c {
                        out[dst + ch] += xd[src + ch];
                    }
                }
            }
        }
    }
    for v in &mut out {
        *v *= scale;
    }
    Tensor::from_vec(&[oh, ow, c], out).map_err(|e| NnError::ShapeMismatch(e.to_string()))
}

/// Flatten each part row-major and concatenate in list order -> rank-1.
pub fn concat_flatten(parts: &[Tensor]) -> Result<Tensor> {
    if parts.is_empty() {
        return Err(NnError::EmptyInput);
    }
    let total: usize = parts.iter().map(Tensor::size).sum();
    let mut data = Vec::with_capacity(total);
    for p in parts {
        data.extend_from_slice(p.data());
    }
    Tensor::from_vec(&[total], data).map_err(|e| NnError::ShapeMismatch(e.to_string()))
}

/// Inverted-scaling dropout mask: 0 with probability `drop_prob`, otherwise
/// 1/(1−drop_prob).
pub fn dropout_mask(len: usize, drop_prob: f64, rng: &mut Rng) -> Vec<f64> {
    assert!(
        (0.0..1.0).contains(&drop_prob),
        "drop_prob must be in [0, 1)"
    );
    let keep_scale = 1.0 / (1.0 - drop_prob);
    (0..len)
        .map(|_| {
            if rng.next_f64() < drop_prob {
                0.0
            } else {
                keep_scale
            }
        })
        .collect()
}

/// Dropout: zero each element with probability `drop_prob` and scale the
/// survivors by 1/(1−drop_prob) in train mode; identity in infer mode.
pub fn dropout_forward(x: &Tensor, drop_prob: f64, mode: Mode, rng: &mut Rng) -> Tensor {
    assert!(
        (0.0..1.0).contains(&drop_prob),
        "drop_prob must be in [0, 1)"
    );
    if mode == Mode::Infer || drop_prob == 0.0 {
        return x.clone();
    }
    let mask = dropout_mask(x.size(), drop_prob, rng);
    Tensor::from_fn(x.shape(), |i| x.flat(i) * mask[i])
}

/// Fully connected layer on one vector: activation(xᵀW + b).
pub fn dense_forward(x: &Tensor, w: &Tensor, b: &Tensor, activation: Activation) -> Result<Tensor> {
    if x.rank() != 1 || w.rank() != 2 || x.size() != w.shape()[0] || b.size() != w.shape()[1] {
        return Err(NnError::ShapeMismatch(format!(
            "dense: x {:?}, W {:?}, b {:?}",
            x.shape(),
            w.shape(),
            b.shape()
        )));
    }
    let (d, u) = (w.shape()[0], w.shape()[1]);
    let mut out = b.data().to_vec();
    for i in 0..d {
        let xi = x.flat(i);
        if xi == 0.0 {
            continue;
        }
        let w_row = &w.data()[i * u..(i + 1) * u];
        for (o, &wv) in out.iter_mut().zip(w_row) {
            *o += xi * wv;
        }
    }
    if activation == Activation::Relu {
        for v in &mut out {
            *v = v.max(0.0);
        }
    }
    Tensor::from_vec(&[u], out).map_err(|e| NnError::ShapeMismatch(e.to_string()))
}

/// Numerically stable softmax + cross-entropy on one logit vector.
/// Returns (loss, probabilities, d loss / d logits).
pub fn softmax_cross_entropy(logits: &Tensor, label: usize) -> Result<(f64, Tensor, Tensor)> {
    let k = logits.size();
    if logits.rank() != 1 || k < 2 {
        return Err(NnError::ShapeMismatch(format!(
            "softmax needs a rank-1 vector of >= 2 logits, got {:?}",
            logits.shape()
        )));
    }
    if label >= k {
        return Err(NnError::LabelOutOfRange { label, classes: k });
    }
    let max = logits
        .data()
        .iter()
        .fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let exps: Vec<f64> = logits.data().iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let probs: Vec<f64> = exps.iter().map(|&e| e / sum).collect();
    let loss = -probs[label].ln();
    let dlogits: Vec<f64> = probs
        .iter()
        .enumerate()
        .map(|(i, &p)| if i == label { p - 1.0 } else { p })
        .collect();
    Ok((
        loss,
        Tensor::from_vec(&[k], probs).unwrap(),
        Tensor::from_vec(&[k], dlogits).unwrap(),
    ))
}

// --- batch normalization ----------------------------------------------------

pub(crate) struct BnStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// Per-channel mean and (population) variance over N·H·W positions of a
/// rank-4 [N,H,W,C] batch.
pub(crate) fn bn_batch_stats(batch: &Tensor) -> BnStats {
    let c = *batch.shape().last().unwrap();
    let m = batch.size() / c;
    let mut mean = vec![0.0; c];
    for (i, &v) in batch.data().iter().enumerate() {
        mean[i % c] += v;
    }
    for v in &mut mean {
        *v /= m as f64;
    }
    let mut var = vec![0.0; c];
    for (i, &v) in batch.data().iter().enumerate() {
        let d = v - mean[i % c];
        var[i % c] += d * d;
    }
    for v in &mut var {
        *v /= m as f64;
    }
    BnStats { mean, var }
}

/// Batch normalization over a [N,H,W,C] batch. In train mode statistics are
/// computed over N·H·W per channel and running buffers are updated as
/// running ← (1−momentum)·running + momentum·batch; in infer mode the
/// running buffers are used and nothing is mutated.
pub fn batch_norm_forward(
    batch: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    running_mean: &mut Tensor,
    running_var: &mut Tensor,
    mode: Mode,
    momentum: f64,
    eps: f64,
) -> Result<Tensor> {
    if batch.rank() != 4 {
        return Err(NnError::ShapeMismatch(format!(
            "batch_norm needs [N,H,W,C] input, got {:?}",
            batch.shape()
        )));
    }
    let c = batch.shape()[3];
    for (name, t) in [
        ("gamma", gamma),
        ("beta", beta),
        ("running_mean", running_mean),
        ("running_var", running_var),
    ] {
        if t.size() != c {
            return Err(NnError::ShapeMismatch(format!(
                "{} has {} entries for {} channels",
                name,
                t.size(),
                c
            )));
        }
    }
    let n = batch.shape()[0];
    let (mean, var): (Vec<f64>, Vec<f64>) = match mode {
        Mode::Train => {
            if n < 2 {
                return Err(NnError::BatchTooSmall(n));
            }
            let stats = bn_batch_stats(batch);
            for i in 0..c {
                let rm = running_mean.data()[i];
                let rv = running_var.data()[i];
                running_mean.data_mut()[i] = (1.0 - momentum) * rm + momentum * stats.mean[i];
                running_var.data_mut()[i] = (1.0 - momentum) * rv + momentum * stats.var[i];
            }
            (stats.mean, stats.var)
        }
        Mode::Infer => (running_mean.data().to_vec(), running_var.data().to_vec()),
    };
    let inv: Vec<f64> = var.iter().map(|&v| 1.0 / (v + eps).sqrt()).collect();
    let out = Tensor::from_fn(batch.shape(), |i| {
        let ch = i % c;
        gamma.data()[ch] * (batch.flat(i) - mean[ch]) * inv[ch] + beta.data()[ch]
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_first_layer_combines_re_im() {
        // All-ones [4,3,1] input, 2x1 kernel of ones, stride 2x1 valid:
        // every output is Re + Im = 2.
        let x = Tensor::filled(&[4, 3, 1], 1.0);
        let kernel = Tensor::filled(&[2, 1, 1, 1], 1.0);
        let bias = Tensor::zeros(&[1]);
        let out = conv2d_forward(&x, &kernel, &bias, (2, 1), Padding::Valid).unwrap();
        assert_eq!(out.shape(), &[2, 3, 1]);
        assert!(out.data().iter().all(|&v| v == 2.0));
    }

    #[test]
    fn conv_identity_kernel() {
        let x = Tensor::from_fn(&[3, 4, 1], |i| i as f64);
        let kernel = Tensor::filled(&[1, 1, 1, 1], 1.0);
        let bias = Tensor::zeros(&[1]);
        let out = conv2d_forward(&x, &kernel, &bias, (1, 1), Padding::Valid).unwrap();
        assert_eq!(out.data(), x.data());
    }

    #[test]
    fn conv_same_padding_puts_extra_on_high_side() {
        // H=3, k=2, s=1, same: oh=3, pad_total=1 -> pad_top=0, pad_bottom=1.
        let x = Tensor::from_vec(&[3, 1, 1], vec![1.0, 2.0, 3.0]).unwrap();
        let kernel = Tensor::filled(&[2, 1, 1, 1], 1.0);
        let bias = Tensor::zeros(&[1]);
        let out = conv2d_forward(&x, &kernel, &bias, (1, 1), Padding::Same).unwrap();
        assert_eq!(out.data(), &[3.0, 5.0, 3.0]);
    }

    #[test]
    fn conv_kernel_too_large() {
        let x = Tensor::zeros(&[3, 3, 1]);
        let kernel = Tensor::zeros(&[4, 1, 1, 1]);
        let bias = Tensor::zeros(&[1]);
        assert!(matches!(
            conv2d_forward(&x, &kernel, &bias, (1, 1), Padding::Valid),
            Err(NnError::KernelTooLarge(_))
        ));
    }

    #[test]
    fn avg_pool_examples() {
        let x = Tensor::from_vec(&[2, 2, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let out = avg_pool_forward(&x, (2, 2)).unwrap();
        assert_eq!(out.shape(), &[1, 1, 1]);
        assert_eq!(out.flat(0), 2.5);

        let id = avg_pool_forward(&x, (1, 1)).unwrap();
        assert_eq!(id, x);

        // H=5, ph=2 -> output height 2, row 5 discarded.
        let tall = Tensor::from_fn(&[5, 2, 1], |i| i as f64);
        let pooled = avg_pool_forward(&tall, (2, 1)).unwrap();
        assert_eq!(pooled.shape(), &[2, 2, 1]);

        assert!(matches!(
            avg_pool_forward(&x, (3, 1)),
            Err(NnError::PoolTooLarge(_))
        ));
    }

    #[test]
    fn concat_flatten_examples() {
        let a = Tensor::from_vec(&[1, 2], vec![1.0, 2.0]).unwrap();
        let b = Tensor::from_vec(&[1], vec![3.0]).unwrap();
        let out = concat_flatten(&[a.clone(), b]).unwrap();
        assert_eq!(out.shape(), &[3]);
        assert_eq!(out.data(), &[1.0, 2.0, 3.0]);

        let single = concat_flatten(&[a]).unwrap();
        assert_eq!(single.data(), &[1.0, 2.0]);

        assert!(matches!(concat_flatten(&[]), Err(NnError::EmptyInput)));
    }

    #[test]
    fn dropout_modes() {
        let x = Tensor::filled(&[100], 1.0);
        let mut rng = Rng::new(1);
        let infer = dropout_forward(&x, 0.8, Mode::Infer, &mut rng);
        assert_eq!(infer, x);
        let zero = dropout_forward(&x, 0.0, Mode::Train, &mut rng);
        assert_eq!(zero, x);
        let train = dropout_forward(&x, 0.8, Mode::Train, &mut rng);
        assert!(train
            .data()
            .iter()
            .all(|&v| v == 0.0 || (v - 5.0).abs() < 1e-15));
    }

    #[test]
    fn dropout_large_sample_statistics() {
        let n = 1_000_000;
        let x = Tensor::filled(&[n], 1.0);
        let mut rng = Rng::substream(2024, &[0xd20b]);
        let out = dropout_forward(&x, 0.8, Mode::Train, &mut rng);
        let survivors = out.data().iter().filter(|&&v| v != 0.0).count();
        let frac = survivors as f64 / n as f64;
        assert!((frac - 0.2).abs() < 0.005, "survivor fraction {frac}");
        let mean = out.sum() / n as f64;
        assert!((mean - 1.0).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn dense_examples() {
        let x = Tensor::from_vec(&[2], vec![-1.0, 2.0]).unwrap();
        let w = Tensor::identity(2);
        let b = Tensor::zeros(&[2]);
        let out = dense_forward(&x, &w, &b, Activation::Relu).unwrap();
        assert_eq!(out.data(), &[0.0, 2.0]);

        let x0 = Tensor::zeros(&[2]);
        let b = Tensor::from_vec(&[2], vec![-0.5, 0.7]).unwrap();
        let out = dense_forward(&x0, &w, &b, Activation::None).unwrap();
        assert_eq!(out.data(), b.data());

        let bad = Tensor::zeros(&[3]);
        assert!(dense_forward(&bad, &w, &b, Activation::None).is_err());
    }

    #[test]
    fn softmax_examples() {
        let (loss, probs, _) =
            softmax_cross_entropy(&Tensor::from_vec(&[2], vec![0.0, 0.0]).unwrap(), 0).unwrap();
        assert!((probs.flat(0) - 0.5).abs() < 1e-15);
        assert!((loss - (2.0f64).ln()).abs() < 1e-15);

        // Max-shift keeps huge logits finite.
        let (loss, probs, _) =
            softmax_cross_entropy(&Tensor::from_vec(&[2], vec![1000.0, 0.0]).unwrap(), 0).unwrap();
        assert!(loss.is_finite() && loss < 1e-9);
        assert!(probs.data().iter().all(|p| p.is_finite()));

        assert!(matches!(
            softmax_cross_entropy(&Tensor::zeros(&[3]), 3),
            Err(NnError::LabelOutOfRange {
                label: 3,
                classes: 3
            })
        ));
    }

    #[test]
    fn softmax_is_probability_vector() {
        let mut rng = Rng::new(3);
        for _ in 0..100 {
            let k = 2 + rng.below(20);
            let logits = Tensor::from_fn(&[k], |_| rng.uniform(-30.0, 30.0));
            let (_, probs, _) = softmax_cross_entropy(&logits, 0).unwrap();
            assert!(probs.data().iter().all(|&p| p >= 0.0));
            assert!((probs.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn batch_norm_basics() {
        let gamma = Tensor::filled(&[2], 1.0);
        let beta = Tensor::zeros(&[2]);

        // Constant batch normalizes to zero.
        let x = Tensor::filled(&[3, 2, 2, 2], 5.0);
        let mut rm = Tensor::zeros(&[2]);
        let mut rv = Tensor::filled(&[2], 1.0);
        let out = batch_norm_forward(&x, &gamma, &beta, &mut rm, &mut rv, Mode::Train, 0.1, 1e-5)
            .unwrap();
        assert!(out.data().iter().all(|&v| v.abs() < 1e-12));
        // Running mean moved toward 5 by one momentum step.
        assert!((rm.flat(0) - 0.5).abs() < 1e-12);

        // Any batch: per-channel mean ~0, var ~1.
        let mut rng = Rng::new(8);
        let x = Tensor::from_fn(&[4, 3, 3, 2], |_| rng.uniform(-2.0, 2.0));
        let mut rm = Tensor::zeros(&[2]);
        let mut rv = Tensor::filled(&[2], 1.0);
        let out = batch_norm_forward(&x, &gamma, &beta, &mut rm, &mut rv, Mode::Train, 0.1, 1e-5)
            .unwrap();
        let stats = bn_batch_stats(&out);
        for c in 0..2 {
            assert!(stats.mean[c].abs() < 1e-6);
            assert!((stats.var[c] - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn batch_norm_absorbs_input_scaling() {
        // Scaling the whole batch by 1000 changes the train-mode output
        // only through eps.
        let mut rng = Rng::new(21);
        let x = Tensor::from_fn(&[4, 3, 3, 2], |_| rng.uniform(-8.0, 8.0));
        let x_big = x.scale(1000.0);
        let gamma = Tensor::filled(&[2], 1.0);
        let beta = Tensor::zeros(&[2]);
        let buf = || (Tensor::zeros(&[2]), Tensor::filled(&[2], 1.0));
        let (mut rm1, mut rv1) = buf();
        let (mut rm2, mut rv2) = buf();
        let a = batch_norm_forward(
            &x,
            &gamma,
            &beta,
            &mut rm1,
            &mut rv1,
            Mode::Train,
            0.1,
            1e-5,
        )
        .unwrap();
        let b = batch_norm_forward(
            &x_big,
            &gamma,
            &beta,
            &mut rm2,
            &mut rv2,
            Mode::Train,
            0.1,
            1e-5,
        )
        .unwrap();
        for (u, v) in a.data().iter().zip(b.data()) {
            assert!((u - v).abs() < 1e-6, "{u} vs {v}");
        }
    }

    #[test]
    fn batch_norm_batch_too_small() {
        let x = Tensor::zeros(&[1, 2, 2, 1]);
        let gamma = Tensor::filled(&[1], 1.0);
        let beta = Tensor::zeros(&[1]);
        let mut rm = Tensor::zeros(&[1]);
        let mut rv = Tensor::filled(&[1], 1.0);
        assert!(matches!(
            batch_norm_forward(&x, &gamma, &beta, &mut rm, &mut rv, Mode::Train, 0.1, 1e-5),
            Err(NnError::BatchTooSmall(1))
        ));
        // Infer mode has no batch-size requirement.
        assert!(
            batch_norm_forward(&x, &gamma, &beta, &mut rm, &mut rv, Mode::Infer, 0.1, 1e-5).is_ok()
        );
    }
}

//! Finite-difference verification of the backward pass.
//!
//! The check only ever drives the network *forward*: central differences
//! (loss(θ+h) − loss(θ−h)) / 2h per parameter element, compared against the
//! analytic gradients. It stays independent of the backward code it judges.
//! Dropout must be disabled (probability 0 or absent); batch norm runs in
//! train mode on the fixed batch, and every evaluation works on a clone so
//! running statistics never leak between probes.

use crate::rng::Rng;
use crate::tensor::Tensor;

use super::net::{BatchNormLayer, Layer, Network};
use super::Result;

/// Outcome of one finite-difference sweep.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Largest relative error over all checked elements.
    pub max_rel_err: f64,
    /// Name of the parameter where the maximum occurred.
    pub worst_param: String,
    /// Total number of gradient elements compared.
    pub checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err < tol
    }
}

/// Relative error with a floor: tiny gradients are compared absolutely at
/// floor * tolerance.
fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

fn train_loss(net: &Network, batch: &Tensor, labels: &[usize]) -> Result<f64> {
    let mut probe = net.clone();
    let mut rng = Rng::new(0); // never consumed: dropout is disabled
    let pass = probe.forward_train(batch, &mut rng)?;
    let (loss, _) = super::net::mean_cross_entropy(&pass.logits, labels)?;
    Ok(loss)
}

/// Compare backprop gradients of the mean cross-entropy against central
/// finite differences at step `h` for every parameter element.
pub fn check_network_gradients(
    net: &Network,
    batch: &Tensor,
    labels: &[usize],
    h: f64,
) -> Result<GradCheckReport> {
    assert!(
        net.layers
            .iter()
            .all(|l| !matches!(l, super::Layer::Dropout(p) if *p > 0.0)),
        "gradient checks require dropout to be disabled"
    );
    let mut work = net.clone();
    let mut rng = Rng::new(0);
    let (_, grads) = work.loss_and_gradients(batch, labels, &mut rng)?;

    let mut max_rel_err = 0.0f64;
    let mut worst_param = String::new();
    let mut checked = 0usize;
    let param_names: Vec<String> = net.parameters().into_iter().map(|(n, _)| n).collect();
    for name in param_names {
        let size = net
            .parameters()
            .into_iter()
            .find(|(n, _)| *n == name)
            .map(|(_, t)| t.size())
            .expect("parameter exists");
        for i in 0..size {
            let mut plus = net.clone();
            nudge(&mut plus, &name, i, h);
            let mut minus = net.clone();
            nudge(&mut minus, &name, i, -h);
            let fd = (train_loss(&plus, batch, labels)? - train_loss(&minus, batch, labels)?)
                / (2.0 * h);
            let bp = grads[&name].flat(i);
            let e = rel_err(fd, bp);
            if e > max_rel_err {
                max_rel_err = e;
                worst_param = name.clone();
            }
            checked += 1;
        }
    }
    Ok(GradCheckReport {
        max_rel_err,
        worst_param,
        checked,
    })
}

fn nudge(net: &mut Network, name: &str, index: usize, delta: f64) {
    for (n, t) in net.parameters_mut() {
        if n == name {
            t.data_mut()[index] += delta;
            return;
        }
    }
    panic!("unknown parameter {name}");
}

/// Layer family exercised by one randomized check sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckTarget {
    Conv2d,
    BatchNorm,
    AvgPool,
    Dense,
}

impl CheckTarget {
    pub const ALL: [CheckTarget; 4] = [
        CheckTarget::Conv2d,
        CheckTarget::BatchNorm,
        CheckTarget::AvgPool,
        CheckTarget::Dense,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            CheckTarget::Conv2d => "conv2d",
            CheckTarget::BatchNorm => "batch_norm",
            CheckTarget::AvgPool => "avg_pool",
            CheckTarget::Dense => "dense",
        }
    }
}

fn small_tensor(shape: &[usize], scale: f64, rng: &mut Rng) -> Tensor {
    Tensor::from_fn(shape, |_| rng.uniform(-scale, scale))
}

fn random_conv(
    name: &str,
    input: (usize, usize, usize),
    rng: &mut Rng,
) -> (super::ConvLayer, (usize, usize, usize)) {
    use super::ops::conv_geometry;
    let (h, w, cin) = input;
    let kh = 1 + rng.below(h.min(3));
    let kw = 1 + rng.below(w.min(3));
    let stride = (1 + rng.below(2), 1 + rng.below(2));
    let padding = if rng.next_f64() < 0.5 {
        super::Padding::Valid
    } else {
        super::Padding::Same
    };
    let cout = 1 + rng.below(3);
    let layer = super::ConvLayer {
        name: name.to_string(),
        kernel: small_tensor(&[kh, kw, cin, cout], 0.6, rng),
        bias: small_tensor(&[cout], 0.1, rng),
        stride,
        padding,
    };
    let g = conv_geometry((h, w, cin), (kh, kw), stride, padding).expect("kernel fits");
    (layer, (g.oh, g.ow, cout))
}

fn head(din: usize, classes: usize, rng: &mut Rng) -> super::DenseLayer {
    super::DenseLayer {
        name: "head".to_string(),
        weight: small_tensor(&[din, classes], (2.0 / din as f64).sqrt(), rng),
        bias: small_tensor(&[classes], 0.05, rng),
    }
}

/// One random configuration for a layer family: a tiny net that routes
/// gradients both *to* the target layer's parameters and *through* its
/// input, plus a matching batch and labels.
pub fn random_layer_check(target: CheckTarget, seed: u64) -> (Network, Tensor, Vec<usize>) {
    let mut rng = Rng::substream(seed, &[0x6763_6b21]);
    let n = 3;
    let classes = 2 + rng.below(2);
    let (layers, batch) = match target {
        CheckTarget::Conv2d => {
            let input = (5 + rng.below(3), 4 + rng.below(3), 1 + rng.below(2));
            let (conv_a, mid) = random_conv("conv_a", input, &mut rng);
            let (conv_b, out) = random_conv("conv_b", mid, &mut rng);
            let layers = vec![
                Layer::Conv(conv_a),
                Layer::Conv(conv_b),
                Layer::Flatten,
                Layer::Dense(head(out.0 * out.1 * out.2, classes, &mut rng)),
            ];
            let batch = small_tensor(&[n, input.0, input.1, input.2], 1.0, &mut rng);
            (layers, batch)
        }
        CheckTarget::BatchNorm => {
            let input = (5 + rng.below(3), 4 + rng.below(3), 1 + rng.below(2));
            let (conv, mid) = random_conv("conv_a", input, &mut rng);
            let channels = mid.2;
            let mut bn = BatchNormLayer::new("bn", channels);
            bn.gamma = small_tensor(&[channels], 1.0, &mut rng);
            bn.beta = small_tensor(&[channels], 0.3, &mut rng);
            let layers = vec![
                Layer::Conv(conv),
                Layer::BatchNorm(bn),
                Layer::Relu,
                Layer::Flatten,
                Layer::Dense(head(mid.0 * mid.1 * mid.2, classes, &mut rng)),
            ];
            let batch = small_tensor(&[n, input.0, input.1, input.2], 1.0, &mut rng);
            (layers, batch)
        }
        CheckTarget::AvgPool => {
            let input = (6 + rng.below(3), 5 + rng.below(3), 1 + rng.below(2));
            let (conv, mid) = random_conv("conv_a", input, &mut rng);
            let mut pools = Vec::new();
            for _ in 0..1 + rng.below(2) {
                pools.push((1 + rng.below(mid.0.min(3)), 1 + rng.below(mid.1.min(3))));
            }
            let concat: usize = pools
                .iter()
                .map(|&(ph, pw)| (mid.0 / ph) * (mid.1 / pw) * mid.2)
                .sum();
            let layers = vec![
                Layer::Conv(conv),
                Layer::PoolBank(pools),
                Layer::Dense(head(concat, classes, &mut rng)),
            ];
            let batch = small_tensor(&[n, input.0, input.1, input.2], 1.0, &mut rng);
            (layers, batch)
        }
        CheckTarget::Dense => {
            let din = 4 + rng.below(5);
            let hidden = 3 + rng.below(4);
            let layers = vec![
                Layer::Dense(super::DenseLayer {
                    name: "fc_a".to_string(),
                    weight: small_tensor(&[din, hidden], 0.6, &mut rng),
                    bias: small_tensor(&[hidden], 0.1, &mut rng),
                }),
                Layer::Relu,
                Layer::Dense(head(hidden, classes, &mut rng)),
            ];
            let batch = small_tensor(&[n, din], 1.0, &mut rng);
            (layers, batch)
        }
    };
    let labels = (0..n).map(|i| (seed as usize + i) % classes).collect();
    (Network::new(layers), batch, labels)
}

/// Run `configs` random finite-difference checks for one layer family and
/// return the worst report.
pub fn sweep_layer_checks(
    target: CheckTarget,
    configs: usize,
    base_seed: u64,
    h: f64,
) -> Result<GradCheckReport> {
    let mut worst = GradCheckReport {
        max_rel_err: 0.0,
        worst_param: String::new(),
        checked: 0,
    };
    for i in 0..configs {
        let (net, batch, labels) = random_layer_check(target, base_seed.wrapping_add(i as u64));
        let report = check_network_gradients(&net, &batch, &labels, h)?;
        worst.checked += report.checked;
        if report.max_rel_err > worst.max_rel_err {
            worst.max_rel_err = report.max_rel_err;
            worst.worst_param = format!("{} (config {})", report.worst_param, i);
        }
    }
    Ok(worst)
}

/// Finite-difference check of the fused softmax + cross-entropy gradient
/// on a random logit vector; returns the max relative error.
pub fn check_softmax_gradients(classes: usize, seed: u64, h: f64) -> f64 {
    let mut rng = Rng::substream(seed, &[0x736d_ce]);
    let logits = Tensor::from_fn(&[classes], |_| rng.uniform(-3.0, 3.0));
    let label = rng.below(classes);
    let (_, _, dlogits) = super::ops::softmax_cross_entropy(&logits, label).expect("valid logits");
    let mut max_err = 0.0f64;
    for i in 0..classes {
        let mut plus = logits.clone();
        plus.data_mut()[i] += h;
        let mut minus = logits.clone();
        minus.data_mut()[i] -= h;
        let (lp, _, _) = super::ops::softmax_cross_entropy(&plus, label).unwrap();
        let (lm, _, _) = super::ops::softmax_cross_entropy(&minus, label).unwrap();
        let fd = (lp - lm) / (2.0 * h);
        max_err = max_err.max(rel_err(fd, dlogits.flat(i)));
    }
    max_err
}

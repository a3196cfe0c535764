//! SGD and Adam parameter updates.

use std::collections::BTreeMap;

use crate::tensor::Tensor;

use super::net::{Gradients, Network};
use super::{NnError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    Sgd {
        lr: f64,
    },
    Adam {
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
    },
}

/// Adam with the conventional defaults.
pub fn adam_defaults(lr: f64) -> OptimizerKind {
    OptimizerKind::Adam {
        lr,
        beta1: 0.9,
        beta2: 0.999,
        eps: 1e-8,
    }
}

#[derive(Debug, Clone)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

/// Stateful optimizer: Adam keeps bias-corrected first/second moments per
/// parameter, keyed by parameter name; `step_count` starts at 1 on the
/// first update.
#[derive(Debug, Clone)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    moments: BTreeMap<String, Moments>,
    step_count: u64,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind) -> Self {
        Optimizer {
            kind,
            moments: BTreeMap::new(),
            step_count: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Apply one update to every parameter that has a gradient entry.
    pub fn step(&mut self, net: &mut Network, grads: &Gradients) -> Result<()> {
        self.step_count += 1;
        let t = self.step_count;
        for (name, param) in net.parameters_mut() {
            let Some(grad) = grads.get(&name) else {
                continue;
            };
            if grad.shape() != param.shape() {
                return Err(NnError::ShapeMismatch(format!(
                    "gradient for {} has shape {:?}, parameter {:?}",
                    name,
                    grad.shape(),
                    param.shape()
                )));
            }
            match self.kind {
                OptimizerKind::Sgd { lr } => {
                    for (p, &g) in param.data_mut().iter_mut().zip(grad.data()) {
                        *p -= lr * g;
                    }
                }
                OptimizerKind::Adam {
                    lr,
                    beta1,
                    beta2,
                    eps,
                } => {
                    let entry = self.moments.entry(name.clone()).or_insert_with(|| Moments {
                        m: vec![0.0; param.size()],
                        v: vec![0.0; param.size()],
                    });
                    let bc1 = 1.0 - beta1.powi(t as i32);
                    let bc2 = 1.0 - beta2.powi(t as i32);
                    for ((p, &g), (m, v)) in param
                        .data_mut()
                        .iter_mut()
                        .zip(grad.data())
                        .zip(entry.m.iter_mut().zip(entry.v.iter_mut()))
                    {
                        *m = beta1 * *m + (1.0 - beta1) * g;
                        *v = beta2 * *v + (1.0 - beta2) * g * g;
                        let m_hat = *m / bc1;
                        let v_hat = *v / bc2;
                        *p -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}

/// One SGD update on a free-standing parameter tensor.
pub fn sgd_step(param: &Tensor, grad: &Tensor, lr: f64) -> Result<Tensor> {
    if param.shape() != grad.shape() {
        return Err(NnError::ShapeMismatch(format!(
            "sgd: param {:?} vs grad {:?}",
            param.shape(),
            grad.shape()
        )));
    }
    Ok(Tensor::from_fn(param.shape(), |i| {
        param.flat(i) - lr * grad.flat(i)
    }))
}

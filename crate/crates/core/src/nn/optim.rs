use serde::{Deserialize, Serialize};

use super::model::ModelParams;
use super::real::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OptimizerKind {
    Sgd {
        #[serde(default = "default_momentum")]
        momentum: f64,
        #[serde(default = "default_weight_decay")]
        weight_decay: f64,
    },
    Adam {
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_eps")]
        eps: f64,
    },
}

fn default_momentum() -> f64 {
    0.9
}
fn default_weight_decay() -> f64 {
    1e-5
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}

impl OptimizerKind {
    pub fn sgd() -> Self {
        OptimizerKind::Sgd { momentum: default_momentum(), weight_decay: default_weight_decay() }
    }

    pub fn adam() -> Self {
        OptimizerKind::Adam { beta1: default_beta1(), beta2: default_beta2(), eps: default_eps() }
    }
}

/// Per-parameter optimizer buffers, mirroring the model's tensor shapes.
#[derive(Clone, Debug, PartialEq)]
pub enum OptimizerState<T> {
    Sgd { velocity: Vec<Vec<T>> },
    Adam { m: Vec<Vec<T>>, v: Vec<Vec<T>>, step: u64 },
}

impl<T: Real> OptimizerState<T> {
    pub fn new(kind: &OptimizerKind, params: &ModelParams<T>) -> Self {
        match kind {
            OptimizerKind::Sgd { .. } => OptimizerState::Sgd { velocity: params.zeros_like() },
            OptimizerKind::Adam { .. } => OptimizerState::Adam { m: params.zeros_like(), v: params.zeros_like(), step: 0 },
        }
    }

    pub fn apply(&mut self, kind: &OptimizerKind, lr: f64, params: &mut ModelParams<T>, grads: &[Vec<T>]) {
        match (self, kind) {
            (OptimizerState::Sgd { velocity }, OptimizerKind::Sgd { momentum, weight_decay }) => {
                sgd_step(params, grads, velocity, lr, *momentum, *weight_decay)
            }
            (OptimizerState::Adam { m, v, step }, OptimizerKind::Adam { beta1, beta2, eps }) => {
                *step += 1;
                adam_step(params, grads, m, v, *step, lr, *beta1, *beta2, *eps)
            }
            _ => panic!("optimizer state does not match optimizer kind"),
        }
    }
}

/// Classic momentum with L2 weight decay folded into the gradient:
/// `v <- mu*v + (g + wd*w)`, `w <- w - lr*v`.
pub fn sgd_step<T: Real>(
    params: &mut ModelParams<T>,
    grads: &[Vec<T>],
    velocity: &mut [Vec<T>],
    lr: f64,
    momentum: f64,
    weight_decay: f64,
) {
    let (lr, mu, wd) = (T::lit(lr), T::lit(momentum), T::lit(weight_decay));
    for ((w, g), v) in params.tensors.iter_mut().zip(grads).zip(velocity) {
        assert_eq!(w.len(), g.len(), "gradient shape mismatch");
        for ((w, &g), v) in w.iter_mut().zip(g).zip(v.iter_mut()) {
            *v = mu * *v + (g + wd * *w);
            *w -= lr * *v;
        }
    }
}

/// Bias-corrected Adam; `step` is the 1-based count including this update.
#[allow(clippy::too_many_arguments)]
pub fn adam_step<T: Real>(
    params: &mut ModelParams<T>,
    grads: &[Vec<T>],
    m: &mut [Vec<T>],
    v: &mut [Vec<T>],
    step: u64,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
) {
    let bc1 = 1.0 - beta1.powi(step as i32);
    let bc2 = 1.0 - beta2.powi(step as i32);
    let (b1, b2) = (T::lit(beta1), T::lit(beta2));
    let (one_b1, one_b2) = (T::lit(1.0 - beta1), T::lit(1.0 - beta2));
    let step_size = T::lit(lr / bc1);
    let inv_sqrt_bc2 = T::lit(1.0 / bc2.sqrt());
    let eps = T::lit(eps);
    for (((w, g), m), v) in params.tensors.iter_mut().zip(grads).zip(m).zip(v) {
        assert_eq!(w.len(), g.len(), "gradient shape mismatch");
        for (((w, &g), m), v) in w.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
            *m = b1 * *m + one_b1 * g;
            *v = b2 * *v + one_b2 * g * g;
            *w -= step_size * *m / (v.sqrt() * inv_sqrt_bc2 + eps);
        }
    }
}

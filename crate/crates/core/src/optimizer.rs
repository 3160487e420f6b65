//! AdamW with decoupled weight decay, plus a plain gradient step used for
//! analytic checks.
//!
//! Each head row (weights and its bias entry) behaves like its own parameter
//! group: a row whose gradient came from zero samples is left untouched by the
//! step, decay included.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::OptimError;
use crate::heads::{BatchGradient, HeadModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamWState {
    pub config: AdamWConfig,
    pub m_weights: Array2<f64>,
    pub v_weights: Array2<f64>,
    pub m_bias: Option<Array1<f64>>,
    pub v_bias: Option<Array1<f64>>,
    pub t: u64,
}

impl AdamWState {
    pub fn new(config: AdamWConfig, model: &HeadModel) -> Self {
        let dim = model.weights.dim();
        let bias = model.bias.as_ref().map(|b| Array1::zeros(b.len()));
        Self {
            config,
            m_weights: Array2::zeros(dim),
            v_weights: Array2::zeros(dim),
            m_bias: bias.clone(),
            v_bias: bias,
            t: 0,
        }
    }
}

fn check_grad(model: &HeadModel, grad: &BatchGradient) -> Result<(), OptimError> {
    if grad.d_weights.dim() != model.weights.dim()
        || grad.d_bias.as_ref().map(|b| b.len()) != model.bias.as_ref().map(|b| b.len())
        || grad.head_counts.len() != model.num_classes()
    {
        return Err(OptimError::Shape(format!(
            "gradient {:?} does not match head {:?}",
            grad.d_weights.dim(),
            model.weights.dim()
        )));
    }
    if let Some(((r, c), &value)) = grad.d_weights.indexed_iter().find(|(_, v)| !v.is_finite()) {
        return Err(OptimError::NonFiniteGradient {
            location: format!("weights[{r}, {c}]"),
            value,
        });
    }
    if let Some(b) = &grad.d_bias {
        if let Some((i, &value)) = b.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(OptimError::NonFiniteGradient {
                location: format!("bias[{i}]"),
                value,
            });
        }
    }
    Ok(())
}

#[inline]
fn adamw_scalar(
    w: &mut f64,
    g: f64,
    m: &mut f64,
    v: &mut f64,
    cfg: &AdamWConfig,
    bc1: f64,
    bc2: f64,
) {
    *w -= cfg.lr * cfg.weight_decay * *w;
    *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
    *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
    let m_hat = *m / bc1;
    let v_hat = *v / bc2;
    *w -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
}

/// One AdamW step in place. The step counter always advances.
pub fn adamw_step(
    model: &mut HeadModel,
    grad: &BatchGradient,
    state: &mut AdamWState,
) -> Result<(), OptimError> {
    check_grad(model, grad)?;
    if state.m_weights.dim() != model.weights.dim() {
        return Err(OptimError::Shape("optimizer state does not match head".into()));
    }
    state.t += 1;
    let cfg = state.config;
    let exponent = i32::try_from(state.t).unwrap_or(i32::MAX);
    let bc1 = 1.0 - cfg.beta1.powi(exponent);
    let bc2 = 1.0 - cfg.beta2.powi(exponent);
    for c in 0..model.num_classes() {
        if grad.head_counts[c] == 0 {
            continue;
        }
        for j in 0..model.dim() {
            adamw_scalar(
                &mut model.weights[[c, j]],
                grad.d_weights[[c, j]],
                &mut state.m_weights[[c, j]],
                &mut state.v_weights[[c, j]],
                &cfg,
                bc1,
                bc2,
            );
        }
        if let (Some(b), Some(db), Some(mb), Some(vb)) = (
            model.bias.as_mut(),
            grad.d_bias.as_ref(),
            state.m_bias.as_mut(),
            state.v_bias.as_mut(),
        ) {
            adamw_scalar(&mut b[c], db[c], &mut mb[c], &mut vb[c], &cfg, bc1, bc2);
        }
    }
    Ok(())
}

/// `w <- w - lr * g` on rows that received signal.
pub fn gradient_step(model: &mut HeadModel, grad: &BatchGradient, lr: f64) -> Result<(), OptimError> {
    check_grad(model, grad)?;
    for c in 0..model.num_classes() {
        if grad.head_counts[c] == 0 {
            continue;
        }
        model
            .weights
            .row_mut(c)
            .scaled_add(-lr, &grad.d_weights.row(c));
        if let (Some(b), Some(db)) = (model.bias.as_mut(), grad.d_bias.as_ref()) {
            b[c] -= lr * db[c];
        }
    }
    Ok(())
}

/// Client-side optimizer choice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum OptimizerConfig {
    AdamW(AdamWConfig),
    /// Plain gradient descent.
    Gradient { lr: f64 },
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig::AdamW(AdamWConfig::default())
    }
}

/// Per-client optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub enum Optimizer {
    AdamW(AdamWState),
    Gradient { lr: f64 },
}

impl Optimizer {
    pub fn new(config: &OptimizerConfig, model: &HeadModel) -> Self {
        match *config {
            OptimizerConfig::AdamW(c) => Optimizer::AdamW(AdamWState::new(c, model)),
            OptimizerConfig::Gradient { lr } => Optimizer::Gradient { lr },
        }
    }

    pub fn step(&mut self, model: &mut HeadModel, grad: &BatchGradient) -> Result<(), OptimError> {
        match self {
            Optimizer::AdamW(state) => adamw_step(model, grad, state),
            Optimizer::Gradient { lr } => gradient_step(model, grad, *lr),
        }
    }
}

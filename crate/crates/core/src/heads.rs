//! Linear classification heads on frozen features.
//!
//! A [`HeadModel`] is a K×d weight matrix plus an optional bias, read either as
//! a softmax classifier or as K independent one-vs-all logistic classifiers.
//! Gradients are *descent* directions of the mean loss: for the softmax head
//! row `c` of the weight gradient is `mean_i (p_c(x_i) - 1[y_i = c]) x_i`, and
//! for each OvA head `mean_{i in S_c} (q_c(x_i) - 1[y_i = c]) x_i` over the
//! samples `S_c` selected for that head.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::HeadError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeadKind {
    Softmax,
    Ova,
}

impl HeadKind {
    pub fn name(self) -> &'static str {
        match self {
            HeadKind::Softmax => "softmax",
            HeadKind::Ova => "ova",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadModel {
    pub weights: Array2<f64>,
    pub bias: Option<Array1<f64>>,
    pub kind: HeadKind,
}

impl HeadModel {
    pub fn zeros(kind: HeadKind, num_classes: usize, dim: usize, with_bias: bool) -> Self {
        Self {
            weights: Array2::zeros((num_classes, dim)),
            bias: with_bias.then(|| Array1::zeros(num_classes)),
            kind,
        }
    }

    /// Weights drawn from N(0, std²); bias starts at zero.
    pub fn gaussian<R: Rng>(
        kind: HeadKind,
        num_classes: usize,
        dim: usize,
        with_bias: bool,
        std: f64,
        rng: &mut R,
    ) -> Self {
        let mut model = Self::zeros(kind, num_classes, dim, with_bias);
        for w in model.weights.iter_mut() {
            *w = std * rng.sample::<f64, _>(StandardNormal);
        }
        model
    }

    pub fn num_classes(&self) -> usize {
        self.weights.nrows()
    }

    pub fn dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|v| v.is_finite())
            && self.bias.iter().flatten().all(|v| v.is_finite())
    }

    fn check_input(&self, features: &ArrayView2<'_, f64>) -> Result<(), HeadError> {
        if features.ncols() != self.dim() {
            return Err(HeadError::Shape(format!(
                "features have {} columns, head expects {}",
                features.ncols(),
                self.dim()
            )));
        }
        Ok(())
    }

    pub fn require(&self, kind: HeadKind) -> Result<(), HeadError> {
        if self.kind != kind {
            return Err(HeadError::KindMismatch {
                expected: kind.name(),
                actual: self.kind.name(),
            });
        }
        Ok(())
    }

    /// Raw scores `w_c·x + b_c`, B×K.
    pub fn logits(&self, features: ArrayView2<'_, f64>) -> Result<Array2<f64>, HeadError> {
        self.check_input(&features)?;
        let mut z = features.dot(&self.weights.t());
        if let Some(b) = &self.bias {
            z += b;
        }
        Ok(z)
    }

    /// Flattened parameters (weights row-major, then bias).
    pub fn flat_params(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.weights.iter().copied().collect();
        if let Some(b) = &self.bias {
            v.extend(b.iter());
        }
        v
    }

    pub fn same_shape(&self, other: &HeadModel) -> bool {
        self.weights.dim() == other.weights.dim()
            && self.bias.as_ref().map(|b| b.len()) == other.bias.as_ref().map(|b| b.len())
    }
}

/// Per-batch gradient of a head. `head_counts[c]` is how many samples fed head
/// `c`; a zero count means the head received no signal in this batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchGradient {
    pub d_weights: Array2<f64>,
    pub d_bias: Option<Array1<f64>>,
    pub sample_count: usize,
    pub head_counts: Vec<usize>,
}

impl BatchGradient {
    pub fn flat(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.d_weights.iter().copied().collect();
        if let Some(b) = &self.d_bias {
            v.extend(b.iter());
        }
        v
    }
}

/// Which (sample, head) pairs an OvA gradient uses.
#[derive(Debug, Clone, PartialEq)]
pub enum ClassMask {
    /// Every head sees every sample.
    All,
    /// Each sample feeds only the head of its own label (positive-only training).
    OwnLabel,
    /// Selected heads see every sample, the rest see nothing.
    Heads(Vec<bool>),
    /// Explicit B×K selection.
    Pairs(Array2<bool>),
}

impl ClassMask {
    fn selected(&self, sample: usize, label: usize, head: usize) -> bool {
        match self {
            ClassMask::All => true,
            ClassMask::OwnLabel => label == head,
            ClassMask::Heads(h) => h[head],
            ClassMask::Pairs(p) => p[[sample, head]],
        }
    }
}

fn check_labels(labels: &[u32], rows: usize, num_classes: usize) -> Result<(), HeadError> {
    if labels.len() != rows {
        return Err(HeadError::Shape(format!(
            "{} labels for {rows} rows",
            labels.len()
        )));
    }
    if let Some((row, &label)) = labels
        .iter()
        .enumerate()
        .find(|(_, &l)| l as usize >= num_classes)
    {
        return Err(HeadError::LabelOutOfRange {
            row,
            label,
            num_classes,
        });
    }
    Ok(())
}

/// Numerically stable logistic function.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn softmax_rows(mut z: Array2<f64>) -> Array2<f64> {
    for mut row in z.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    z
}

pub fn softmax_probs(
    model: &HeadModel,
    features: ArrayView2<'_, f64>,
) -> Result<Array2<f64>, HeadError> {
    model.require(HeadKind::Softmax)?;
    Ok(softmax_rows(model.logits(features)?))
}

pub fn ova_probs(
    model: &HeadModel,
    features: ArrayView2<'_, f64>,
) -> Result<Array2<f64>, HeadError> {
    model.require(HeadKind::Ova)?;
    Ok(model.logits(features)?.mapv(sigmoid))
}

/// Gradient of the mean cross-entropy over the batch.
pub fn softmax_grad(
    model: &HeadModel,
    features: ArrayView2<'_, f64>,
    labels: &[u32],
) -> Result<BatchGradient, HeadError> {
    let k = model.num_classes();
    check_labels(labels, features.nrows(), k)?;
    let mut residual = softmax_probs(model, features)?;
    for (i, &y) in labels.iter().enumerate() {
        residual[[i, y as usize]] -= 1.0;
    }
    let b = labels.len();
    let scale = if b == 0 { 0.0 } else { 1.0 / b as f64 };
    let d_weights = residual.t().dot(&features) * scale;
    let d_bias = model
        .bias
        .as_ref()
        .map(|_| residual.sum_axis(Axis(0)) * scale);
    Ok(BatchGradient {
        d_weights,
        d_bias,
        sample_count: b,
        head_counts: vec![b; k],
    })
}

/// Gradient of `sum_c mean_{i in S_c} BCE(q_c(x_i), 1[y_i = c])`, where `S_c`
/// is the set of samples `mask` assigns to head `c`. Heads with empty `S_c`
/// get an exactly zero gradient row.
pub fn ova_grad(
    model: &HeadModel,
    features: ArrayView2<'_, f64>,
    labels: &[u32],
    mask: &ClassMask,
) -> Result<BatchGradient, HeadError> {
    let k = model.num_classes();
    check_labels(labels, features.nrows(), k)?;
    if let ClassMask::Heads(h) = mask {
        if h.len() != k {
            return Err(HeadError::Shape(format!("head mask has {} entries, K={k}", h.len())));
        }
    }
    if let ClassMask::Pairs(p) = mask {
        if p.dim() != (labels.len(), k) {
            return Err(HeadError::Shape(format!(
                "pair mask is {:?}, batch is {}x{k}",
                p.dim(),
                labels.len()
            )));
        }
    }
    let q = ova_probs(model, features)?;
    let mut residual = Array2::<f64>::zeros((labels.len(), k));
    let mut head_counts = vec![0usize; k];
    for (i, &y) in labels.iter().enumerate() {
        let y = y as usize;
        for c in 0..k {
            if mask.selected(i, y, c) {
                let target = if c == y { 1.0 } else { 0.0 };
                residual[[i, c]] = q[[i, c]] - target;
                head_counts[c] += 1;
            }
        }
    }
    for (c, mut col) in residual.columns_mut().into_iter().enumerate() {
        if head_counts[c] > 0 {
            let inv = 1.0 / head_counts[c] as f64;
            col.mapv_inplace(|v| v * inv);
        }
    }
    let d_weights = residual.t().dot(&features);
    let d_bias = model.bias.as_ref().map(|_| residual.sum_axis(Axis(0)));
    Ok(BatchGradient {
        d_weights,
        d_bias,
        sample_count: labels.len(),
        head_counts,
    })
}

/// Mean cross-entropy of the softmax head.
pub fn softmax_loss(
    model: &HeadModel,
    features: ArrayView2<'_, f64>,
    labels: &[u32],
) -> Result<f64, HeadError> {
    model.require(HeadKind::Softmax)?;
    check_labels(labels, features.nrows(), model.num_classes())?;
    let z = model.logits(features)?;
    let total: f64 = z
        .rows()
        .into_iter()
        .zip(labels)
        .map(|(row, &y)| {
            let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
            lse - row[y as usize]
        })
        .sum();
    Ok(total / labels.len().max(1) as f64)
}

/// The loss whose gradient [`ova_grad`] returns.
pub fn ova_loss(
    model: &HeadModel,
    features: ArrayView2<'_, f64>,
    labels: &[u32],
    mask: &ClassMask,
) -> Result<f64, HeadError> {
    model.require(HeadKind::Ova)?;
    let k = model.num_classes();
    check_labels(labels, features.nrows(), k)?;
    let z = model.logits(features)?;
    let mut sums = vec![0.0; k];
    let mut counts = vec![0usize; k];
    for (i, &y) in labels.iter().enumerate() {
        let y = y as usize;
        for c in 0..k {
            if mask.selected(i, y, c) {
                let t = if c == y { 1.0 } else { 0.0 };
                sums[c] += softplus(z[[i, c]]) - t * z[[i, c]];
                counts[c] += 1;
            }
        }
    }
    Ok(sums
        .iter()
        .zip(&counts)
        .filter(|(_, &n)| n > 0)
        .map(|(s, &n)| s / n as f64)
        .sum())
}

/// Argmax of the raw scores; ties go to the lowest class index. The same rule
/// serves both head kinds since sigmoid and softmax are monotone in the score.
pub fn predict(model: &HeadModel, features: ArrayView2<'_, f64>) -> Result<Vec<u32>, HeadError> {
    let z = model.logits(features)?;
    Ok(z.rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for c in 1..row.len() {
                if row[c] > row[best] {
                    best = c;
                }
            }
            best as u32
        })
        .collect())
}

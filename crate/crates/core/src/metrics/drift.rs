//! Client drift at a fixed head: per-client local bias, global bias and the
//! spread of client full-batch gradients.

use ndarray::{Array1, ArrayView2};
use serde::Serialize;

use crate::error::MetricsError;
use crate::fed::ClientData;
use crate::heads::{ova_grad, softmax_grad, ClassMask, HeadKind, HeadModel};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftReport {
    /// `‖∇L_i − ∇L‖` per client; `None` for empty clients.
    pub local_bias: Vec<Option<f64>>,
    pub mean_local_bias: f64,
    /// `‖Σ p_i ∇L_i − ∇L‖` with `p_i ∝ n_i`.
    pub global_bias: f64,
    /// `Σ p_i ‖∇L_i − Σ_j p_j ∇L_j‖²`.
    pub variance: f64,
    pub skipped_clients: Vec<usize>,
}

/// Full-batch loss gradient of `model` (cross-entropy for softmax heads,
/// all-pairs logistic loss for OvA heads), flattened.
pub fn full_gradient(model: &HeadModel, features: ArrayView2<'_, f64>, labels: &[u32]) -> Result<Array1<f64>, MetricsError> {
    let g = match model.kind {
        HeadKind::Softmax => softmax_grad(model, features, labels)?,
        HeadKind::Ova => ova_grad(model, features, labels, &ClassMask::All)?,
    };
    Ok(Array1::from(g.flat()))
}

fn norm(v: &Array1<f64>) -> f64 {
    v.dot(v).sqrt()
}

pub fn drift_report(
    model: &HeadModel,
    clients: &[ClientData],
    global_features: ArrayView2<'_, f64>,
    global_labels: &[u32],
) -> Result<DriftReport, MetricsError> {
    if global_labels.is_empty() {
        return Err(MetricsError::EmptyEvalSet);
    }
    let global = full_gradient(model, global_features, global_labels)?;
    let mut grads = Vec::new();
    let mut skipped = Vec::new();
    let mut local_bias = Vec::with_capacity(clients.len());
    for c in clients {
        if c.is_empty() {
            skipped.push(c.id);
            local_bias.push(None);
            continue;
        }
        let g = full_gradient(model, c.features.view(), &c.labels)?;
        local_bias.push(Some(norm(&(&g - &global))));
        grads.push((c.len() as f64, g));
    }
    if grads.is_empty() {
        return Err(MetricsError::Degenerate("every client is empty".into()));
    }
    let total: f64 = grads.iter().map(|(n, _)| n).sum();
    let mut mean = Array1::<f64>::zeros(global.len());
    for (n, g) in &grads {
        mean.scaled_add(n / total, g);
    }
    let variance = grads
        .iter()
        .map(|(n, g)| {
            let d = g - &mean;
            n / total * d.dot(&d)
        })
        .sum();
    let present: Vec<f64> = local_bias.iter().flatten().copied().collect();
    Ok(DriftReport {
        mean_local_bias: present.iter().sum::<f64>() / present.len() as f64,
        global_bias: norm(&(&mean - &global)),
        variance,
        local_bias,
        skipped_clients: skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn identical_clients_have_no_bias() {
        let x = array![[1.0, 0.5], [-0.3, 2.0]];
        let y = vec![0, 1];
        let clients: Vec<ClientData> = (0..3)
            .map(|id| ClientData {
                id,
                features: x.clone(),
                labels: y.clone(),
            })
            .collect();
        let mut m = HeadModel::zeros(HeadKind::Softmax, 2, 2, true);
        m.weights[[0, 1]] = 0.4;
        let r = drift_report(&m, &clients, x.view(), &y).unwrap();
        assert!(r.local_bias.iter().all(|b| b.unwrap() == 0.0));
        assert!(r.global_bias < 1e-15);
        assert!(r.variance < 1e-30);
    }

    #[test]
    fn empty_clients_are_flagged() {
        let x = array![[1.0], [2.0]];
        let clients = vec![
            ClientData {
                id: 0,
                features: x.clone(),
                labels: vec![0, 1],
            },
            ClientData {
                id: 1,
                features: ndarray::Array2::zeros((0, 1)),
                labels: vec![],
            },
        ];
        let m = HeadModel::zeros(HeadKind::Ova, 2, 1, false);
        let r = drift_report(&m, &clients, x.view(), &[0, 1]).unwrap();
        assert_eq!(r.skipped_clients, vec![1]);
        assert_eq!(r.local_bias[1], None);
    }
}

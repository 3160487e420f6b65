//! Evaluation metrics, cost accounting, and the geometry and drift reports.

pub mod drift;
pub mod geometry;

use ndarray::ArrayView2;
use serde::Serialize;

pub use drift::{drift_report, DriftReport};
pub use geometry::{geometry, GeometryReport};

use crate::error::MetricsError;
use crate::fed::RoundRecord;
use crate::heads::{predict, HeadModel};

/// Bytes per f32 on the wire.
pub const WIRE_SCALAR_BYTES: u64 = 4;

pub fn accuracy(model: &HeadModel, features: ArrayView2<'_, f64>, labels: &[u32]) -> Result<f64, MetricsError> {
    if labels.is_empty() {
        return Err(MetricsError::EmptyEvalSet);
    }
    if labels.len() != features.nrows() {
        return Err(MetricsError::LengthMismatch(features.nrows(), labels.len()));
    }
    let pred = predict(model, features)?;
    let correct = pred.iter().zip(labels).filter(|(p, y)| p == y).count();
    Ok(correct as f64 / labels.len() as f64)
}

/// `100 · noniid[t] / iid[t]`.
pub fn relative_ratio(noniid: &[f64], iid: &[f64]) -> Result<Vec<f64>, MetricsError> {
    if noniid.len() != iid.len() {
        return Err(MetricsError::LengthMismatch(noniid.len(), iid.len()));
    }
    noniid
        .iter()
        .zip(iid)
        .enumerate()
        .map(|(t, (&a, &b))| {
            if b > 0.0 {
                Ok(a / b * 100.0)
            } else {
                Err(MetricsError::ZeroReference(t))
            }
        })
        .collect()
}

/// First 1-indexed round whose accuracy reaches `0.95 · reference_final`.
pub fn acc_at_95(curve: &[f64], reference_final: f64) -> Option<usize> {
    acc_at_fraction(curve, reference_final, 0.95)
}

pub fn acc_at_fraction(curve: &[f64], reference_final: f64, fraction: f64) -> Option<usize> {
    let threshold = fraction * reference_final;
    curve.iter().position(|&a| a >= threshold).map(|i| i + 1)
}

/// Relative accuracy loss in percent.
pub fn decline_rate(noisy_final: f64, clean_final: f64) -> Result<f64, MetricsError> {
    if !(clean_final > 0.0) {
        return Err(MetricsError::ZeroReference(0));
    }
    Ok((clean_final - noisy_final) / clean_final * 100.0)
}

/// Serialized size of a head: every weight and bias entry as f32.
pub fn head_wire_bytes(model: &HeadModel) -> u64 {
    let k = model.num_classes() as u64;
    let d = model.dim() as u64;
    let bias = if model.bias.is_some() { k } else { 0 };
    (k * d + bias) * WIRE_SCALAR_BYTES
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostSummary {
    pub rounds: usize,
    pub mean_client_seconds: f64,
    pub mean_server_seconds: f64,
    pub up_bytes_per_client: u64,
    pub down_bytes_per_client: u64,
    pub up_bytes_total: u64,
    pub down_bytes_total: u64,
}

/// Per-round means of the timings and run totals of the byte counts.
pub fn cost_accounting(records: &[RoundRecord]) -> CostSummary {
    let n = records.len();
    let mean = |f: fn(&RoundRecord) -> f64| {
        if n == 0 {
            0.0
        } else {
            records.iter().map(f).sum::<f64>() / n as f64
        }
    };
    CostSummary {
        rounds: n,
        mean_client_seconds: mean(|r| r.client_seconds_mean),
        mean_server_seconds: mean(|r| r.server_seconds),
        up_bytes_per_client: records.first().map_or(0, |r| r.bytes_up_per_client),
        down_bytes_per_client: records.first().map_or(0, |r| r.bytes_down_per_client),
        up_bytes_total: records.iter().map(|r| r.bytes_up_total).sum(),
        down_bytes_total: records.iter().map(|r| r.bytes_down_total).sum(),
    }
}

/// Bytes moved in one direction by a round with `participants` clients.
pub fn round_bytes(model: &HeadModel, participants: usize) -> u64 {
    head_wire_bytes(model) * participants as u64
}

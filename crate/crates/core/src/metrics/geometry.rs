//! Feature geometry: within-class pair distance (alignment), compactness
//! (intra), centroid separation (inter) and their ratio.

use ndarray::{Array1, Array2, ArrayView2};
use serde::Serialize;

use crate::error::MetricsError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeometryReport {
    /// Mean squared distance over ordered within-class pairs. `None` when no
    /// class has two samples.
    pub alignment: Option<f64>,
    pub intra: f64,
    pub inter: f64,
    /// `intra / inter`; `None` when `inter == 0`.
    pub ratio: Option<f64>,
}

impl GeometryReport {
    pub fn ratio_checked(&self) -> Result<f64, MetricsError> {
        self.ratio
            .ok_or_else(|| MetricsError::Degenerate("class means coincide, ratio undefined".into()))
    }
}

/// Class means and per-class sums of squared deviations, accumulated in f64.
fn class_moments(features: ArrayView2<'_, f64>, labels: &[u32], k: usize) -> (Array2<f64>, Vec<usize>, Vec<f64>) {
    let d = features.ncols();
    let mut means = Array2::<f64>::zeros((k, d));
    let mut counts = vec![0usize; k];
    for (row, &y) in features.rows().into_iter().zip(labels) {
        means.row_mut(y as usize).scaled_add(1.0, &row);
        counts[y as usize] += 1;
    }
    for c in 0..k {
        if counts[c] > 0 {
            let inv = 1.0 / counts[c] as f64;
            means.row_mut(c).mapv_inplace(|v| v * inv);
        }
    }
    let mut scatter = vec![0.0; k];
    for (row, &y) in features.rows().into_iter().zip(labels) {
        let mu = means.row(y as usize);
        scatter[y as usize] += row.iter().zip(mu.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    (means, counts, scatter)
}

/// Computes the report over the classes present in `labels`.
///
/// Alignment uses `Σ_{i≠j} ‖f_i − f_j‖² = 2n Σ_i ‖f_i − μ‖²` per class, so every
/// ordered pair is counted exactly without enumerating them.
pub fn geometry(features: ArrayView2<'_, f64>, labels: &[u32]) -> Result<GeometryReport, MetricsError> {
    if labels.len() != features.nrows() {
        return Err(MetricsError::LengthMismatch(features.nrows(), labels.len()));
    }
    let k = labels.iter().map(|&y| y as usize + 1).max().unwrap_or(0);
    let (means, counts, scatter) = class_moments(features, labels, k);
    let present: Vec<usize> = (0..k).filter(|&c| counts[c] > 0).collect();
    if present.len() < 2 {
        return Err(MetricsError::Degenerate(format!(
            "need at least 2 non-empty classes, found {}",
            present.len()
        )));
    }
    let n = labels.len() as f64;
    let intra = scatter.iter().sum::<f64>() / n;

    let mut pair_sum = 0.0;
    let mut pair_count = 0.0;
    for &c in &present {
        let nc = counts[c] as f64;
        if counts[c] >= 2 {
            pair_sum += 2.0 * nc * scatter[c];
            pair_count += nc * (nc - 1.0);
        }
    }
    let alignment = (pair_count > 0.0).then(|| pair_sum / pair_count);

    let mut inter_sum = 0.0;
    let mut inter_pairs = 0usize;
    for (a, &ca) in present.iter().enumerate() {
        for &cb in &present[a + 1..] {
            let diff: Array1<f64> = &means.row(ca) - &means.row(cb);
            inter_sum += diff.dot(&diff);
            inter_pairs += 1;
        }
    }
    let inter = inter_sum / inter_pairs as f64;
    let ratio = (inter > 0.0).then(|| intra / inter);
    Ok(GeometryReport {
        alignment,
        intra,
        inter,
        ratio,
    })
}

//! Shared fixtures and independent oracles for the integration tests. Nothing
//! here calls into the library's math; oracles are plain loops over `Vec`s.
#![allow(dead_code)]

use fedprobe::fed::{Method, NoiseSetting, RunConfig};
use fedprobe::feature_store::{generate_synthetic, FeatureDataset, SyntheticSpec};
use fedprobe::heads::{HeadKind, HeadModel};
use fedprobe::partition::Scheme;
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub const DESK_SEEDS: [u64; 5] = [0, 42, 777, 1337, 15254];
pub const DESK_ROUNDS: usize = 20;
pub const DESK_CLIENTS: usize = 20;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(r: &mut impl Rng) -> f64 {
    r.sample(StandardNormal)
}

/// Desk-scale synthetic features: K=10, d=64, 100 training samples per class
/// plus 100 held-out evaluation samples per class.
pub fn desk_spec(seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        num_classes: 10,
        dim: 64,
        samples_per_class: 200,
        centroid_separation: 160.0,
        within_class_std: 20.0,
        shared_offset: 160.0,
        seed,
    }
}

pub fn desk_data(seed: u64) -> (FeatureDataset, FeatureDataset) {
    generate_synthetic(&desk_spec(seed)).unwrap().split_per_class(100).unwrap()
}

pub fn desk_config(method: Method, scheme: Scheme, noise: Option<NoiseSetting>, seed: u64) -> RunConfig {
    RunConfig {
        rounds: DESK_ROUNDS,
        num_clients: DESK_CLIENTS,
        seeds: vec![seed],
        method,
        scheme,
        noise,
        ..RunConfig::default()
    }
}

pub fn random_head(kind: HeadKind, k: usize, d: usize, bias: bool, scale: f64, r: &mut impl Rng) -> HeadModel {
    HeadModel {
        weights: Array2::from_shape_fn((k, d), |_| scale * normal(r)),
        bias: bias.then(|| Array1::from_shape_fn(k, |_| scale * normal(r))),
        kind,
    }
}

fn score(w: &[Vec<f64>], b: &[f64], x: &[f64], c: usize) -> f64 {
    w[c].iter().zip(x).map(|(a, v)| a * v).sum::<f64>() + b[c]
}

/// Plain-`Vec` copy of a head: rows of weights, bias (zeros when absent).
pub fn unpack(m: &HeadModel) -> (Vec<Vec<f64>>, Vec<f64>) {
    let w = m.weights.rows().into_iter().map(|r| r.to_vec()).collect();
    let b = m.bias.as_ref().map_or(vec![0.0; m.num_classes()], |b| b.to_vec());
    (w, b)
}

/// Mean softmax cross-entropy, written out directly.
pub fn softmax_loss_oracle(w: &[Vec<f64>], b: &[f64], xs: &[Vec<f64>], ys: &[u32]) -> f64 {
    let k = w.len();
    let mut total = 0.0;
    for (x, &y) in xs.iter().zip(ys) {
        let z: Vec<f64> = (0..k).map(|c| score(w, b, x, c)).collect();
        let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let denom: f64 = z.iter().map(|v| (v - max).exp()).sum();
        let p = (z[y as usize] - max).exp() / denom;
        total -= p.ln();
    }
    total / xs.len() as f64
}

/// Sum over heads of the mean binary cross-entropy over the samples selected
/// for that head (`select[i][c]`).
pub fn ova_loss_oracle(w: &[Vec<f64>], b: &[f64], xs: &[Vec<f64>], ys: &[u32], select: &[Vec<bool>]) -> f64 {
    let k = w.len();
    let mut total = 0.0;
    for c in 0..k {
        let mut sum = 0.0;
        let mut n = 0usize;
        for (i, (x, &y)) in xs.iter().zip(ys).enumerate() {
            if !select[i][c] {
                continue;
            }
            let q = 1.0 / (1.0 + (-score(w, b, x, c)).exp());
            sum -= if y as usize == c { q.ln() } else { (1.0 - q).ln() };
            n += 1;
        }
        if n > 0 {
            total += sum / n as f64;
        }
    }
    total
}

/// Central differences of `loss` over every weight then every bias entry.
pub fn finite_difference(
    w: &[Vec<f64>],
    b: &[f64],
    with_bias: bool,
    step: f64,
    loss: impl Fn(&[Vec<f64>], &[f64]) -> f64,
) -> Vec<f64> {
    let mut out = Vec::new();
    let mut w = w.to_vec();
    let mut b = b.to_vec();
    for c in 0..w.len() {
        for j in 0..w[c].len() {
            let orig = w[c][j];
            w[c][j] = orig + step;
            let up = loss(&w, &b);
            w[c][j] = orig - step;
            let down = loss(&w, &b);
            w[c][j] = orig;
            out.push((up - down) / (2.0 * step));
        }
    }
    if with_bias {
        for c in 0..b.len() {
            let orig = b[c];
            b[c] = orig + step;
            let up = loss(&w, &b);
            b[c] = orig - step;
            let down = loss(&w, &b);
            b[c] = orig;
            out.push((up - down) / (2.0 * step));
        }
    }
    out
}

pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-12)
}

/// Weighted mean of flat parameter vectors, weights `n_i / Σn`.
pub fn fedavg_oracle(params: &[Vec<f64>], counts: &[usize]) -> Vec<f64> {
    let total: usize = counts.iter().sum();
    let mut out = vec![0.0; params[0].len()];
    for (p, &n) in params.iter().zip(counts) {
        for (o, v) in out.iter_mut().zip(p) {
            *o += v * n as f64 / total as f64;
        }
    }
    out
}

/// Geometry by brute-force enumeration of every ordered within-class pair.
pub struct NaiveGeometry {
    pub alignment: Option<f64>,
    pub intra: f64,
    pub inter: f64,
}

pub fn naive_geometry(xs: &[Vec<f64>], ys: &[u32]) -> NaiveGeometry {
    let dist2 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| (u - v).powi(2)).sum::<f64>();
    let k = ys.iter().map(|&y| y as usize + 1).max().unwrap();
    let d = xs[0].len();
    let mut pair_sum = 0.0;
    let mut pairs = 0usize;
    for i in 0..xs.len() {
        for j in 0..xs.len() {
            if i != j && ys[i] == ys[j] {
                pair_sum += dist2(&xs[i], &xs[j]);
                pairs += 1;
            }
        }
    }
    let mut means = vec![vec![0.0; d]; k];
    let mut counts = vec![0usize; k];
    for (x, &y) in xs.iter().zip(ys) {
        counts[y as usize] += 1;
        for (m, v) in means[y as usize].iter_mut().zip(x) {
            *m += v;
        }
    }
    for c in 0..k {
        for m in means[c].iter_mut() {
            *m /= counts[c].max(1) as f64;
        }
    }
    let intra = xs.iter().zip(ys).map(|(x, &y)| dist2(x, &means[y as usize])).sum::<f64>() / xs.len() as f64;
    let present: Vec<usize> = (0..k).filter(|&c| counts[c] > 0).collect();
    let mut inter = 0.0;
    let mut n = 0usize;
    for a in 0..present.len() {
        for b in a + 1..present.len() {
            inter += dist2(&means[present[a]], &means[present[b]]);
            n += 1;
        }
    }
    NaiveGeometry {
        alignment: (pairs > 0).then(|| pair_sum / pairs as f64),
        intra,
        inter: inter / n as f64,
    }
}

/// Random orthogonal matrix by Gram-Schmidt on a Gaussian matrix.
pub fn random_rotation(d: usize, r: &mut impl Rng) -> Vec<Vec<f64>> {
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(d);
    while q.len() < d {
        let mut v: Vec<f64> = (0..d).map(|_| normal(r)).collect();
        for u in &q {
            let dot: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum();
            for (x, y) in v.iter_mut().zip(u) {
                *x -= dot * y;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            q.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    q
}

pub fn to_rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

pub fn from_rows(rows: &[Vec<f64>]) -> Array2<f64> {
    let d = rows[0].len();
    Array2::from_shape_fn((rows.len(), d), |(i, j)| rows[i][j])
}

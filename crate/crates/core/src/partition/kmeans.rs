//! Lloyd's k-means with k-means++ seeding.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::Rng;

pub const DEFAULT_ITERATIONS: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub centroids: Array2<f64>,
    pub assignments: Vec<usize>,
    pub iterations: usize,
}

fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn seed_centroids<R: Rng>(points: ArrayView2<'_, f64>, k: usize, rng: &mut R) -> Array2<f64> {
    let n = points.nrows();
    let mut centroids = Array2::zeros((k, points.ncols()));
    let first = rng.random_range(0..n);
    centroids.row_mut(0).assign(&points.row(first));
    let mut d2: Vec<f64> = (0..n)
        .map(|i| sq_dist(points.row(i), centroids.row(0)))
        .collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.row_mut(c).assign(&points.row(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(points.row(i), centroids.row(c)));
        }
    }
    centroids
}

/// Nearest-centroid assignment. Exact distance ties go to the tied centroid
/// with the fewest points assigned so far in this pass, then the lowest index,
/// so fully degenerate inputs come out balanced.
fn assign(points: ArrayView2<'_, f64>, centroids: &Array2<f64>, out: &mut [usize]) {
    let k = centroids.nrows();
    let mut sizes = vec![0usize; k];
    for (i, slot) in out.iter_mut().enumerate() {
        let mut best = 0;
        let mut best_d = sq_dist(points.row(i), centroids.row(0));
        for c in 1..k {
            let d = sq_dist(points.row(i), centroids.row(c));
            if d < best_d || (d == best_d && sizes[c] < sizes[best]) {
                best = c;
                best_d = d;
            }
        }
        sizes[best] += 1;
        *slot = best;
    }
}

/// Clusters the rows of `points` into `k` groups. Runs at most `iterations`
/// Lloyd steps, stopping once assignments stop changing. Empty clusters keep
/// their previous centroid.
pub fn kmeans<R: Rng>(
    points: ArrayView2<'_, f64>,
    k: usize,
    iterations: usize,
    rng: &mut R,
) -> KMeansResult {
    let n = points.nrows();
    assert!(k >= 1 && k <= n, "k-means needs 1 <= k <= n (k={k}, n={n})");
    let mut centroids = seed_centroids(points, k, rng);
    let mut assignments = vec![0usize; n];
    assign(points, &centroids, &mut assignments);
    let mut done = 0;
    for it in 0..iterations {
        done = it + 1;
        let mut sums = Array2::<f64>::zeros(centroids.dim());
        let mut counts = vec![0usize; k];
        for (i, &c) in assignments.iter().enumerate() {
            sums.row_mut(c).scaled_add(1.0, &points.row(i));
            counts[c] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                let inv = 1.0 / counts[c] as f64;
                centroids.row_mut(c).assign(&(&sums.row(c) * inv));
            }
        }
        let mut next = vec![0usize; n];
        assign(points, &centroids, &mut next);
        if next == assignments {
            break;
        }
        assignments = next;
    }
    KMeansResult {
        centroids,
        assignments,
        iterations: done,
    }
}

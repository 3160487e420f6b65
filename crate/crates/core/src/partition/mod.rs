//! Client partitions: IID, shard-k, Bernoulli–Dirichlet, Zipf quantity skew and
//! per-class feature clustering. Every scheme is a pure function of the dataset,
//! its parameters and the seed.

pub mod kmeans;

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::PartitionError;
use crate::feature_store::FeatureDataset;
use crate::seeding::{self, tag, SimRng};

const MAX_PRESENCE_DRAWS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "kebab-case")]
pub enum Scheme {
    Iid,
    Shard { k: usize },
    DirichletBernoulli { p: f64, alpha: f64 },
    Zipf { s: f64 },
    FeatureCluster { strict: bool },
}

impl Scheme {
    pub fn is_iid(&self) -> bool {
        matches!(self, Scheme::Iid)
    }

    /// Filesystem-safe identifier.
    pub fn slug(&self) -> String {
        match *self {
            Scheme::Iid => "iid".into(),
            Scheme::Shard { k } => format!("shard-{k}"),
            Scheme::DirichletBernoulli { p, alpha } => format!("dirichlet-p{p}-a{alpha}"),
            Scheme::Zipf { s } => format!("zipf-s{s}"),
            Scheme::FeatureCluster { strict } => {
                if strict {
                    "cluster-strict".into()
                } else {
                    "cluster".into()
                }
            }
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Scheme::Iid => write!(f, "iid"),
            Scheme::Shard { k } => write!(f, "shard-{k}"),
            Scheme::DirichletBernoulli { p, alpha } => write!(f, "dirichlet:{p},{alpha}"),
            Scheme::Zipf { s } => write!(f, "zipf:{s}"),
            Scheme::FeatureCluster { strict: false } => write!(f, "cluster"),
            Scheme::FeatureCluster { strict: true } => write!(f, "cluster:strict"),
        }
    }
}

pub const SCHEME_CHOICES: &str =
    "iid, shard-<k>, dirichlet[:p,alpha], zipf[:s], cluster[:strict]";

impl FromStr for Scheme {
    type Err = String;

    /// Accepts `iid`, `shard-<k>`, `dirichlet` (p=0.1, alpha=0.001) or
    /// `dirichlet:<p>,<alpha>`, `zipf` (s=2) or `zipf:<s>`, `cluster` or
    /// `cluster:strict`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (name, args) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let num = |v: &str| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| format!("`{v}` is not a number in scheme `{s}`"))
        };
        match (name, args) {
            ("iid", None) => Ok(Scheme::Iid),
            (n, None) if n.starts_with("shard-") => n["shard-".len()..]
                .parse()
                .map(|k| Scheme::Shard { k })
                .map_err(|_| format!("bad shard count in `{s}`")),
            ("dirichlet", None) => Ok(Scheme::DirichletBernoulli { p: 0.1, alpha: 0.001 }),
            ("dirichlet", Some(a)) => {
                let parts: Vec<&str> = a.split(',').collect();
                if parts.len() != 2 {
                    return Err(format!("`{s}`: expected dirichlet:<p>,<alpha>"));
                }
                Ok(Scheme::DirichletBernoulli {
                    p: num(parts[0])?,
                    alpha: num(parts[1])?,
                })
            }
            ("zipf", None) => Ok(Scheme::Zipf { s: 2.0 }),
            ("zipf", Some(a)) => Ok(Scheme::Zipf { s: num(a)? }),
            ("cluster", None) => Ok(Scheme::FeatureCluster { strict: false }),
            ("cluster", Some("strict")) => Ok(Scheme::FeatureCluster { strict: true }),
            _ => Err(format!("unknown scheme `{s}`; choices: {SCHEME_CHOICES}")),
        }
    }
}

/// Client to sample-index assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub scheme: Scheme,
    pub seed: u64,
    pub assignments: Vec<Vec<usize>>,
}

impl Partition {
    pub fn num_clients(&self) -> usize {
        self.assignments.len()
    }

    pub fn total_assigned(&self) -> usize {
        self.assignments.iter().map(Vec::len).sum()
    }

    /// JSON audit manifest.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("partition serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartitionStats {
    pub counts: Vec<usize>,
    pub histograms: Vec<Vec<usize>>,
    pub effective_classes: Vec<usize>,
}

pub fn partition_stats(partition: &Partition, dataset: &FeatureDataset) -> PartitionStats {
    let k = dataset.num_classes();
    let labels = dataset.labels();
    let histograms: Vec<Vec<usize>> = partition
        .assignments
        .iter()
        .map(|idx| {
            let mut h = vec![0; k];
            for &i in idx {
                h[labels[i] as usize] += 1;
            }
            h
        })
        .collect();
    PartitionStats {
        counts: partition.assignments.iter().map(Vec::len).collect(),
        effective_classes: histograms
            .iter()
            .map(|h| h.iter().filter(|&&c| c > 0).count())
            .collect(),
        histograms,
    }
}

/// Dispatches on `scheme`.
pub fn partition(
    dataset: &FeatureDataset,
    scheme: Scheme,
    num_clients: usize,
    seed: u64,
) -> Result<Partition, PartitionError> {
    if num_clients == 0 {
        return Err(PartitionError::InvalidParameter("need at least one client".into()));
    }
    let assignments = match scheme {
        Scheme::Iid => iid(dataset.len(), num_clients, &mut rng(seed))?,
        Scheme::Shard { k } => shard(dataset.labels(), num_clients, k, &mut rng(seed))?,
        Scheme::DirichletBernoulli { p, alpha } => dirichlet_bernoulli(
            dataset.labels(),
            dataset.num_classes(),
            num_clients,
            p,
            alpha,
            &mut rng(seed),
        )?,
        Scheme::Zipf { s } => zipf(dataset.len(), num_clients, s, &mut rng(seed))?,
        Scheme::FeatureCluster { strict } => feature_cluster(dataset, num_clients, strict, seed)?,
    };
    Ok(Partition {
        scheme,
        seed,
        assignments,
    })
}

pub fn partition_iid(ds: &FeatureDataset, m: usize, seed: u64) -> Result<Partition, PartitionError> {
    partition(ds, Scheme::Iid, m, seed)
}

pub fn partition_shard(
    ds: &FeatureDataset,
    m: usize,
    k: usize,
    seed: u64,
) -> Result<Partition, PartitionError> {
    partition(ds, Scheme::Shard { k }, m, seed)
}

pub fn partition_dirichlet_bernoulli(
    ds: &FeatureDataset,
    m: usize,
    p: f64,
    alpha: f64,
    seed: u64,
) -> Result<Partition, PartitionError> {
    partition(ds, Scheme::DirichletBernoulli { p, alpha }, m, seed)
}

pub fn partition_zipf(ds: &FeatureDataset, m: usize, s: f64, seed: u64) -> Result<Partition, PartitionError> {
    partition(ds, Scheme::Zipf { s }, m, seed)
}

pub fn partition_feature_cluster(
    ds: &FeatureDataset,
    m: usize,
    seed: u64,
) -> Result<Partition, PartitionError> {
    partition(ds, Scheme::FeatureCluster { strict: false }, m, seed)
}

fn rng(seed: u64) -> SimRng {
    seeding::rng_from(seed, &[tag::PARTITION])
}

fn iid(n: usize, m: usize, rng: &mut SimRng) -> Result<Vec<Vec<usize>>, PartitionError> {
    if m > n {
        return Err(PartitionError::TooFewSamples { samples: n, clients: m });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let (base, extra) = (n / m, n % m);
    let mut out = Vec::with_capacity(m);
    let mut start = 0;
    for i in 0..m {
        let len = base + usize::from(i < extra);
        out.push(idx[start..start + len].to_vec());
        start += len;
    }
    Ok(out)
}

/// Sort by (label, index), cut into `m·k` equal shards with the remainder on
/// the last one, deal `k` random shards to each client.
fn shard(labels: &[u32], m: usize, k: usize, rng: &mut SimRng) -> Result<Vec<Vec<usize>>, PartitionError> {
    if k == 0 {
        return Err(PartitionError::InvalidParameter("shard count must be >= 1".into()));
    }
    let n = labels.len();
    let shards = m * k;
    if shards > n {
        return Err(PartitionError::TooManyShards { needed: shards, samples: n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| (labels[i], i));
    let size = n / shards;
    let mut pieces: Vec<&[usize]> = (0..shards)
        .map(|s| {
            let end = if s + 1 == shards { n } else { (s + 1) * size };
            &order[s * size..end]
        })
        .collect();
    pieces.shuffle(rng);
    Ok(pieces
        .chunks(k)
        .map(|group| group.iter().flat_map(|p| p.iter().copied()).collect())
        .collect())
}

/// Integer counts summing to `total`, proportional to `weights`, by
/// largest-remainder rounding. Remainder ties go to the lower index.
pub fn largest_remainder(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let quotas: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Dirichlet(alpha, ..., alpha) sample computed in log space, so tiny `alpha`
/// (where Gamma draws underflow to zero) still yields a valid simplex point.
fn dirichlet_log_space(alpha: f64, n: usize, rng: &mut SimRng) -> Vec<f64> {
    // Gamma(a) = Gamma(a + 1) * U^(1/a)
    let gamma = Gamma::new(alpha + 1.0, 1.0).expect("alpha > 0");
    let logs: Vec<f64> = (0..n)
        .map(|_| {
            let g: f64 = gamma.sample(rng);
            let u: f64 = 1.0 - rng.random::<f64>();
            g.ln() + u.ln() / alpha
        })
        .collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn dirichlet_bernoulli(
    labels: &[u32],
    num_classes: usize,
    m: usize,
    p: f64,
    alpha: f64,
    rng: &mut SimRng,
) -> Result<Vec<Vec<usize>>, PartitionError> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(PartitionError::InvalidParameter(format!("p must be in (0, 1], got {p}")));
    }
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(PartitionError::InvalidParameter(format!("alpha must be > 0, got {alpha}")));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l as usize].push(i);
    }
    // presence[c][i]: client i holds class c
    let mut presence: Vec<Vec<bool>> = (0..num_classes)
        .map(|_| (0..m).map(|_| rng.random::<f64>() < p).collect())
        .collect();
    for c in 0..num_classes {
        if by_class[c].is_empty() {
            continue;
        }
        let mut draws = 1;
        while !presence[c].iter().any(|&x| x) {
            if draws >= MAX_PRESENCE_DRAWS {
                return Err(PartitionError::OrphanedClass { class: c, attempts: draws });
            }
            presence[c] = (0..m).map(|_| rng.random::<f64>() < p).collect();
            draws += 1;
        }
    }
    let mut out = vec![Vec::new(); m];
    for (c, idx) in by_class.iter_mut().enumerate() {
        if idx.is_empty() {
            continue;
        }
        let holders: Vec<usize> = (0..m).filter(|&i| presence[c][i]).collect();
        let props = dirichlet_log_space(alpha, holders.len(), rng);
        let counts = largest_remainder(idx.len(), &props);
        idx.shuffle(rng);
        let mut start = 0;
        for (&client, &count) in holders.iter().zip(&counts) {
            out[client].extend_from_slice(&idx[start..start + count]);
            start += count;
        }
    }
    for a in &mut out {
        a.sort_unstable();
    }
    Ok(out)
}

/// Client sizes proportional to `i^-s`, at least one sample each.
pub fn zipf_counts(n: usize, m: usize, s: f64) -> Result<Vec<usize>, PartitionError> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(PartitionError::InvalidParameter(format!("zipf exponent must be > 0, got {s}")));
    }
    if n < m {
        return Err(PartitionError::TooFewSamples { samples: n, clients: m });
    }
    let weights: Vec<f64> = (1..=m).map(|i| (i as f64).powf(-s)).collect();
    let mut counts = largest_remainder(n, &weights);
    while let Some(empty) = counts.iter().position(|&c| c == 0) {
        let donor = (0..m).max_by(|&a, &b| counts[a].cmp(&counts[b]).then(b.cmp(&a))).unwrap();
        counts[donor] -= 1;
        counts[empty] += 1;
    }
    Ok(counts)
}

fn zipf(n: usize, m: usize, s: f64, rng: &mut SimRng) -> Result<Vec<Vec<usize>>, PartitionError> {
    let counts = zipf_counts(n, m, s)?;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let mut start = 0;
    Ok(counts
        .iter()
        .map(|&c| {
            let part = idx[start..start + c].to_vec();
            start += c;
            part
        })
        .collect())
}

/// k-means with `m` centroids inside every class; cluster `j` of each class goes
/// to client `j`. Classes smaller than `m` use one cluster per sample unless
/// `strict`.
fn feature_cluster(
    dataset: &FeatureDataset,
    m: usize,
    strict: bool,
    seed: u64,
) -> Result<Vec<Vec<usize>>, PartitionError> {
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); dataset.num_classes()];
    for (i, &l) in dataset.labels().iter().enumerate() {
        by_class[l as usize].push(i);
    }
    let mut out = vec![Vec::new(); m];
    for (c, idx) in by_class.iter().enumerate() {
        if idx.is_empty() {
            continue;
        }
        if idx.len() < m && strict {
            return Err(PartitionError::ClassTooSmall {
                class: c,
                size: idx.len(),
                clients: m,
            });
        }
        let k = m.min(idx.len());
        let points = dataset.features().select(ndarray::Axis(0), idx).mapv(f64::from);
        let mut rng = seeding::rng_from(seed, &[tag::KMEANS, c as u64]);
        let res = kmeans::kmeans(points.view(), k, kmeans::DEFAULT_ITERATIONS, &mut rng);
        for (&i, &cluster) in idx.iter().zip(&res.assignments) {
            out[cluster].push(i);
        }
    }
    for a in &mut out {
        a.sort_unstable();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feature_store::{generate_synthetic, Meta, SyntheticSpec};
    use ndarray::Array2;

    fn labelled(per_class: usize, k: usize) -> FeatureDataset {
        let labels: Vec<u32> = (0..k).flat_map(|c| std::iter::repeat(c as u32).take(per_class)).collect();
        let n = labels.len();
        let features = Array2::from_shape_fn((n, 2), |(i, j)| (i * 2 + j) as f32);
        FeatureDataset::new(features, labels, k, Meta::new()).unwrap()
    }

    fn sizes(p: &Partition) -> Vec<usize> {
        let mut s: Vec<usize> = p.assignments.iter().map(Vec::len).collect();
        s.sort_unstable();
        s
    }

    #[test]
    fn iid_sizes() {
        let ds = labelled(10, 10);
        assert_eq!(sizes(&partition_iid(&ds, 10, 1).unwrap()), vec![10; 10]);
        let ds = labelled(101, 1 + 1);
        let ds = ds.subset(&(0..101).collect::<Vec<_>>()).unwrap();
        let mut expect = vec![10; 9];
        expect.push(11);
        assert_eq!(sizes(&partition_iid(&ds, 10, 1).unwrap()), expect);
        assert_eq!(partition_iid(&ds, 10, 4).unwrap(), partition_iid(&ds, 10, 4).unwrap());
        assert!(matches!(
            partition_iid(&ds, 102, 0),
            Err(PartitionError::TooFewSamples { .. })
        ));
    }

    #[test]
    fn shard_one_class_per_client() {
        let ds = labelled(10, 10);
        let p = partition_shard(&ds, 10, 1, 3).unwrap();
        let stats = partition_stats(&p, &ds);
        assert!(stats.effective_classes.iter().all(|&e| e == 1));
        let p = partition_shard(&ds, 5, 2, 3).unwrap();
        assert!(partition_stats(&p, &ds).effective_classes.iter().all(|&e| e <= 2));
    }

    #[test]
    fn shard_size_one() {
        let ds = labelled(3, 4);
        let p = partition_shard(&ds, 6, 2, 0).unwrap();
        assert!(p.assignments.iter().all(|a| a.len() == 2));
        assert!(matches!(
            partition_shard(&ds, 7, 2, 0),
            Err(PartitionError::TooManyShards { .. })
        ));
    }

    #[test]
    fn shard_remainder_goes_to_last_shard() {
        let ds = labelled(7, 2);
        let p = partition_shard(&ds, 4, 1, 0).unwrap();
        assert_eq!(sizes(&p), vec![3, 3, 3, 5]);
    }

    #[test]
    fn dirichlet_single_client_takes_all() {
        let ds = labelled(5, 3);
        let p = partition_dirichlet_bernoulli(&ds, 1, 1.0, 0.5, 2).unwrap();
        assert_eq!(p.assignments[0], (0..15).collect::<Vec<_>>());
    }

    #[test]
    fn dirichlet_large_alpha_is_near_even() {
        let ds = labelled(400, 3);
        for seed in 0..5 {
            let p = partition_dirichlet_bernoulli(&ds, 4, 1.0, 1e6, seed).unwrap();
            let stats = partition_stats(&p, &ds);
            for h in &stats.histograms {
                for &c in h {
                    assert!((c as f64 - 100.0).abs() <= 10.0, "{h:?}");
                }
            }
        }
    }

    #[test]
    fn dirichlet_tiny_alpha_concentrates() {
        let ds = labelled(50, 10);
        let mut medians = Vec::new();
        for seed in 0..5 {
            let p = partition_dirichlet_bernoulli(&ds, 20, 0.1, 0.001, seed).unwrap();
            let mut eff = partition_stats(&p, &ds).effective_classes;
            eff.sort_unstable();
            medians.push(eff[eff.len() / 2]);
        }
        assert!(medians.iter().all(|&m| m <= 2), "{medians:?}");
    }

    #[test]
    fn dirichlet_rejects_bad_params() {
        let ds = labelled(5, 2);
        assert!(partition_dirichlet_bernoulli(&ds, 2, 0.0, 1.0, 0).is_err());
        assert!(partition_dirichlet_bernoulli(&ds, 2, 0.5, 0.0, 0).is_err());
    }

    #[test]
    fn dirichlet_gives_up_on_hopeless_presence() {
        // p tiny, one client: a class is orphaned on essentially every draw
        let ds = labelled(5, 2);
        assert!(matches!(
            partition_dirichlet_bernoulli(&ds, 1, 1e-12, 1.0, 0),
            Err(PartitionError::OrphanedClass { attempts: 100, .. })
        ));
    }

    #[test]
    fn zipf_counts_examples() {
        assert_eq!(zipf_counts(49, 3, 2.0).unwrap(), vec![36, 9, 4]);
        assert_eq!(zipf_counts(100, 4, 1e-9).unwrap(), vec![25; 4]);
        assert_eq!(zipf_counts(7, 1, 2.0).unwrap(), vec![7]);
        // tail clients are topped up to one sample
        let c = zipf_counts(12, 10, 2.0).unwrap();
        assert!(c.iter().all(|&x| x >= 1));
        assert_eq!(c.iter().sum::<usize>(), 12);
        assert!(c.windows(2).all(|w| w[0] >= w[1]));
        assert!(zipf_counts(3, 4, 2.0).is_err());
    }

    #[test]
    fn largest_remainder_sums() {
        assert_eq!(largest_remainder(10, &[1.0, 1.0, 1.0]), vec![4, 3, 3]);
        assert_eq!(largest_remainder(0, &[1.0, 2.0]), vec![0, 0]);
    }

    #[test]
    fn cluster_single_client_gets_everything() {
        let ds = labelled(6, 3);
        let p = partition_feature_cluster(&ds, 1, 0).unwrap();
        assert_eq!(p.assignments[0].len(), 18);
    }

    #[test]
    fn cluster_strict_mode() {
        let ds = labelled(3, 2);
        assert!(matches!(
            partition(&ds, Scheme::FeatureCluster { strict: true }, 4, 0),
            Err(PartitionError::ClassTooSmall { .. })
        ));
        let p = partition(&ds, Scheme::FeatureCluster { strict: false }, 4, 0).unwrap();
        assert_eq!(p.total_assigned(), 6);
        assert!(p.assignments[3].is_empty());
        let stats = partition_stats(&p, &ds);
        assert_eq!(stats.counts[3], 0);
        assert_eq!(stats.histograms[3], vec![0, 0]);
    }

    #[test]
    fn cluster_recovers_blobs() {
        // one class made of 3 far-apart blobs of 20 points each
        let blobs = generate_synthetic(&SyntheticSpec {
            num_classes: 3,
            dim: 4,
            samples_per_class: 20,
            centroid_separation: 50.0,
            within_class_std: 0.5,
            shared_offset: 0.0,
            seed: 8,
        })
        .unwrap();
        let ds = FeatureDataset::new(blobs.features().to_owned(), vec![0; 60], 2, Meta::new()).unwrap();
        let p = partition_feature_cluster(&ds, 3, 1).unwrap();
        for client in &p.assignments {
            let blob = blobs.labels()[client[0]];
            let pure = client.iter().filter(|&&i| blobs.labels()[i] == blob).count();
            assert!(pure as f64 / client.len() as f64 >= 0.99);
            assert_eq!(client.len(), 20);
        }
    }

    #[test]
    fn cluster_identical_features_balance() {
        let ds = FeatureDataset::new(Array2::from_elem((10, 3), 2.0), vec![0; 10], 2, Meta::new()).unwrap();
        let p = partition_feature_cluster(&ds, 3, 0).unwrap();
        let s = sizes(&p);
        assert!(s[2] - s[0] <= 1, "{s:?}");
    }

    #[test]
    fn scheme_parsing() {
        assert_eq!("iid".parse::<Scheme>().unwrap(), Scheme::Iid);
        assert_eq!("shard-2".parse::<Scheme>().unwrap(), Scheme::Shard { k: 2 });
        assert_eq!(
            "dirichlet".parse::<Scheme>().unwrap(),
            Scheme::DirichletBernoulli { p: 0.1, alpha: 0.001 }
        );
        assert_eq!(
            "dirichlet:0.5,1".parse::<Scheme>().unwrap(),
            Scheme::DirichletBernoulli { p: 0.5, alpha: 1.0 }
        );
        assert_eq!("zipf".parse::<Scheme>().unwrap(), Scheme::Zipf { s: 2.0 });
        assert_eq!(
            "cluster:strict".parse::<Scheme>().unwrap(),
            Scheme::FeatureCluster { strict: true }
        );
        let err = "pachinko".parse::<Scheme>().unwrap_err();
        assert!(err.contains("choices"));
        for s in ["iid", "shard-3", "dirichlet:0.1,0.001", "zipf:2", "cluster"] {
            assert_eq!(s.parse::<Scheme>().unwrap().to_string(), s);
        }
    }

    #[test]
    fn manifest_is_json() {
        let ds = labelled(2, 2);
        let p = partition_iid(&ds, 2, 0).unwrap();
        let v: serde_json::Value = serde_json::from_str(&p.to_json()).unwrap();
        assert_eq!(v["scheme"]["scheme"], "iid");
        assert_eq!(v["assignments"].as_array().unwrap().len(), 2);
    }
}

//! Label corruption for robustness runs. Only client training labels are
//! corrupted; evaluation sets stay clean.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::seeding::{self, tag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKind {
    /// Flip to a uniformly drawn different class.
    Symmetric,
    /// Flip to `(label + 1) mod K`.
    Asymmetric,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub ratio: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NoisyLabels {
    pub labels: Vec<u32>,
    pub flip_mask: Vec<bool>,
}

impl NoisyLabels {
    pub fn flipped(&self) -> usize {
        self.flip_mask.iter().filter(|&&f| f).count()
    }
}

pub fn inject_noise(labels: &[u32], num_classes: usize, spec: &NoiseSpec) -> Result<NoisyLabels, Error> {
    if num_classes < 2 {
        return Err(Error::Noise(format!("need K >= 2, got {num_classes}")));
    }
    if !(0.0..=1.0).contains(&spec.ratio) {
        return Err(Error::Noise(format!("ratio {} outside [0, 1]", spec.ratio)));
    }
    if let Some(&l) = labels.iter().find(|&&l| l as usize >= num_classes) {
        return Err(Error::Noise(format!("label {l} outside [0, {num_classes})")));
    }
    let k = num_classes as u32;
    let mut rng = seeding::rng_from(spec.seed, &[tag::NOISE]);
    let mut out = Vec::with_capacity(labels.len());
    let mut flip_mask = Vec::with_capacity(labels.len());
    for &y in labels {
        let flip = rng.random::<f64>() < spec.ratio;
        let new = if !flip {
            y
        } else {
            match spec.kind {
                NoiseKind::Symmetric => {
                    let r = rng.random_range(0..k - 1);
                    if r < y {
                        r
                    } else {
                        r + 1
                    }
                }
                NoiseKind::Asymmetric => (y + 1) % k,
            }
        };
        out.push(new);
        flip_mask.push(new != y);
    }
    Ok(NoisyLabels {
        labels: out,
        flip_mask,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(kind: NoiseKind, ratio: f64, seed: u64) -> NoiseSpec {
        NoiseSpec { kind, ratio, seed }
    }

    #[test]
    fn zero_ratio_is_identity() {
        let labels: Vec<u32> = (0..100).map(|i| i % 7).collect();
        let out = inject_noise(&labels, 7, &spec(NoiseKind::Symmetric, 0.0, 3)).unwrap();
        assert_eq!(out.labels, labels);
        assert!(out.flip_mask.iter().all(|&f| !f));
    }

    #[test]
    fn full_asymmetric_is_circular_shift() {
        let out = inject_noise(&[3, 9], 10, &spec(NoiseKind::Asymmetric, 1.0, 0)).unwrap();
        assert_eq!(out.labels, vec![4, 0]);
        assert_eq!(out.flip_mask, vec![true, true]);
    }

    #[test]
    fn symmetric_flips_never_keep_label() {
        let labels: Vec<u32> = (0..2000).map(|i| i % 5).collect();
        let out = inject_noise(&labels, 5, &spec(NoiseKind::Symmetric, 1.0, 11)).unwrap();
        assert!(out.labels.iter().zip(&labels).all(|(a, b)| a != b));
        // every other class is reachable
        for y in 0..5u32 {
            let mut seen = [false; 5];
            for (new, _) in out.labels.iter().zip(&labels).filter(|(_, &old)| old == y) {
                seen[*new as usize] = true;
            }
            assert_eq!(seen.iter().filter(|&&s| s).count(), 4);
        }
    }

    #[test]
    fn rejects_small_k_and_bad_ratio() {
        assert!(inject_noise(&[0], 1, &spec(NoiseKind::Symmetric, 0.1, 0)).is_err());
        assert!(inject_noise(&[0], 3, &spec(NoiseKind::Symmetric, 1.5, 0)).is_err());
        assert!(inject_noise(&[4], 3, &spec(NoiseKind::Symmetric, 0.5, 0)).is_err());
    }

    #[test]
    fn deterministic_in_seed() {
        let labels: Vec<u32> = (0..500).map(|i| i % 10).collect();
        let s = spec(NoiseKind::Symmetric, 0.4, 42);
        assert_eq!(inject_noise(&labels, 10, &s).unwrap(), inject_noise(&labels, 10, &s).unwrap());
    }
}

//! Frozen-feature datasets and the `FOVA` binary file format.
//!
//! Layout (all integers and floats little-endian):
//!
//! | field        | type            |
//! |--------------|-----------------|
//! | magic        | `b"FOVA"`       |
//! | version      | u32 (= 1)       |
//! | N            | u64             |
//! | d            | u32             |
//! | K            | u32             |
//! | meta length  | u32             |
//! | meta         | UTF-8 JSON object of string to string, empty when no meta |
//! | features     | N·d f32, row-major |
//! | labels       | N u32           |
//!
//! Nothing may follow the label block.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::FeatureError;
use crate::seeding;

pub const MAGIC: &[u8; 4] = b"FOVA";
pub const FORMAT_VERSION: u32 = 1;
const FIXED_HEADER_LEN: usize = 4 + 4 + 8 + 4 + 4 + 4;

pub type Meta = BTreeMap<String, String>;

/// Encoder outputs with integer labels. Immutable once constructed.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDataset {
    features: Array2<f32>,
    labels: Vec<u32>,
    num_classes: usize,
    meta: Meta,
}

impl FeatureDataset {
    pub fn new(
        features: Array2<f32>,
        labels: Vec<u32>,
        num_classes: usize,
        meta: Meta,
    ) -> Result<Self, FeatureError> {
        let (n, d) = features.dim();
        if n == 0 || d == 0 {
            return Err(FeatureError::InvalidShape(format!(
                "need N >= 1 and d >= 1, got N={n}, d={d}"
            )));
        }
        if num_classes < 2 {
            return Err(FeatureError::InvalidShape(format!(
                "need K >= 2, got {num_classes}"
            )));
        }
        if labels.len() != n {
            return Err(FeatureError::InvalidShape(format!(
                "{} labels for {n} feature rows",
                labels.len()
            )));
        }
        if let Some((row, &label)) = labels
            .iter()
            .enumerate()
            .find(|(_, &l)| l as usize >= num_classes)
        {
            return Err(FeatureError::LabelOutOfRange {
                row,
                label,
                num_classes,
            });
        }
        if let Some(((row, col), _)) = features.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(FeatureError::NonFinite { row, col });
        }
        Ok(Self {
            features,
            labels,
            num_classes,
            meta,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn features(&self) -> ArrayView2<'_, f32> {
        self.features.view()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f32> {
        self.features.row(i)
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn meta(&self) -> &Meta {
        &self.meta
    }

    /// Features widened to f64 for training and metrics.
    pub fn features_f64(&self) -> Array2<f64> {
        self.features.mapv(f64::from)
    }

    /// Rows selected by `indices`, in that order. Meta is copied.
    pub fn subset(&self, indices: &[usize]) -> Result<Self, FeatureError> {
        let features = self.features.select(Axis(0), indices);
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Self::new(features, labels, self.num_classes, self.meta.clone())
    }

    /// Splits off the last `eval_per_class` samples of every class into a second
    /// dataset. Classes with no more than `eval_per_class` samples are rejected.
    pub fn split_per_class(&self, eval_per_class: usize) -> Result<(Self, Self), FeatureError> {
        let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); self.num_classes];
        for (i, &l) in self.labels.iter().enumerate() {
            by_class[l as usize].push(i);
        }
        let mut train = Vec::new();
        let mut eval = Vec::new();
        for (c, idx) in by_class.iter().enumerate() {
            if idx.is_empty() {
                continue;
            }
            if idx.len() <= eval_per_class {
                return Err(FeatureError::InvalidShape(format!(
                    "class {c} has {} samples, cannot hold out {eval_per_class}",
                    idx.len()
                )));
            }
            let cut = idx.len() - eval_per_class;
            train.extend_from_slice(&idx[..cut]);
            eval.extend_from_slice(&idx[cut..]);
        }
        train.sort_unstable();
        eval.sort_unstable();
        Ok((self.subset(&train)?, self.subset(&eval)?))
    }

    /// Copy with every row scaled to unit L2 norm (zero rows are left as is).
    pub fn l2_normalized(&self) -> Self {
        let mut features = self.features.clone();
        for mut row in features.rows_mut() {
            let norm = row.iter().map(|&v| f64::from(v).powi(2)).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.mapv_inplace(|v| (f64::from(v) / norm) as f32);
            }
        }
        let mut meta = self.meta.clone();
        meta.insert("normalization".into(), "l2".into());
        Self {
            features,
            labels: self.labels.clone(),
            num_classes: self.num_classes,
            meta,
        }
    }

    /// Encodes the dataset in the `FOVA` layout.
    pub fn to_bytes(&self) -> Vec<u8> {
        let meta = if self.meta.is_empty() {
            Vec::new()
        } else {
            serde_json::to_vec(&self.meta).expect("string map serializes")
        };
        let (n, d) = self.features.dim();
        let mut out = Vec::with_capacity(FIXED_HEADER_LEN + meta.len() + n * d * 4 + n * 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(n as u64).to_le_bytes());
        out.extend_from_slice(&(d as u32).to_le_bytes());
        out.extend_from_slice(&(self.num_classes as u32).to_le_bytes());
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(&meta);
        for v in self.features.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for l in &self.labels {
            out.extend_from_slice(&l.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FeatureError> {
        if bytes.len() < FIXED_HEADER_LEN {
            if bytes.len() >= 4 && &bytes[..4] != MAGIC {
                return Err(FeatureError::BadMagic {
                    found: bytes[..4].try_into().unwrap(),
                });
            }
            return Err(FeatureError::CorruptHeader(format!(
                "file is {} bytes, header needs {FIXED_HEADER_LEN}",
                bytes.len()
            )));
        }
        let magic: [u8; 4] = bytes[..4].try_into().unwrap();
        if &magic != MAGIC {
            return Err(FeatureError::BadMagic { found: magic });
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let version = u32_at(4);
        if version != FORMAT_VERSION {
            return Err(FeatureError::UnsupportedVersion(version));
        }
        let n = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
        let d = u32_at(16) as u64;
        let k = u32_at(20) as usize;
        let meta_len = u32_at(24) as usize;
        let meta_end = FIXED_HEADER_LEN + meta_len;
        if bytes.len() < meta_end {
            return Err(FeatureError::CorruptHeader(format!(
                "meta block of {meta_len} bytes runs past end of file"
            )));
        }
        let meta: Meta = if meta_len == 0 {
            Meta::new()
        } else {
            let text = std::str::from_utf8(&bytes[FIXED_HEADER_LEN..meta_end])
                .map_err(|e| FeatureError::CorruptHeader(format!("meta is not UTF-8: {e}")))?;
            serde_json::from_str(text)
                .map_err(|e| FeatureError::CorruptHeader(format!("meta is not a string map: {e}")))?
        };
        let expected = n
            .checked_mul(d)
            .and_then(|nd| nd.checked_mul(4))
            .and_then(|f| f.checked_add(n.checked_mul(4)?))
            .ok_or_else(|| FeatureError::CorruptHeader(format!("N={n}, d={d} overflow")))?;
        let actual = (bytes.len() - meta_end) as u64;
        if expected != actual {
            return Err(FeatureError::PayloadLength { expected, actual });
        }
        let (n, d) = (n as usize, d as usize);
        let feat_bytes = &bytes[meta_end..meta_end + n * d * 4];
        let features: Vec<f32> = feat_bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let labels: Vec<u32> = bytes[meta_end + n * d * 4..]
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let features = Array2::from_shape_vec((n, d), features)
            .map_err(|e| FeatureError::InvalidShape(e.to_string()))?;
        Self::new(features, labels, k, meta)
    }

    /// SHA-256 of the encoded dataset, hex.
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.to_bytes()))
    }
}

pub fn load_features(path: impl AsRef<Path>) -> Result<FeatureDataset, FeatureError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| FeatureError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    FeatureDataset::from_bytes(&bytes)
}

/// Writes `dataset` to `path`. The dataset type cannot hold non-finite values,
/// so anything reaching here is already valid.
pub fn save_features(dataset: &FeatureDataset, path: impl AsRef<Path>) -> Result<(), FeatureError> {
    let path = path.as_ref();
    fs::write(path, dataset.to_bytes()).map_err(|source| FeatureError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Parameters of the Gaussian-cluster generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub num_classes: usize,
    pub dim: usize,
    pub samples_per_class: usize,
    /// Minimum pairwise distance between class means.
    pub centroid_separation: f64,
    pub within_class_std: f64,
    /// Norm of a mean vector shared by every class, drawn in the positive
    /// orthant. Zero gives zero-mean centroid sets.
    #[serde(default)]
    pub shared_offset: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), FeatureError> {
        let bad = |m: String| Err(FeatureError::InvalidSpec(m));
        if self.num_classes < 2 {
            return bad(format!("num_classes must be >= 2, got {}", self.num_classes));
        }
        if self.dim == 0 || self.samples_per_class == 0 {
            return bad("dim and samples_per_class must be positive".into());
        }
        if !(self.centroid_separation >= 0.0) || !self.centroid_separation.is_finite() {
            return bad(format!(
                "centroid_separation must be finite and >= 0, got {}",
                self.centroid_separation
            ));
        }
        if !(self.within_class_std > 0.0) || !self.within_class_std.is_finite() {
            return bad(format!(
                "within_class_std must be finite and > 0, got {}",
                self.within_class_std
            ));
        }
        if !(self.shared_offset >= 0.0) || !self.shared_offset.is_finite() {
            return bad(format!("shared_offset must be >= 0, got {}", self.shared_offset));
        }
        Ok(())
    }

    /// Class means (K×d). With K <= d the zero-offset means are scaled orthonormal
    /// directions, all pairwise exactly `centroid_separation` apart; otherwise
    /// random unit directions rescaled so the closest pair sits at that distance.
    pub fn centroids(&self) -> Array2<f64> {
        let (k, d) = (self.num_classes, self.dim);
        let mut rng = seeding::rng_from(self.seed, &[1]);
        let mut dirs = Array2::<f64>::zeros((k, d));
        for v in dirs.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let mut centroids = if k <= d {
            gram_schmidt(&mut dirs);
            dirs * (self.centroid_separation / std::f64::consts::SQRT_2)
        } else {
            for mut row in dirs.rows_mut() {
                let norm = row.dot(&row).sqrt();
                row.mapv_inplace(|v| v / norm);
            }
            let mut min_dist = f64::INFINITY;
            for a in 0..k {
                for b in a + 1..k {
                    let diff = &dirs.row(a) - &dirs.row(b);
                    min_dist = min_dist.min(diff.dot(&diff).sqrt());
                }
            }
            let scale = if min_dist > 0.0 {
                self.centroid_separation / min_dist
            } else {
                0.0
            };
            dirs * scale
        };
        if self.shared_offset > 0.0 {
            let mut offset: Vec<f64> = (0..d)
                .map(|_| rng.sample::<f64, _>(StandardNormal).abs())
                .collect();
            let norm = offset.iter().map(|v| v * v).sum::<f64>().sqrt();
            offset.iter_mut().for_each(|v| *v *= self.shared_offset / norm);
            for mut row in centroids.rows_mut() {
                row.iter_mut().zip(&offset).for_each(|(c, o)| *c += o);
            }
        }
        centroids
    }
}

fn gram_schmidt(rows: &mut Array2<f64>) {
    for i in 0..rows.nrows() {
        for j in 0..i {
            let proj = rows.row(i).dot(&rows.row(j));
            let rj = rows.row(j).to_owned();
            rows.row_mut(i).scaled_add(-proj, &rj);
        }
        let norm = rows.row(i).dot(&rows.row(i)).sqrt();
        rows.row_mut(i).mapv_inplace(|v| v / norm);
    }
}

/// Samples `samples_per_class` points per class around [`SyntheticSpec::centroids`].
/// Rows are ordered class-major.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<FeatureDataset, FeatureError> {
    spec.validate()?;
    let centroids = spec.centroids();
    let (k, d, n) = (spec.num_classes, spec.dim, spec.samples_per_class);
    let mut rng = seeding::rng_from(spec.seed, &[2]);
    let mut features = Array2::<f32>::zeros((k * n, d));
    let mut labels = Vec::with_capacity(k * n);
    for c in 0..k {
        for s in 0..n {
            let row = c * n + s;
            for j in 0..d {
                let z: f64 = rng.sample(StandardNormal);
                features[[row, j]] = (centroids[[c, j]] + spec.within_class_std * z) as f32;
            }
            labels.push(c as u32);
        }
    }
    let mut meta = Meta::new();
    meta.insert("source".into(), "synthetic".into());
    meta.insert(
        "synthetic_spec".into(),
        serde_json::to_string(spec).expect("spec serializes"),
    );
    FeatureDataset::new(features, labels, k, meta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn tiny() -> FeatureDataset {
        FeatureDataset::new(
            array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            vec![0, 1],
            2,
            Meta::new(),
        )
        .unwrap()
    }

    #[test]
    fn roundtrip_tiny() {
        let ds = tiny();
        let back = FeatureDataset::from_bytes(&ds.to_bytes()).unwrap();
        assert_eq!(back, ds);
        assert!(back.meta().is_empty());
    }

    #[test]
    fn header_layout_is_fixed() {
        let bytes = tiny().to_bytes();
        assert_eq!(&bytes[..4], b"FOVA");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(bytes[8..16].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(bytes[16..20].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(bytes[20..24].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(bytes[24..28].try_into().unwrap()), 0);
        assert_eq!(bytes.len(), 28 + 6 * 4 + 2 * 4);
        assert_eq!(f32::from_le_bytes(bytes[28..32].try_into().unwrap()), 1.0);
    }

    #[test]
    fn short_payload_is_rejected() {
        let mut ds_bytes = FeatureDataset::new(
            Array2::zeros((5, 3)),
            vec![0; 5],
            2,
            Meta::new(),
        )
        .unwrap()
        .to_bytes();
        // drop one feature row worth of bytes
        ds_bytes.truncate(ds_bytes.len() - 12);
        assert!(matches!(
            FeatureDataset::from_bytes(&ds_bytes),
            Err(FeatureError::PayloadLength { .. })
        ));
    }

    #[test]
    fn trailing_bytes_are_rejected() {
        let mut bytes = tiny().to_bytes();
        bytes.push(0);
        assert!(matches!(
            FeatureDataset::from_bytes(&bytes),
            Err(FeatureError::PayloadLength { .. })
        ));
    }

    #[test]
    fn label_out_of_range_is_rejected() {
        let mut bytes = FeatureDataset::new(Array2::zeros((1, 1)), vec![0], 5, Meta::new())
            .unwrap()
            .to_bytes();
        let n = bytes.len();
        bytes[n - 4..].copy_from_slice(&7u32.to_le_bytes());
        assert!(matches!(
            FeatureDataset::from_bytes(&bytes),
            Err(FeatureError::LabelOutOfRange { label: 7, .. })
        ));
    }

    #[test]
    fn bad_magic_and_version() {
        let mut bytes = tiny().to_bytes();
        bytes[0] = b'X';
        assert!(matches!(
            FeatureDataset::from_bytes(&bytes),
            Err(FeatureError::BadMagic { .. })
        ));
        let mut bytes = tiny().to_bytes();
        bytes[4] = 9;
        assert!(matches!(
            FeatureDataset::from_bytes(&bytes),
            Err(FeatureError::UnsupportedVersion(9))
        ));
        assert!(matches!(
            FeatureDataset::from_bytes(b"FOVA"),
            Err(FeatureError::CorruptHeader(_))
        ));
    }

    #[test]
    fn nan_is_rejected_at_construction() {
        let err = FeatureDataset::new(array![[f32::NAN]], vec![0], 2, Meta::new()).unwrap_err();
        assert!(matches!(err, FeatureError::NonFinite { row: 0, col: 0 }));
    }

    #[test]
    fn meta_survives_disk_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.fova");
        let mut meta = Meta::new();
        meta.insert("encoder".into(), "vit-l16".into());
        let ds = FeatureDataset::new(array![[0.5f32, -2.0]], vec![1], 3, meta).unwrap();
        save_features(&ds, &path).unwrap();
        assert_eq!(load_features(&path).unwrap(), ds);
    }

    fn spec(sep: f64, std: f64, seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            num_classes: 2,
            dim: 2,
            samples_per_class: 10,
            centroid_separation: sep,
            within_class_std: std,
            shared_offset: 0.0,
            seed,
        }
    }

    #[test]
    fn synthetic_is_deterministic() {
        let s = spec(10.0, 0.01, 0);
        assert_eq!(generate_synthetic(&s).unwrap(), generate_synthetic(&s).unwrap());
        assert_ne!(
            generate_synthetic(&s).unwrap(),
            generate_synthetic(&spec(10.0, 0.01, 1)).unwrap()
        );
    }

    #[test]
    fn tiny_std_hugs_centroids() {
        let s = spec(10.0, 1e-9, 3);
        let ds = generate_synthetic(&s).unwrap();
        let c = s.centroids();
        for (i, &l) in ds.labels().iter().enumerate() {
            for j in 0..2 {
                let diff = (f64::from(ds.row(i)[j]) - c[[l as usize, j]]).abs();
                // f32 storage rounds at ~1e-6 relative to the coordinate
                assert!(diff < 1e-6 * c[[l as usize, j]].abs().max(1.0), "{diff}");
            }
        }
    }

    #[test]
    fn centroids_respect_separation() {
        for (k, d) in [(5, 8), (10, 3)] {
            let s = SyntheticSpec {
                num_classes: k,
                dim: d,
                samples_per_class: 1,
                centroid_separation: 4.0,
                within_class_std: 1.0,
                shared_offset: 2.0,
                seed: 9,
            };
            let c = s.centroids();
            for a in 0..k {
                for b in a + 1..k {
                    let diff = &c.row(a) - &c.row(b);
                    assert!(diff.dot(&diff).sqrt() >= 4.0 - 1e-9);
                }
            }
        }
    }

    #[test]
    fn invalid_specs() {
        assert!(spec(-1.0, 1.0, 0).validate().is_err());
        assert!(spec(1.0, 0.0, 0).validate().is_err());
        assert!(spec(0.0, 1.0, 0).validate().is_ok());
    }

    #[test]
    fn split_per_class_holds_out_tail() {
        let ds = generate_synthetic(&SyntheticSpec {
            num_classes: 3,
            dim: 2,
            samples_per_class: 5,
            centroid_separation: 1.0,
            within_class_std: 1.0,
            shared_offset: 0.0,
            seed: 1,
        })
        .unwrap();
        let (train, eval) = ds.split_per_class(2).unwrap();
        assert_eq!(train.len(), 9);
        assert_eq!(eval.len(), 6);
        assert_eq!(eval.row(0), ds.row(3));
        assert!(ds.split_per_class(5).is_err());
    }

    #[test]
    fn l2_normalization() {
        let ds = FeatureDataset::new(array![[3.0, 4.0], [0.0, 0.0]], vec![0, 1], 2, Meta::new())
            .unwrap()
            .l2_normalized();
        assert_eq!(ds.row(0).to_vec(), vec![0.6, 0.8]);
        assert_eq!(ds.row(1).to_vec(), vec![0.0, 0.0]);
    }
}

//! Labelled image-like datasets: MNIST IDX files or a synthetic mixture.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::{substream, Domain};

const IMAGES_MAGIC: u32 = 2051;
const LABELS_MAGIC: u32 = 2049;

/// Row-major feature matrix with one label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Vec<f64>,
    pub labels: Vec<u8>,
    pub dim: usize,
    pub classes: usize,
}

impl Dataset {
    pub fn new(features: Vec<f64>, labels: Vec<u8>, dim: usize, classes: usize) -> Result<Self> {
        if dim == 0 || features.len() != labels.len() * dim {
            return Err(Error::Dataset(format!(
                "{} features do not form {} rows of width {dim}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| usize::from(l) >= classes) {
            return Err(Error::Dataset(format!("label {bad} outside {classes} classes")));
        }
        Ok(Dataset { features, labels, dim, classes })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    /// Rows `start..end` as a new dataset.
    pub fn slice(&self, start: usize, end: usize) -> Dataset {
        Dataset {
            features: self.features[start * self.dim..end * self.dim].to_vec(),
            labels: self.labels[start..end].to_vec(),
            dim: self.dim,
            classes: self.classes,
        }
    }

    /// `k` contiguous shards whose sizes differ by at most one.
    pub fn shards(&self, k: usize) -> Result<Vec<Dataset>> {
        if k == 0 || k > self.len() {
            return Err(Error::Dataset(format!("cannot split {} samples into {k} shards", self.len())));
        }
        let (base, extra) = (self.len() / k, self.len() % k);
        let mut start = 0;
        Ok((0..k)
            .map(|i| {
                let end = start + base + usize::from(i < extra);
                let s = self.slice(start, end);
                start = end;
                s
            })
            .collect())
    }
}

/// Train and test splits.
#[derive(Debug, Clone)]
pub struct DataSplit {
    pub train: Dataset,
    pub test: Dataset,
    /// `"mnist"` or `"synthetic"`.
    pub source: &'static str,
}

fn be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Dataset("truncated IDX header".into()))
}

/// Parses an IDX image file and its label file, keeping the first `limit` rows.
pub fn parse_idx(images: &[u8], labels: &[u8], limit: usize) -> Result<Dataset> {
    if be_u32(images, 0)? != IMAGES_MAGIC {
        return Err(Error::Dataset("bad image magic".into()));
    }
    if be_u32(labels, 0)? != LABELS_MAGIC {
        return Err(Error::Dataset("bad label magic".into()));
    }
    let n = be_u32(images, 4)? as usize;
    let (rows, cols) = (be_u32(images, 8)? as usize, be_u32(images, 12)? as usize);
    if be_u32(labels, 4)? as usize != n {
        return Err(Error::Dataset("image and label counts differ".into()));
    }
    let dim = rows * cols;
    let take = n.min(limit);
    let pixels = images.get(16..16 + take * dim).ok_or_else(|| Error::Dataset("truncated image data".into()))?;
    let labs = labels.get(8..8 + take).ok_or_else(|| Error::Dataset("truncated label data".into()))?;
    Dataset::new(pixels.iter().map(|&p| f64::from(p) / 255.0).collect(), labs.to_vec(), dim, 10)
}

/// Loads the standard MNIST file pair from `dir`.
pub fn load_mnist(dir: &Path, n_train: usize, n_test: usize) -> Result<DataSplit> {
    let read = |name: &str| fs::read(dir.join(name)).map_err(|e| Error::Dataset(format!("{name}: {e}")));
    let train = parse_idx(&read("train-images-idx3-ubyte")?, &read("train-labels-idx1-ubyte")?, n_train)?;
    let test = parse_idx(&read("t10k-images-idx3-ubyte")?, &read("t10k-labels-idx1-ubyte")?, n_test)?;
    Ok(DataSplit { train, test, source: "mnist" })
}

/// Ten sparse prototype images in `[0, 1]^dim`; each sample is its class
/// prototype plus Gaussian pixel noise, clamped to `[0, 1]`. Labels cycle so
/// that contiguous shards are class balanced.
pub fn synthetic_mixture(seed: u64, n_train: usize, n_test: usize, dim: usize) -> DataSplit {
    const CLASSES: usize = 10;
    const ACTIVE: f64 = 0.15;
    const NOISE: f64 = 0.35;
    let mut proto_rng = substream(seed, Domain::Dataset, 0);
    let protos: Vec<Vec<f64>> = (0..CLASSES)
        .map(|_| {
            (0..dim)
                .map(|_| if proto_rng.random::<f64>() < ACTIVE { proto_rng.random_range(0.5..1.0) } else { 0.0 })
                .collect()
        })
        .collect();
    let draw = |n: usize, stream: u64| {
        let mut rng = substream(seed, Domain::Dataset, stream);
        let mut features = Vec::with_capacity(n * dim);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let c = i % CLASSES;
            labels.push(c as u8);
            for &p in &protos[c] {
                let z: f64 = rng.sample(StandardNormal);
                features.push((p + NOISE * z).clamp(0.0, 1.0));
            }
        }
        Dataset { features, labels, dim, classes: CLASSES }
    };
    DataSplit { train: draw(n_train, 1), test: draw(n_test, 2), source: "synthetic" }
}

/// MNIST from `dir` when present, otherwise the synthetic mixture with a warning.
pub fn load_or_synthesize(dir: Option<&Path>, seed: u64, n_train: usize, n_test: usize) -> DataSplit {
    if let Some(dir) = dir {
        match load_mnist(dir, n_train, n_test) {
            Ok(split) => return split,
            Err(e) => log::warn!("MNIST unavailable ({e}); using the synthetic mixture"),
        }
    }
    synthetic_mixture(seed, n_train, n_test, 784)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idx_pair(n: u32) -> (Vec<u8>, Vec<u8>) {
        let mut img = Vec::new();
        for v in [IMAGES_MAGIC, n, 2, 2] {
            img.extend_from_slice(&v.to_be_bytes());
        }
        img.extend((0..n * 4).map(|i| (i * 17 % 256) as u8));
        let mut lab = Vec::new();
        for v in [LABELS_MAGIC, n] {
            lab.extend_from_slice(&v.to_be_bytes());
        }
        lab.extend((0..n).map(|i| (i % 10) as u8));
        (img, lab)
    }

    #[test]
    fn idx_roundtrip() {
        let (img, lab) = idx_pair(5);
        let d = parse_idx(&img, &lab, 3).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.dim, 4);
        assert_eq!(d.labels, vec![0, 1, 2]);
        assert!((d.row(1)[0] - 68.0 / 255.0).abs() < 1e-15);
    }

    #[test]
    fn idx_rejects_bad_input() {
        let (mut img, lab) = idx_pair(2);
        assert!(parse_idx(&img[..10], &lab, 2).is_err());
        img[3] = 0;
        assert!(parse_idx(&img, &lab, 2).is_err());
        assert!(load_mnist(Path::new("/nonexistent"), 10, 10).is_err());
    }

    #[test]
    fn synthetic_is_seeded_and_balanced() {
        let a = synthetic_mixture(3, 100, 20, 784);
        let b = synthetic_mixture(3, 100, 20, 784);
        assert_eq!(a.train, b.train);
        assert_ne!(a.train.features, synthetic_mixture(4, 100, 20, 784).train.features);
        let shards = a.train.shards(10).unwrap();
        for s in &shards {
            let mut seen = s.labels.clone();
            seen.sort_unstable();
            assert_eq!(seen, (0..10).collect::<Vec<u8>>());
        }
        assert!(a.train.features.iter().all(|x| (0.0..=1.0).contains(x)));
    }
}

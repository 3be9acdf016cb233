use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::numerics::{Matrix, RngStream};
use crate::{Error, Result};

/// Labelled examples with features in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Matrix,
    labels: Vec<usize>,
    n_classes: usize,
}

impl Dataset {
    pub fn new(features: Matrix, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::InvalidConfig(format!("{} feature rows but {} labels", features.rows(), labels.len())));
        }
        if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= n_classes) {
            return Err(Error::InvalidConfig(format!("label {l} of example {i} is not below {n_classes} classes")));
        }
        Ok(Self { features, labels, n_classes })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.features.cols()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn example(&self, i: usize) -> &[f64] {
        self.features.row(i)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// The first `k` examples.
    pub fn truncated(&self, k: usize) -> Self {
        let k = k.min(self.len());
        let d = self.n_features();
        Self {
            features: Matrix::from_vec(k, d, self.features.as_slice()[..k * d].to_vec()),
            labels: self.labels[..k].to_vec(),
            n_classes: self.n_classes,
        }
    }
}

/// Per-feature standard deviation of the synthetic blobs.
pub const BLOB_STD: f64 = 0.75;

/// Gaussian blobs whose class `c` is centred at `c` on every feature, with
/// noise [`BLOB_STD`], min-max rescaled per feature into `[0, 1]`.
///
/// Labels cycle through the classes before shuffling, so each class occurs.
pub fn synthetic_dataset(n_examples: usize, n_features: usize, n_classes: usize, rng: &mut RngStream) -> Dataset {
    assert!(n_classes >= 1 && n_features >= 1);
    assert!(n_examples >= n_classes, "need at least one example per class");

    let mut labels: Vec<usize> = (0..n_examples).map(|i| i % n_classes).collect();
    for i in (1..n_examples).rev() {
        labels.swap(i, rng.below(i + 1));
    }

    let mut data = vec![0.0; n_examples * n_features];
    for (row, &label) in data.chunks_mut(n_features).zip(&labels) {
        for v in row.iter_mut() {
            *v = label as f64 + BLOB_STD * rng.normal();
        }
    }

    for j in 0..n_features {
        let column = (0..n_examples).map(|i| data[i * n_features + j]);
        let (lo, hi) = column.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        let span = if hi > lo { hi - lo } else { 1.0 };
        for i in 0..n_examples {
            let v = &mut data[i * n_features + j];
            *v = ((*v - lo) / span).clamp(0.0, 1.0);
        }
    }

    Dataset { features: Matrix::from_vec(n_examples, n_features, data), labels, n_classes }
}

//! Training views of a dataset and the per-epoch visiting order.
//!
//! The order in which records are visited is derived from the record
//! contents, the seed and the epoch number only. Two datasets holding the
//! same records in different storage orders therefore train identically.

use crate::features::FeatureDataset;
use crate::numeric::{hash_words, Matrix};

/// Shuffle stream for attribution-module epochs.
pub const ACM_PHASE: u64 = 1;
/// Shuffle stream for classifier epochs.
pub const CLASSIFIER_PHASE: u64 = 2;

/// Features as an `f64` matrix plus labels and content fingerprints.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub features: Matrix,
    /// 0.0 for real, 1.0 for generated.
    pub labels: Vec<f64>,
    pub fingerprints: Vec<u64>,
}

impl TrainingSet {
    pub fn from_dataset(dataset: &FeatureDataset, normalize: bool) -> Self {
        TrainingSet {
            features: dataset.to_matrix(normalize),
            labels: dataset.records().iter().map(|r| r.label.as_f64()).collect(),
            fingerprints: dataset.fingerprints(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Visiting order for one epoch.
///
/// Records are sorted by a hash of `(seed, phase, epoch, fingerprint)`; ties
/// fall back to the fingerprint and only then to the storage index, which
/// can only matter for byte-identical duplicates.
pub fn epoch_order(fingerprints: &[u64], seed: u64, phase: u64, epoch: u64) -> Vec<usize> {
    let mut keyed: Vec<(u64, u64, usize)> = fingerprints
        .iter()
        .enumerate()
        .map(|(i, &fp)| (hash_words([seed, phase, epoch, fp]), fp, i))
        .collect();
    keyed.sort_unstable();
    keyed.into_iter().map(|(_, _, i)| i).collect()
}

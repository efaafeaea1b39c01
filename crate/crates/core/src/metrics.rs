//! Detection metrics and class-separability statistics.
//!
//! Generated images (label 1) are the positive class throughout.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::Label;
use crate::numeric::Matrix;

/// Threshold at which probabilities become hard decisions.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Hard decisions: generated iff `p > threshold`; a tie goes to real.
pub fn decide(probabilities: &[f64], threshold: f64) -> Vec<Label> {
    probabilities
        .iter()
        .map(|&p| if p > threshold { Label::Generated } else { Label::Real })
        .collect()
}

/// Non-interpolated average precision.
///
/// Samples are ranked by descending score, ties kept in input order; the
/// result is the mean, over positives, of the precision at each positive's
/// rank.
pub fn average_precision(scores: &[f64], labels: &[Label]) -> Result<f64> {
    check_lengths(scores.len(), labels.len())?;
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(Error::argument(format!("score {i} is NaN")));
    }
    let positives = labels.iter().filter(|&&l| l == Label::Generated).count();
    if positives == 0 {
        return Err(Error::UndefinedMetric(
            "average precision needs at least one positive".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if labels[i] == Label::Generated {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(sum / positives as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionCounts {
    pub true_pos: usize,
    pub false_pos: usize,
    pub true_neg: usize,
    pub false_neg: usize,
}

impl ConfusionCounts {
    pub fn from_decisions(predicted: &[Label], labels: &[Label]) -> Self {
        let mut c = ConfusionCounts::default();
        for (&p, &y) in predicted.iter().zip(labels) {
            match (p, y) {
                (Label::Generated, Label::Generated) => c.true_pos += 1,
                (Label::Generated, Label::Real) => c.false_pos += 1,
                (Label::Real, Label::Real) => c.true_neg += 1,
                (Label::Real, Label::Generated) => c.false_neg += 1,
            }
        }
        c
    }

    /// `2 tp / (2 tp + fp + fn)`, the harmonic mean of precision and recall;
    /// 0 when there are no true positives.
    pub fn f1(&self) -> f64 {
        let denom = 2 * self.true_pos + self.false_pos + self.false_neg;
        if self.true_pos == 0 {
            0.0
        } else {
            (2 * self.true_pos) as f64 / denom as f64
        }
    }
}

/// Detection metrics for one evaluation set.
///
/// Per-class accuracies are `None` (JSON `null`) when that class is absent,
/// and `ap` is `None` when there are no generated samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub ap: Option<f64>,
    pub acc: f64,
    pub f1: f64,
    pub real_acc: Option<f64>,
    pub fake_acc: Option<f64>,
    pub n_real: usize,
    pub n_fake: usize,
}

pub fn accuracy_suite(probabilities: &[f64], labels: &[Label], threshold: f64) -> Result<MetricsReport> {
    check_lengths(probabilities.len(), labels.len())?;
    if labels.is_empty() {
        return Err(Error::EmptyInput("no samples to evaluate".into()));
    }
    let predicted = decide(probabilities, threshold);
    let c = ConfusionCounts::from_decisions(&predicted, labels);
    let n_real = c.true_neg + c.false_pos;
    let n_fake = c.true_pos + c.false_neg;
    let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    let ap = if n_fake > 0 {
        Some(average_precision(probabilities, labels)?)
    } else {
        None
    };
    Ok(MetricsReport {
        ap,
        acc: (c.true_pos + c.true_neg) as f64 / labels.len() as f64,
        f1: c.f1(),
        real_acc: ratio(c.true_neg, n_real),
        fake_acc: ratio(c.true_pos, n_fake),
        n_real,
        n_fake,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassVariances {
    pub real: f64,
    pub generated: f64,
}

/// Two-class separability: distance between class means, total scatter of
/// each class about its mean, and their Fisher ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparabilityReport {
    pub inter_class_distance: f64,
    pub intra_class_variance: ClassVariances,
    pub fisher_ratio: f64,
}

/// Separability of real rows `features_r` against generated rows `features_g`.
///
/// Intra-class variance is the mean squared Euclidean distance of a class's
/// samples to its own mean; the Fisher ratio is
/// `inter_class_distance² / (var_real + var_generated)`.
pub fn separability(features_r: &Matrix, features_g: &Matrix) -> Result<SeparabilityReport> {
    if features_r.cols() != features_g.cols() {
        return Err(Error::shape(format!(
            "real features have {} columns, generated have {}",
            features_r.cols(),
            features_g.cols()
        )));
    }
    if features_r.rows() == 0 || features_g.rows() == 0 {
        return Err(Error::EmptyInput("separability needs samples of both classes".into()));
    }
    let (mean_r, var_r) = mean_and_scatter(features_r);
    let (mean_g, var_g) = mean_and_scatter(features_g);
    let inter = mean_r
        .iter()
        .zip(&mean_g)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let denom = var_r + var_g;
    if denom <= 0.0 {
        return Err(Error::UndefinedMetric(
            "Fisher ratio undefined: both classes have zero spread".into(),
        ));
    }
    Ok(SeparabilityReport {
        inter_class_distance: inter,
        intra_class_variance: ClassVariances {
            real: var_r,
            generated: var_g,
        },
        fisher_ratio: inter * inter / denom,
    })
}

fn mean_and_scatter(m: &Matrix) -> (Vec<f64>, f64) {
    let n = m.rows() as f64;
    let mut mean = vec![0.0; m.cols()];
    for row in m.row_iter() {
        mean.iter_mut().zip(row).for_each(|(a, v)| *a += v);
    }
    mean.iter_mut().for_each(|a| *a /= n);
    let scatter = m
        .row_iter()
        .map(|row| row.iter().zip(&mean).map(|(v, c)| (v - c) * (v - c)).sum::<f64>())
        .sum::<f64>()
        / n;
    (mean, scatter)
}

/// Spearman rank correlation, with average ranks for ties.
pub fn rank_correlation(a: &[f64], b: &[f64]) -> Result<f64> {
    check_lengths(a.len(), b.len())?;
    if a.len() < 2 {
        return Err(Error::UndefinedMetric("rank correlation needs two samples".into()));
    }
    let (ra, rb) = (average_ranks(a), average_ranks(b));
    let mean = (a.len() as f64 + 1.0) / 2.0;
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - mean) * (y - mean);
        va += (x - mean) * (x - mean);
        vb += (y - mean) * (y - mean);
    }
    if va == 0.0 || vb == 0.0 {
        return Err(Error::UndefinedMetric("rank correlation of a constant sequence".into()));
    }
    Ok(cov / (va * vb).sqrt())
}

fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap_or(Ordering::Equal));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::shape(format!("{a} scores but {b} labels")));
    }
    Ok(())
}

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{hash_words, Matrix, SeededRng};

/// Class label. Generated images are the positive class everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Real = 0,
    Generated = 1,
}

impl Label {
    pub fn from_u8(v: u8) -> Option<Label> {
        match v {
            0 => Some(Label::Real),
            1 => Some(Label::Generated),
            _ => None,
        }
    }

    #[inline]
    pub fn as_u8(self) -> u8 {
        self as u8
    }

    #[inline]
    pub fn as_f64(self) -> f64 {
        self as u8 as f64
    }

    pub fn opposite(self) -> Label {
        match self {
            Label::Real => Label::Generated,
            Label::Generated => Label::Real,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecord {
    pub features: Vec<f32>,
    pub label: Label,
    /// Short provenance tag such as `"real"`, `"progan"` or `"sd1.4"`.
    pub source: String,
}

impl FeatureRecord {
    pub fn new(features: Vec<f32>, label: Label, source: impl Into<String>) -> Self {
        FeatureRecord {
            features,
            label,
            source: source.into(),
        }
    }

    /// Content hash over label, tag and exact feature bits.
    pub fn fingerprint(&self) -> u64 {
        let tag = self.source.bytes().map(u64::from);
        let feats = self.features.iter().map(|f| u64::from(f.to_bits()));
        hash_words(
            std::iter::once(self.label as u64)
                .chain(tag)
                .chain(std::iter::once(u64::MAX))
                .chain(feats),
        )
    }
}

/// Feature vectors of a fixed width with binary labels and source tags.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDataset {
    dim: usize,
    records: Vec<FeatureRecord>,
}

impl FeatureDataset {
    pub fn new(dim: usize, records: Vec<FeatureRecord>) -> Result<Self> {
        for (i, r) in records.iter().enumerate() {
            check_record(dim, i, r)?;
        }
        Ok(FeatureDataset { dim, records })
    }

    pub fn empty(dim: usize) -> Self {
        FeatureDataset {
            dim,
            records: Vec::new(),
        }
    }

    pub fn push(&mut self, record: FeatureRecord) -> Result<()> {
        check_record(self.dim, self.records.len(), &record)?;
        self.records.push(record);
        Ok(())
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.records.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[FeatureRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<FeatureRecord> {
        self.records
    }

    pub fn count(&self, label: Label) -> usize {
        self.records.iter().filter(|r| r.label == label).count()
    }

    pub fn has_both_labels(&self) -> bool {
        self.count(Label::Real) > 0 && self.count(Label::Generated) > 0
    }

    /// Distinct source tags in order of first appearance.
    pub fn tags(&self) -> Vec<&str> {
        let mut tags: Vec<&str> = Vec::new();
        for r in &self.records {
            if !tags.contains(&r.source.as_str()) {
                tags.push(&r.source);
            }
        }
        tags
    }

    pub fn labels(&self) -> Vec<Label> {
        self.records.iter().map(|r| r.label).collect()
    }

    /// Features widened to `f64`, optionally scaled to unit L2 norm per row.
    pub fn to_matrix(&self, normalize: bool) -> Matrix {
        let mut data = Vec::with_capacity(self.records.len() * self.dim);
        for r in &self.records {
            let start = data.len();
            data.extend(r.features.iter().map(|&v| f64::from(v)));
            if normalize {
                l2_normalize(&mut data[start..]);
            }
        }
        Matrix::from_vec(self.records.len(), self.dim, data).expect("records validated")
    }

    /// Rows of one class, in dataset order.
    pub fn class_matrix(&self, label: Label, normalize: bool) -> Matrix {
        let keep: Vec<usize> = (0..self.len())
            .filter(|&i| self.records[i].label == label)
            .collect();
        self.to_matrix(normalize).select_rows(&keep)
    }

    pub fn fingerprints(&self) -> Vec<u64> {
        self.records.iter().map(FeatureRecord::fingerprint).collect()
    }

    fn subset(&self, indices: &[usize]) -> FeatureDataset {
        FeatureDataset {
            dim: self.dim,
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
        }
    }
}

/// Rescales to unit L2 norm; a zero vector is left as is.
pub fn l2_normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

fn check_record(dim: usize, index: usize, r: &FeatureRecord) -> Result<()> {
    if r.features.len() != dim {
        return Err(Error::validation(format!(
            "record {index} has {} features, expected {dim}",
            r.features.len()
        )));
    }
    if let Some(j) = r.features.iter().position(|v| !v.is_finite()) {
        return Err(Error::validation(format!(
            "record {index} has a non-finite value at feature {j}"
        )));
    }
    Ok(())
}

/// Which single class trains the attribution module.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassSelector {
    RealOnly,
    GeneratedOnly,
}

impl ClassSelector {
    pub fn label(self) -> Label {
        match self {
            ClassSelector::RealOnly => Label::Real,
            ClassSelector::GeneratedOnly => Label::Generated,
        }
    }
}

/// A class selector plus an optional source-tag restriction.
///
/// Parses from and displays as `real`, `gen`, `real:<tag>` or `gen:<tag>`,
/// and serializes as that same string.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct AttributionSource {
    pub selector: ClassSelector,
    pub tag: Option<String>,
}

impl AttributionSource {
    pub fn real_only() -> Self {
        AttributionSource {
            selector: ClassSelector::RealOnly,
            tag: None,
        }
    }

    pub fn generated_only() -> Self {
        AttributionSource {
            selector: ClassSelector::GeneratedOnly,
            tag: None,
        }
    }

    pub fn with_tag(mut self, tag: impl Into<String>) -> Self {
        self.tag = Some(tag.into());
        self
    }

    pub fn matches(&self, record: &FeatureRecord) -> bool {
        record.label == self.selector.label()
            && self.tag.as_deref().is_none_or(|t| t == record.source)
    }
}

impl Default for AttributionSource {
    fn default() -> Self {
        AttributionSource::real_only()
    }
}

impl fmt::Display for AttributionSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let class = match self.selector {
            ClassSelector::RealOnly => "real",
            ClassSelector::GeneratedOnly => "gen",
        };
        match &self.tag {
            Some(tag) => write!(f, "{class}:{tag}"),
            None => f.write_str(class),
        }
    }
}

impl TryFrom<String> for AttributionSource {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<AttributionSource> for String {
    fn from(s: AttributionSource) -> String {
        s.to_string()
    }
}

impl FromStr for AttributionSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (class, tag) = match s.split_once(':') {
            Some((c, t)) => (c, Some(t)),
            None => (s, None),
        };
        let selector = match class {
            "real" => ClassSelector::RealOnly,
            "gen" | "generated" => ClassSelector::GeneratedOnly,
            other => {
                return Err(Error::argument(format!(
                    "unknown attribution source {other:?}; expected real|gen[:tag]"
                )))
            }
        };
        if tag == Some("") {
            return Err(Error::argument("empty source tag"));
        }
        Ok(AttributionSource {
            selector,
            tag: tag.map(str::to_owned),
        })
    }
}

/// The single-class subset an attribution module trains on, in dataset order.
pub fn select_subset(dataset: &FeatureDataset, source: &AttributionSource) -> Result<FeatureDataset> {
    if dataset.is_empty() {
        return Err(Error::EmptyInput("cannot select from an empty dataset".into()));
    }
    let keep: Vec<usize> = (0..dataset.len())
        .filter(|&i| source.matches(&dataset.records[i]))
        .collect();
    if keep.is_empty() {
        return Err(Error::EmptySubset {
            source_filter: source.to_string(),
        });
    }
    Ok(dataset.subset(&keep))
}

/// Seeded train / held-out split.
///
/// The training half gets `round(fraction * N)` records, raised if needed so
/// that every label present in the dataset appears at least once.
pub fn split(dataset: &FeatureDataset, fraction: f64, seed: u64) -> Result<(FeatureDataset, FeatureDataset)> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::argument(format!(
            "split fraction must lie in (0, 1], got {fraction}"
        )));
    }
    if dataset.is_empty() {
        return Err(Error::EmptyInput("cannot split an empty dataset".into()));
    }
    let n = dataset.len();
    let present: Vec<Label> = [Label::Real, Label::Generated]
        .into_iter()
        .filter(|&l| dataset.count(l) > 0)
        .collect();

    let mut order: Vec<usize> = (0..n).collect();
    SeededRng::stream(seed, SPLIT_STREAM).shuffle(&mut order);

    let n_train = ((fraction * n as f64).round() as usize).clamp(present.len(), n);
    for &label in &present {
        let has = |order: &[usize]| order[..n_train].iter().any(|&i| dataset.records[i].label == label);
        if has(&order) {
            continue;
        }
        // Swap the first held-out record of the missing label with the last
        // training record whose label is represented more than once.
        let from = (n_train..n)
            .find(|&p| dataset.records[order[p]].label == label)
            .expect("label is present");
        let to = (0..n_train)
            .rev()
            .find(|&p| {
                let l = dataset.records[order[p]].label;
                order[..n_train]
                    .iter()
                    .filter(|&&i| dataset.records[i].label == l)
                    .count()
                    > 1
            })
            .expect("n_train >= number of present labels");
        order.swap(from, to);
    }
    let (train, held) = order.split_at(n_train);
    Ok((dataset.subset(train), dataset.subset(held)))
}

const SPLIT_STREAM: u64 = 0x5711;

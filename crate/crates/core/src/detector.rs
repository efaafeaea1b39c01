//! The full detector: attribution module plus a linear probe over its
//! deviations, trained by alternating between the two.
//!
//! Each round first refines the attribution module on the single-class
//! subset with the classifier frozen, then trains the classifier on the
//! deviations of the whole two-class dataset with the module frozen.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::acm::{self, default_bottleneck, AcmModel, AcmOptimizer, DEFAULT_HIDDEN_DIM};
use crate::batching::{epoch_order, TrainingSet, CLASSIFIER_PHASE};
use crate::error::{Error, Result};
use crate::features::{l2_normalize, select_subset, AttributionSource, FeatureDataset, Label};
use crate::metrics::{accuracy_suite, separability, MetricsReport, SeparabilityReport, DEFAULT_THRESHOLD};
use crate::numeric::{
    bce_loss, sigmoid, Activation, AdamConfig, AdamState, Matrix, MlpGrads, MlpParams, SeededRng,
};

const ACM_INIT_STREAM: u64 = 0xac01;
const CLASSIFIER_INIT_STREAM: u64 = 0xc1a5;

/// Training hyperparameters. Every count must be at least 1.
///
/// Missing JSON fields take their default values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub rounds: usize,
    pub acm_epochs_per_round: usize,
    pub cls_epochs_per_round: usize,
    pub source: AttributionSource,
    pub seed: u64,
    /// Scale every feature vector to unit L2 norm before use.
    pub normalize: bool,
    pub hidden_dim: usize,
    /// `None` picks [`default_bottleneck`] for the feature width.
    pub bottleneck_dim: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 2e-4,
            batch_size: 256,
            rounds: 10,
            acm_epochs_per_round: 5,
            cls_epochs_per_round: 5,
            source: AttributionSource::real_only(),
            seed: 0,
            normalize: false,
            hidden_dim: DEFAULT_HIDDEN_DIM,
            bottleneck_dim: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::argument(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        for (name, v) in [
            ("batch_size", self.batch_size),
            ("rounds", self.rounds),
            ("acm_epochs_per_round", self.acm_epochs_per_round),
            ("cls_epochs_per_round", self.cls_epochs_per_round),
            ("hidden_dim", self.hidden_dim),
        ] {
            if v == 0 {
                return Err(Error::argument(format!("{name} must be at least 1")));
            }
        }
        if self.bottleneck_dim == Some(0) {
            return Err(Error::argument("bottleneck_dim must be at least 1"));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            ..AdamConfig::default()
        }
    }
}

/// Attribution module plus linear probe; the deployable artifact.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorModel {
    acm: AcmModel,
    classifier: MlpParams,
    normalize: bool,
}

impl DetectorModel {
    pub fn new(acm: AcmModel, classifier: MlpParams, normalize: bool) -> Result<Self> {
        if classifier.input_dim() != acm.feature_dim() || classifier.output_dim() != 1 {
            return Err(Error::validation(format!(
                "classifier maps {} -> {}, expected {} -> 1",
                classifier.input_dim(),
                classifier.output_dim(),
                acm.feature_dim()
            )));
        }
        Ok(DetectorModel {
            acm,
            classifier,
            normalize,
        })
    }

    pub fn acm(&self) -> &AcmModel {
        &self.acm
    }

    pub fn classifier(&self) -> &MlpParams {
        &self.classifier
    }

    pub fn normalize(&self) -> bool {
        self.normalize
    }

    pub fn feature_dim(&self) -> usize {
        self.acm.feature_dim()
    }

    /// Applies the model's input normalization to raw features.
    pub fn prepare(&self, features: &Matrix) -> Matrix {
        let mut x = features.clone();
        if self.normalize {
            for r in 0..x.rows() {
                l2_normalize(x.row_mut(r));
            }
        }
        x
    }

    /// Attribution deviations of raw features.
    pub fn deviations(&self, features: &Matrix) -> Result<Matrix> {
        self.acm.attribution_deviation(&self.prepare(features))
    }

    /// Probability that each row is generated, strictly inside `(0, 1)`.
    pub fn predict(&self, features: &Matrix) -> Result<Vec<f64>> {
        let logits = self.classifier.forward(&self.deviations(features)?)?;
        Ok(logits.as_slice().iter().map(|&z| to_open_unit(sigmoid(z))).collect())
    }

    pub fn predict_dataset(&self, dataset: &FeatureDataset) -> Result<Vec<f64>> {
        self.predict(&dataset.to_matrix(false))
    }
}

#[inline]
fn to_open_unit(p: f64) -> f64 {
    p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Acm,
    Classifier,
}

/// One epoch's mean loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub phase: Phase,
    pub round: usize,
    /// Epoch index counted across rounds within this phase.
    pub epoch: u64,
    pub loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
}

impl TrainLog {
    pub fn losses(&self, phase: Phase) -> Vec<f64> {
        self.epochs.iter().filter(|e| e.phase == phase).map(|e| e.loss).collect()
    }

    /// One JSON object per line.
    pub fn to_json_lines(&self) -> String {
        self.epochs
            .iter()
            .map(|e| serde_json::to_string(e).expect("plain struct") + "\n")
            .collect()
    }
}

/// Fresh, untrained detector for features of width `feature_dim`.
pub fn init_model(feature_dim: usize, config: &TrainConfig) -> Result<DetectorModel> {
    let k = config.bottleneck_dim.unwrap_or_else(|| default_bottleneck(feature_dim));
    if k == 0 {
        return Err(Error::validation(format!(
            "feature width {feature_dim} is too small for a bottleneck of at most D/4"
        )));
    }
    let acm = AcmModel::init(
        feature_dim,
        config.hidden_dim,
        k,
        &mut SeededRng::stream(config.seed, ACM_INIT_STREAM),
    )?;
    let classifier = MlpParams::glorot(
        &[feature_dim, 1],
        &[Activation::Identity],
        &mut SeededRng::stream(config.seed, CLASSIFIER_INIT_STREAM),
    )?;
    DetectorModel::new(acm, classifier, config.normalize)
}

/// Alternating training of the attribution module and the classifier.
pub fn train(dataset: &FeatureDataset, config: &TrainConfig) -> Result<(DetectorModel, TrainLog)> {
    config.validate()?;
    let subset = select_subset(dataset, &config.source)?;
    if !dataset.has_both_labels() {
        warn!("training data holds a single label; the classifier phase will only see one class");
    }
    let mut model = init_model(dataset.dim(), config)?;
    let acm_set = TrainingSet::from_dataset(&subset, config.normalize);
    let full_set = TrainingSet::from_dataset(dataset, config.normalize);

    let mut acm_opt = AcmOptimizer::new(&model.acm, config.adam());
    let mut cls_opt = AdamState::new(&model.classifier, config.adam());
    let mut log = TrainLog::default();
    let (mut acm_epoch, mut cls_epoch) = (0u64, 0u64);

    for round in 0..config.rounds {
        for _ in 0..config.acm_epochs_per_round {
            let loss = acm::train_epoch(
                &mut model.acm,
                &acm_set,
                &mut acm_opt,
                config.batch_size,
                config.seed,
                acm_epoch,
            )?;
            log.epochs.push(EpochLog {
                phase: Phase::Acm,
                round,
                epoch: acm_epoch,
                loss,
            });
            acm_epoch += 1;
        }
        // The attribution module is frozen for the rest of the round.
        let deviations = model.acm.attribution_deviation(&full_set.features)?;
        for _ in 0..config.cls_epochs_per_round {
            let loss = classifier_epoch(
                &mut model.classifier,
                &deviations,
                &full_set,
                &mut cls_opt,
                config.batch_size,
                config.seed,
                cls_epoch,
            )?;
            log.epochs.push(EpochLog {
                phase: Phase::Classifier,
                round,
                epoch: cls_epoch,
                loss,
            });
            cls_epoch += 1;
        }
    }
    Ok((model, log))
}

/// One classifier epoch over the whole training set with the attribution
/// module held fixed. `data` holds features already prepared for the model
/// (normalized if the model normalizes).
///
/// Returns the mean per-batch cross-entropy, or 0 when `data` is empty (no
/// update happens then).
pub fn classifier_train_epoch(
    model: &mut DetectorModel,
    data: &TrainingSet,
    optimizer: &mut AdamState,
    batch_size: usize,
    seed: u64,
    epoch: u64,
) -> Result<f64> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let has = |y: f64| data.labels.contains(&y);
    if !(has(0.0) && has(1.0)) {
        warn!("classifier epoch {epoch} sees a single label");
    }
    let deviations = model.acm.attribution_deviation(&data.features)?;
    classifier_epoch(&mut model.classifier, &deviations, data, optimizer, batch_size, seed, epoch)
}

fn classifier_epoch(
    classifier: &mut MlpParams,
    deviations: &Matrix,
    data: &TrainingSet,
    optimizer: &mut AdamState,
    batch_size: usize,
    seed: u64,
    epoch: u64,
) -> Result<f64> {
    if batch_size == 0 {
        return Err(Error::argument("batch size must be positive"));
    }
    if data.is_empty() {
        return Ok(0.0);
    }
    let order = epoch_order(&data.fingerprints, seed, CLASSIFIER_PHASE, epoch);
    let mut total = 0.0;
    let mut batches = 0usize;
    for chunk in order.chunks(batch_size) {
        let batch = deviations.select_rows(chunk);
        let labels: Vec<f64> = chunk.iter().map(|&i| data.labels[i]).collect();
        let (loss, grads) = classifier_loss_and_grads(classifier, &batch, &labels)?;
        optimizer.update(classifier, &grads)?;
        total += loss;
        batches += 1;
    }
    Ok(total / batches as f64)
}

/// Mean binary cross-entropy of `sigmoid(classifier(deviations))` against
/// 0/1 labels, with parameter gradients.
pub fn classifier_loss_and_grads(
    classifier: &MlpParams,
    deviations: &Matrix,
    labels: &[f64],
) -> Result<(f64, MlpGrads)> {
    if classifier.output_dim() != 1 {
        return Err(Error::shape("classifier must produce a single logit"));
    }
    let trace = classifier.forward_trace(deviations)?;
    let probs: Vec<f64> = trace.output().as_slice().iter().map(|&z| sigmoid(z)).collect();
    let (loss, d_prob) = bce_loss(&probs, labels)?;
    let d_logit: Vec<f64> = d_prob
        .iter()
        .zip(&probs)
        .map(|(g, p)| g * p * (1.0 - p))
        .collect();
    let d_logit = Matrix::from_vec(d_logit.len(), 1, d_logit)?;
    let (grads, _) = classifier.backward_trace(&trace, &d_logit)?;
    Ok((loss, grads))
}

/// Separability in the model's input space and in deviation space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparabilityComparison {
    pub raw: SeparabilityReport,
    pub deviation: SeparabilityReport,
    /// `deviation.fisher_ratio / raw.fisher_ratio`; `None` if the raw ratio is 0.
    pub fisher_amplification: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metrics: MetricsReport,
    /// `None` unless both classes are present.
    pub separability: Option<SeparabilityComparison>,
}

impl EvalReport {
    /// Pretty-printed JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain struct") + "\n"
    }
}

/// Metrics at the 0.5 threshold plus raw-versus-deviation separability.
pub fn evaluate(model: &DetectorModel, dataset: &FeatureDataset) -> Result<EvalReport> {
    if dataset.dim() != model.feature_dim() {
        return Err(Error::shape(format!(
            "model expects {} features, data has {}",
            model.feature_dim(),
            dataset.dim()
        )));
    }
    let raw = dataset.to_matrix(false);
    let probs = model.predict(&raw)?;
    let labels = dataset.labels();
    let metrics = accuracy_suite(&probs, &labels, DEFAULT_THRESHOLD)?;

    let separability = if dataset.has_both_labels() {
        let prepared = model.prepare(&raw);
        let deviations = model.acm.attribution_deviation(&prepared)?;
        let rows = |label: Label| -> Vec<usize> {
            (0..labels.len()).filter(|&i| labels[i] == label).collect()
        };
        let (real, generated) = (rows(Label::Real), rows(Label::Generated));
        let raw_sep = separability(&prepared.select_rows(&real), &prepared.select_rows(&generated))?;
        let dev_sep = separability(&deviations.select_rows(&real), &deviations.select_rows(&generated))?;
        let fisher_amplification =
            (raw_sep.fisher_ratio > 0.0).then(|| dev_sep.fisher_ratio / raw_sep.fisher_ratio);
        Some(SeparabilityComparison {
            raw: raw_sep,
            deviation: dev_sep,
            fisher_amplification,
        })
    } else {
        None
    };
    Ok(EvalReport {
        metrics,
        separability,
    })
}

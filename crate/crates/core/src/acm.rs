//! The attribution consistency module.
//!
//! An encoder–decoder pair is fit to features of a single class by
//! minimising the mean per-sample L1 norm of the reconstruction residual.
//! The elementwise absolute residual, `|x - dec(enc(x))|`, is the
//! *attribution deviation*: small for the class the module was fit on and
//! large for samples off that class's manifold.

use crate::batching::{epoch_order, TrainingSet, ACM_PHASE};
use crate::error::{Error, Result};
use crate::numeric::{
    hash_words, l1_loss, Activation, AdamConfig, AdamState, Matrix, MlpGrads, MlpParams, SeededRng,
};

pub const DEFAULT_HIDDEN_DIM: usize = 512;

/// Default bottleneck width for a feature width `d`.
///
/// 64 for 768-wide embeddings, otherwise `max(2, d / 8)`; always capped at
/// `d / 4`. Returns 0 when `d < 4`, for which no valid bottleneck exists.
pub fn default_bottleneck(d: usize) -> usize {
    let k = if d == 768 { 64 } else { (d / 8).max(2) };
    k.min(d / 4)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcmModel {
    encoder: MlpParams,
    decoder: MlpParams,
}

impl AcmModel {
    pub fn new(encoder: MlpParams, decoder: MlpParams) -> Result<Self> {
        let d = encoder.input_dim();
        let k = encoder.output_dim();
        if decoder.input_dim() != k {
            return Err(Error::shape(format!(
                "decoder takes {} inputs but the encoder bottleneck is {k}",
                decoder.input_dim()
            )));
        }
        if decoder.output_dim() != d {
            return Err(Error::shape(format!(
                "decoder produces {} features, expected {d}",
                decoder.output_dim()
            )));
        }
        if k == 0 || k > d / 4 {
            return Err(Error::validation(format!(
                "bottleneck {k} must satisfy 1 <= k <= D/4 = {}",
                d / 4
            )));
        }
        Ok(AcmModel { encoder, decoder })
    }

    /// `D -> hidden -> k` encoder and `k -> hidden -> D` decoder, ReLU on the
    /// hidden layers, Glorot-initialised from `rng`.
    pub fn init(feature_dim: usize, hidden_dim: usize, bottleneck_dim: usize, rng: &mut SeededRng) -> Result<Self> {
        let acts = [Activation::Relu, Activation::Identity];
        let encoder = MlpParams::glorot(&[feature_dim, hidden_dim, bottleneck_dim], &acts, rng)?;
        let decoder = MlpParams::glorot(&[bottleneck_dim, hidden_dim, feature_dim], &acts, rng)?;
        AcmModel::new(encoder, decoder)
    }

    pub fn encoder(&self) -> &MlpParams {
        &self.encoder
    }

    pub fn decoder(&self) -> &MlpParams {
        &self.decoder
    }

    pub fn feature_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    pub fn bottleneck_dim(&self) -> usize {
        self.encoder.output_dim()
    }

    pub fn fingerprint(&self) -> u64 {
        hash_words([self.encoder.fingerprint(), self.decoder.fingerprint()])
    }

    pub fn reconstruct(&self, features: &Matrix) -> Result<Matrix> {
        self.check(features)?;
        self.decoder.forward(&self.encoder.forward(features)?)
    }

    /// `|x - dec(enc(x))|` per element.
    pub fn attribution_deviation(&self, features: &Matrix) -> Result<Matrix> {
        absolute_residual(features, &self.reconstruct(features)?)
    }

    /// Mean per-sample L1 deviation over a batch, with gradients for both
    /// networks.
    pub fn loss_and_grads(&self, batch: &Matrix) -> Result<(f64, AcmGrads)> {
        self.check(batch)?;
        let enc = self.encoder.forward_trace(batch)?;
        let dec = self.decoder.forward_trace(enc.output())?;
        let residual = batch.sub(dec.output())?;
        let (loss, d_residual) = l1_loss(&residual)?;
        // residual = x - recon, so dL/drecon = -dL/dresidual
        let d_recon = d_residual.map(|g| -g);
        let (decoder, d_code) = self.decoder.backward_trace(&dec, &d_recon)?;
        let (encoder, _) = self.encoder.backward_trace(&enc, &d_code)?;
        Ok((loss, AcmGrads { encoder, decoder }))
    }

    fn check(&self, features: &Matrix) -> Result<()> {
        if features.cols() != self.feature_dim() {
            return Err(Error::shape(format!(
                "attribution module expects {} features, got {}",
                self.feature_dim(),
                features.cols()
            )));
        }
        Ok(())
    }
}

/// Elementwise `|features - reconstruction|`.
pub fn absolute_residual(features: &Matrix, reconstruction: &Matrix) -> Result<Matrix> {
    Ok(features.sub(reconstruction)?.map(f64::abs))
}

#[derive(Debug, Clone)]
pub struct AcmGrads {
    pub encoder: MlpGrads,
    pub decoder: MlpGrads,
}

/// Adam state for both halves of an [`AcmModel`].
#[derive(Debug, Clone)]
pub struct AcmOptimizer {
    pub encoder: AdamState,
    pub decoder: AdamState,
}

impl AcmOptimizer {
    pub fn new(model: &AcmModel, config: AdamConfig) -> Self {
        AcmOptimizer {
            encoder: AdamState::new(&model.encoder, config),
            decoder: AdamState::new(&model.decoder, config),
        }
    }

    pub fn step(&self) -> u64 {
        self.encoder.step()
    }

    pub fn apply(&mut self, model: &mut AcmModel, grads: &AcmGrads) -> Result<()> {
        self.encoder.update(&mut model.encoder, &grads.encoder)?;
        self.decoder.update(&mut model.decoder, &grads.decoder)
    }
}

/// One pass over a single-class training set in mini-batches.
///
/// Returns the mean of the per-batch losses.
pub fn train_epoch(
    model: &mut AcmModel,
    subset: &TrainingSet,
    optimizer: &mut AcmOptimizer,
    batch_size: usize,
    seed: u64,
    epoch: u64,
) -> Result<f64> {
    if subset.is_empty() {
        return Err(Error::EmptyInput("attribution module needs at least one sample".into()));
    }
    if batch_size == 0 {
        return Err(Error::argument("batch size must be positive"));
    }
    let order = epoch_order(&subset.fingerprints, seed, ACM_PHASE, epoch);
    let mut total = 0.0;
    let mut batches = 0usize;
    for chunk in order.chunks(batch_size) {
        let batch = subset.features.select_rows(chunk);
        let (loss, grads) = model.loss_and_grads(&batch)?;
        optimizer.apply(model, &grads)?;
        total += loss;
        batches += 1;
    }
    Ok(total / batches as f64)
}

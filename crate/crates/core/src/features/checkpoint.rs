//! The `ACMCKPT1` checkpoint format.
//!
//! ```text
//! magic          8 bytes  "ACMCKPT1"
//! header length  u32 LE
//! header         UTF-8 JSON (format version, dims, architecture, config, seed)
//! payload        f64 LE weights: encoder, decoder, classifier; per layer the
//!                row-major (out x in) weight followed by the bias
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::afv::Cursor;
use crate::acm::AcmModel;
use crate::detector::{DetectorModel, TrainConfig};
use crate::error::{Error, Result};
use crate::numeric::{Activation, Layer, Matrix, MlpParams};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"ACMCKPT1";
pub const CHECKPOINT_VERSION: u32 = 1;

/// A trained detector together with the configuration that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: DetectorModel,
    pub config: TrainConfig,
}

impl Checkpoint {
    pub fn feature_dim(&self) -> usize {
        self.model.feature_dim()
    }

    pub fn seed(&self) -> u64 {
        self.config.seed
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub encoder: Vec<LayerSpec>,
    pub decoder: Vec<LayerSpec>,
    pub classifier: Vec<LayerSpec>,
}

/// The JSON header of a checkpoint file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub feature_dim: usize,
    pub bottleneck_dim: usize,
    pub normalize: bool,
    pub seed: u64,
    pub config: TrainConfig,
    pub architecture: Architecture,
}

fn specs(net: &MlpParams) -> Vec<LayerSpec> {
    net.layers()
        .iter()
        .map(|l| LayerSpec {
            in_dim: l.in_dim(),
            out_dim: l.out_dim(),
            activation: l.activation,
        })
        .collect()
}

pub fn save_checkpoint(checkpoint: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode_checkpoint(checkpoint);
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    f.sync_all()?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    decode_checkpoint(&fs::read(path)?)
}

pub fn read_checkpoint_header(path: impl AsRef<Path>) -> Result<CheckpointHeader> {
    let bytes = fs::read(path)?;
    Ok(split_checkpoint(&bytes)?.0)
}

pub fn encode_checkpoint(checkpoint: &Checkpoint) -> Vec<u8> {
    let model = &checkpoint.model;
    let header = CheckpointHeader {
        format_version: CHECKPOINT_VERSION,
        feature_dim: model.feature_dim(),
        bottleneck_dim: model.acm().bottleneck_dim(),
        normalize: model.normalize(),
        seed: checkpoint.config.seed,
        config: checkpoint.config.clone(),
        architecture: Architecture {
            encoder: specs(model.acm().encoder()),
            decoder: specs(model.acm().decoder()),
            classifier: specs(model.classifier()),
        },
    };
    let payload: Vec<f64> = [model.acm().encoder(), model.acm().decoder(), model.classifier()]
        .into_iter()
        .flat_map(MlpParams::flat_params)
        .collect();
    assemble(&header, &payload)
}

pub(crate) fn assemble(header: &CheckpointHeader, payload: &[f64]) -> Vec<u8> {
    let json = serde_json::to_vec(header).expect("plain struct");
    let mut out = Vec::with_capacity(12 + json.len() + payload.len() * 8);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for v in payload {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Header plus the raw weight payload, without interpreting the weights.
pub(crate) fn split_checkpoint(bytes: &[u8]) -> Result<(CheckpointHeader, &[u8])> {
    let mut cur = Cursor::new(bytes);
    let magic: [u8; 8] = cur
        .array()
        .map_err(|_| Error::format("file too short to be a checkpoint"))?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::format("bad magic, not an ACMCKPT1 checkpoint"));
    }
    let len = u32::from_le_bytes(cur.array()?) as usize;
    let at = cur.pos as u64;
    let json = cur.take(len)?;
    // Peek at the version before the strict parse so that a newer file is
    // reported as a version problem rather than as unknown fields.
    let version = serde_json::from_slice::<serde_json::Value>(json)
        .map_err(|e| Error::format(format!("malformed checkpoint header at byte {at}: {e}")))?
        .get("format_version")
        .and_then(serde_json::Value::as_u64);
    if version != Some(CHECKPOINT_VERSION as u64) {
        return Err(Error::format(format!(
            "unsupported checkpoint version {version:?}, expected {CHECKPOINT_VERSION}"
        )));
    }
    let header: CheckpointHeader = serde_json::from_slice(json)
        .map_err(|e| Error::format(format!("malformed checkpoint header: {e}")))?;
    Ok((header, cur.rest()))
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let (header, payload) = split_checkpoint(bytes)?;
    let payload_start = (bytes.len() - payload.len()) as u64;
    let arch = &header.architecture;
    let d = header.feature_dim;
    let k = header.bottleneck_dim;

    let ends = |net: &[LayerSpec]| (net.first().map(|l| l.in_dim), net.last().map(|l| l.out_dim));
    let checks = [
        ("encoder", ends(&arch.encoder), (Some(d), Some(k))),
        ("decoder", ends(&arch.decoder), (Some(k), Some(d))),
        ("classifier", ends(&arch.classifier), (Some(d), Some(1))),
    ];
    for (name, got, want) in checks {
        if got != want {
            return Err(Error::validation(format!(
                "{name} maps {:?} -> {:?}, header requires {:?} -> {:?}",
                got.0, got.1, want.0, want.1
            )));
        }
    }
    if header.normalize != header.config.normalize || header.seed != header.config.seed {
        return Err(Error::validation("header fields disagree with the stored config"));
    }

    let expected: usize = [&arch.encoder, &arch.decoder, &arch.classifier]
        .into_iter()
        .flatten()
        .map(|l| l.in_dim * l.out_dim + l.out_dim)
        .sum();
    if payload.len() != expected * 8 {
        let offset = payload_start + payload.len().min(expected * 8) as u64;
        return Err(Error::corruption(
            offset,
            format!("weight payload is {} bytes, architecture needs {}", payload.len(), expected * 8),
        ));
    }
    let mut values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
    let mut build = |name: &str, net: &[LayerSpec]| -> Result<MlpParams> {
        let mut layers = Vec::with_capacity(net.len());
        for (i, spec) in net.iter().enumerate() {
            let w: Vec<f64> = values.by_ref().take(spec.in_dim * spec.out_dim).collect();
            let b: Vec<f64> = values.by_ref().take(spec.out_dim).collect();
            if w.iter().chain(&b).any(|v| !v.is_finite()) {
                return Err(Error::validation(format!("{name} layer {i} holds non-finite weights")));
            }
            let weight = Matrix::from_vec(spec.out_dim, spec.in_dim, w)?;
            layers.push(Layer::new(weight, b, spec.activation)?);
        }
        MlpParams::new(layers).map_err(|e| Error::validation(format!("{name}: {e}")))
    };
    let encoder = build("encoder", &arch.encoder)?;
    let decoder = build("decoder", &arch.decoder)?;
    let classifier = build("classifier", &arch.classifier)?;
    let acm = AcmModel::new(encoder, decoder).map_err(|e| Error::validation(e.to_string()))?;
    let model = DetectorModel::new(acm, classifier, header.normalize)?;
    Ok(Checkpoint {
        model,
        config: header.config,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::init_model;

    fn sample() -> Checkpoint {
        let config = TrainConfig {
            hidden_dim: 12,
            seed: 5,
            ..TrainConfig::default()
        };
        Checkpoint {
            model: init_model(16, &config).unwrap(),
            config,
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let c = sample();
        let bytes = encode_checkpoint(&c);
        assert_eq!(&bytes[..8], b"ACMCKPT1");
        let back = decode_checkpoint(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(encode_checkpoint(&back), bytes);
    }

    #[test]
    fn wrong_magic_is_format_error() {
        let mut bytes = encode_checkpoint(&sample());
        bytes[7] = b'2';
        assert!(matches!(decode_checkpoint(&bytes), Err(Error::Format(_))));
        assert!(matches!(decode_checkpoint(b"ACM"), Err(Error::Format(_))));
    }

    #[test]
    fn version_mismatch_is_format_error() {
        let bytes = encode_checkpoint(&sample());
        let (mut header, payload) = split_checkpoint(&bytes).unwrap();
        header.format_version = 2;
        let payload: Vec<f64> = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        let err = decode_checkpoint(&assemble(&header, &payload)).unwrap_err();
        assert!(matches!(err, Error::Format(ref m) if m.contains("version")), "{err}");
    }

    #[test]
    fn encoder_width_must_match_feature_dim() {
        let bytes = encode_checkpoint(&sample());
        let (mut header, payload) = split_checkpoint(&bytes).unwrap();
        header.feature_dim = 20;
        let payload: Vec<f64> = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        assert!(matches!(decode_checkpoint(&assemble(&header, &payload)), Err(Error::Validation(_))));
    }

    #[test]
    fn truncated_payload_is_corruption() {
        let bytes = encode_checkpoint(&sample());
        assert!(matches!(decode_checkpoint(&bytes[..bytes.len() - 8]), Err(Error::Corruption { .. })));
    }

    #[test]
    fn non_finite_weight_rejected() {
        let mut bytes = encode_checkpoint(&sample());
        let n = bytes.len();
        bytes[n - 8..].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(matches!(decode_checkpoint(&bytes), Err(Error::Validation(_))));
    }
}

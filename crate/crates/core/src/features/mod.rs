//! Feature datasets, single-class selection, splitting, and the on-disk
//! feature and checkpoint formats.

mod afv;
mod checkpoint;
mod dataset;

pub use afv::{
    decode_features, encode_features, load_features, read_features_header, save_features, AfvHeader,
    AFV_MAGIC, AFV_VERSION,
};
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, read_checkpoint_header, save_checkpoint,
    Architecture, Checkpoint, CheckpointHeader, LayerSpec, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use dataset::{
    l2_normalize, select_subset, split, AttributionSource, ClassSelector, FeatureDataset, FeatureRecord,
    Label,
};

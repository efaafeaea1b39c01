//! Deterministic dense linear algebra, small MLPs, losses and Adam.
//!
//! Everything here computes in `f64`. Nothing allocates threads, so results
//! are bit-reproducible for identical inputs on a given machine.

mod adam;
mod loss;
mod matrix;
mod mlp;
mod rng;

pub use adam::{AdamConfig, AdamState};
pub use loss::{bce_loss, l1_loss, sigmoid, BCE_EPS};
pub use matrix::Matrix;
pub use mlp::{Activation, ForwardTrace, Layer, LayerGrad, MlpGrads, MlpParams};
pub use rng::{hash_words, mix64, SeededRng};

//! Single-class attribution-space detection of generated images.
//!
//! An encoder–decoder (the attribution module) is fit to frozen image
//! features of one class only. The absolute reconstruction residual of any
//! feature vector, its *attribution deviation*, is small for that class and
//! large for everything off its manifold. A linear probe trained on the
//! deviations then separates real from generated images.
//!
//! ```
//! use attribution_space::detector::{evaluate, train, TrainConfig};
//! use attribution_space::synth::{generate, SynthSpec};
//!
//! # fn main() -> attribution_space::Result<()> {
//! let spec = SynthSpec { dim: 32, latent_dim: 4, samples_per_class: 200, ..SynthSpec::reference() };
//! let data = generate(&spec)?;
//! let config = TrainConfig { hidden_dim: 64, rounds: 2, ..TrainConfig::default() };
//! let (model, log) = train(&data, &config)?;
//! let report = evaluate(&model, &data)?;
//! assert_eq!(report.metrics.n_real, 200);
//! assert_eq!(log.epochs.len(), 20);
//! # Ok(())
//! # }
//! ```
//!
//! Module map:
//!
//! - [`numeric`]: matrices, MLP forward/backward, losses, Adam
//! - [`features`]: datasets, the `AFV1` feature format, `ACMCKPT1` checkpoints
//! - [`acm`]: the attribution module and its training epoch
//! - [`detector`]: the full detector, alternating trainer, evaluation
//! - [`metrics`]: AP / accuracy / F1 and Fisher-ratio separability
//! - [`synth`]: synthetic two-manifold benchmark data with exact distances
//!
//! The guide under `book/` walks through each piece; its code listings are
//! compiled as doctests of this crate.

pub mod acm;
pub mod batching;
pub mod detector;
pub mod error;
pub mod features;
pub mod metrics;
pub mod numeric;
pub mod synth;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/numeric-core.md")]
    mod numeric_core {}
    #[doc = include_str!("../../../book/src/attribution-space.md")]
    mod attribution_space {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/synthetic-manifolds.md")]
    mod synthetic_manifolds {}
    #[doc = include_str!("../../../book/src/file-formats.md")]
    mod file_formats {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}

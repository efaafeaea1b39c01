//! Trains a detector on the reference synthetic instance and prints the
//! held-out evaluation report.
//!
//! ```text
//! cargo run --release --example synthetic_benchmark -- [real|gen[:tag]] [fraction]
//! ```

use attribution_space::detector::{evaluate, train, Phase, TrainConfig};
use attribution_space::features::{split, AttributionSource};
use attribution_space::synth::{generate, SynthSpec};

fn main() -> attribution_space::Result<()> {
    let mut args = std::env::args().skip(1);
    let source: AttributionSource = args.next().as_deref().unwrap_or("real").parse()?;
    let fraction: f64 = match args.next() {
        Some(f) => f
            .parse()
            .map_err(|_| attribution_space::Error::Argument(format!("bad fraction {f:?}")))?,
        None => 1.0,
    };

    let data = generate(&SynthSpec::reference())?;
    let (pool, held_out) = split(&data, 0.5, 7)?;
    let (train_set, _) = split(&pool, fraction, 7)?;
    let config = TrainConfig {
        source,
        seed: 7,
        rounds: 100,
        cls_epochs_per_round: 50,
        ..TrainConfig::default()
    };
    let (model, log) = train(&train_set, &config)?;
    let acm = log.losses(Phase::Acm);
    eprintln!(
        "{} training records; attribution loss {:.3} -> {:.3}",
        train_set.len(),
        acm[0],
        acm[acm.len() - 1]
    );
    print!("{}", evaluate(&model, &held_out)?.to_json());
    Ok(())
}

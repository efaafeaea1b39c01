mod config;
mod sweep;

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use attribution_space::detector::{evaluate, train, Phase, TrainConfig};
use attribution_space::features::{
    load_checkpoint, load_features, read_checkpoint_header, read_features_header, save_checkpoint, save_features,
    split, AttributionSource, Checkpoint, Label, AFV_MAGIC, CHECKPOINT_MAGIC,
};
use attribution_space::synth::generate;
use attribution_space::{Error, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use config::{check_input, check_output, required, sibling, with_path, RunConfig};

#[derive(Parser)]
#[command(name = "attrib-space", version, about = "Attribution-space detection of generated images")]
struct Cli {
    /// Log progress to standard error (-vv for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic two-manifold feature file.
    #[command(allow_negative_numbers = true)]
    Synth(SynthArgs),
    /// Train a detector and write a checkpoint.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a feature file.
    Eval(EvalArgs),
    /// Train and evaluate across training fractions and seeds.
    Sweep(SweepArgs),
    /// Print the header of a feature file or checkpoint as JSON.
    Inspect { path: PathBuf },
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    latent: Option<usize>,
    #[arg(long)]
    sep: Option<f64>,
    #[arg(long)]
    noise: Option<f64>,
    /// Samples per class.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Warp latents through tanh.
    #[arg(long)]
    nonlinear: bool,
    /// Use one embedding for both classes.
    #[arg(long)]
    shared: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Hyperparameter flags shared by `train` and `sweep`.
#[derive(Args)]
struct TrainFlags {
    /// Class the attribution module is fit on: real|gen[:tag].
    #[arg(long)]
    source: Option<AttributionSource>,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    acm_epochs: Option<usize>,
    #[arg(long)]
    cls_epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    bottleneck: Option<usize>,
    /// L2-normalize feature vectors before use.
    #[arg(long)]
    normalize: bool,
}

impl TrainFlags {
    fn apply(&self, mut c: TrainConfig) -> TrainConfig {
        if let Some(s) = &self.source {
            c.source = s.clone();
        }
        c.rounds = self.rounds.unwrap_or(c.rounds);
        c.acm_epochs_per_round = self.acm_epochs.unwrap_or(c.acm_epochs_per_round);
        c.cls_epochs_per_round = self.cls_epochs.unwrap_or(c.cls_epochs_per_round);
        c.learning_rate = self.lr.unwrap_or(c.learning_rate);
        c.batch_size = self.batch_size.unwrap_or(c.batch_size);
        c.hidden_dim = self.hidden.unwrap_or(c.hidden_dim);
        c.bottleneck_dim = self.bottleneck.or(c.bottleneck_dim);
        c.normalize |= self.normalize;
        c
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON-lines epoch log; defaults to the checkpoint path plus `.log.jsonl`.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Train on a seeded split holding this fraction of the records.
    #[arg(long)]
    fraction: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    flags: TrainFlags,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Also write the report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Comma-separated training fractions in (0, 1].
    #[arg(long, value_delimiter = ',')]
    fractions: Option<Vec<f64>>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Share of the data held out for evaluation.
    #[arg(long)]
    holdout: Option<f64>,
    #[arg(long)]
    split_seed: Option<u64>,
    /// Write the JSON report here.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    flags: TrainFlags,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Inspect { path } => cmd_inspect(&path),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Argument(_) => 2,
        Error::Io(_) => 4,
        _ => 3,
    }
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).map_err(|e| with_path(path, e))
}

fn to_json(value: &impl Serialize) -> String {
    serde_json::to_string_pretty(value).expect("plain data") + "\n"
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let cfg = RunConfig::load(a.config.as_deref())?;
    let out = required(a.out, cfg.out, "out")?;
    check_output(&out)?;
    let mut spec = cfg.synth;
    spec.dim = a.dim.unwrap_or(spec.dim);
    spec.latent_dim = a.latent.unwrap_or(spec.latent_dim);
    spec.separation = a.sep.unwrap_or(spec.separation);
    spec.noise_sigma = a.noise.unwrap_or(spec.noise_sigma);
    spec.samples_per_class = a.n.unwrap_or(spec.samples_per_class);
    spec.seed = a.seed.unwrap_or(spec.seed);
    spec.nonlinear |= a.nonlinear;
    spec.shared_embedding |= a.shared;
    spec.validate()?;

    let data = generate(&spec)?;
    save_features(&data, &out).map_err(|e| match e {
        Error::Io(io) => with_path(&out, io),
        other => other,
    })?;
    let sidecar = sibling(&out, ".spec.json");
    write_file(&sidecar, to_json(&spec))?;
    println!(
        "wrote {} records ({} real, {} generated, dim {}) to {}",
        data.len(),
        data.count(Label::Real),
        data.count(Label::Generated),
        data.dim(),
        out.display()
    );
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let cfg = RunConfig::load(a.config.as_deref())?;
    let data_path = required(a.data, cfg.data, "data")?;
    let out = required(a.out, cfg.out, "out")?;
    let log_path = a.log.or(cfg.log).unwrap_or_else(|| sibling(&out, ".log.jsonl"));
    check_input(&data_path)?;
    check_output(&out)?;
    check_output(&log_path)?;
    let mut config = a.flags.apply(cfg.train);
    config.seed = a.seed.unwrap_or(config.seed);
    config.validate()?;
    let fraction = a.fraction.or(cfg.fraction).unwrap_or(1.0);
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Argument(format!("--fraction must lie in (0, 1], got {fraction}")));
    }

    let data = load_features(&data_path)?;
    let data = if fraction < 1.0 {
        split(&data, fraction, config.seed)?.0
    } else {
        data
    };
    log::info!("training on {} records with source {}", data.len(), config.source);
    let (model, log) = train(&data, &config)?;
    write_file(&log_path, log.to_json_lines())?;
    save_checkpoint(&Checkpoint { model, config: config.clone() }, &out)?;

    let last = |phase| log.losses(phase).last().copied().unwrap_or(f64::NAN);
    println!(
        "trained on {} records, source {}, {} rounds; final attribution loss {:.6}, classifier loss {:.6}",
        data.len(),
        config.source,
        config.rounds,
        last(Phase::Acm),
        last(Phase::Classifier)
    );
    println!("checkpoint {}, log {}", out.display(), log_path.display());
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let cfg = RunConfig::load(a.config.as_deref())?;
    let ckpt_path = required(a.checkpoint, cfg.checkpoint, "checkpoint")?;
    let data_path = required(a.data, cfg.data, "data")?;
    check_input(&ckpt_path)?;
    check_input(&data_path)?;
    let out = a.out.or(cfg.out);
    if let Some(o) = &out {
        check_output(o)?;
    }
    let ckpt = load_checkpoint(&ckpt_path)?;
    let data = load_features(&data_path)?;
    let json = evaluate(&ckpt.model, &data)?.to_json();
    if let Some(o) = &out {
        write_file(o, &json)?;
    }
    print!("{json}");
    Ok(())
}

fn cmd_sweep(a: SweepArgs) -> Result<()> {
    let cfg = RunConfig::load(a.config.as_deref())?;
    let data_path = required(a.data, cfg.data, "data")?;
    check_input(&data_path)?;
    let out = a.out.or(cfg.out);
    if let Some(o) = &out {
        check_output(o)?;
    }
    let fractions = a
        .fractions
        .or(cfg.fractions)
        .ok_or_else(|| Error::Argument("--fractions is required".into()))?;
    let seeds = a.seeds.or(cfg.seeds).unwrap_or_else(|| vec![0]);
    let holdout = a.holdout.or(cfg.holdout).unwrap_or(0.5);
    if !(holdout > 0.0 && holdout < 1.0) {
        return Err(Error::Argument(format!("--holdout must lie in (0, 1), got {holdout}")));
    }
    let split_seed = a.split_seed.or(cfg.split_seed).unwrap_or(0);
    let config = a.flags.apply(cfg.train);
    let threads = sweep::thread_cap()?;

    let data = load_features(&data_path)?;
    let (pool, held_out) = split(&data, 1.0 - holdout, split_seed)?;
    if held_out.is_empty() {
        return Err(Error::Validation("held-out split is empty; use more data or a larger --holdout".into()));
    }
    let plan = sweep::SweepPlan {
        pool: &pool,
        held_out: &held_out,
        fractions: &fractions,
        seeds: &seeds,
        config: &config,
    };
    let report = sweep::run(&plan, threads)?;
    if let Some(o) = &out {
        write_file(o, to_json(&report))?;
    }
    print!("{}", sweep::table(&report));
    Ok(())
}

fn cmd_inspect(path: &Path) -> Result<()> {
    let mut magic = Vec::with_capacity(8);
    fs::File::open(path)
        .and_then(|f| f.take(8).read_to_end(&mut magic))
        .map_err(|e| with_path(path, e))?;
    if magic.starts_with(CHECKPOINT_MAGIC) {
        let header = read_checkpoint_header(path)?;
        print!("{}", to_json(&serde_json::json!({ "format": "ACMCKPT1", "header": header })));
    } else if magic.starts_with(AFV_MAGIC) {
        let header = read_features_header(path)?;
        print!("{}", to_json(&serde_json::json!({ "format": "AFV1", "header": header })));
    } else {
        return Err(Error::Format(format!("{} is neither an AFV1 file nor an ACMCKPT1 checkpoint", path.display())));
    }
    Ok(())
}

//! Limited-data sweeps: one detector per (fraction, seed), all evaluated on
//! the same held-out split.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use attribution_space::detector::{evaluate, train, TrainConfig};
use attribution_space::features::{split, FeatureDataset};
use attribution_space::metrics::MetricsReport;
use attribution_space::{Error, Result};
use serde::Serialize;

pub const THREADS_ENV: &str = "ATTRIB_SPACE_THREADS";

#[derive(Debug, Clone, Serialize)]
pub struct SweepCell {
    pub fraction: f64,
    pub seed: u64,
    pub train_records: usize,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub held_out_records: usize,
    pub cells: Vec<SweepCell>,
}

pub struct SweepPlan<'a> {
    pub pool: &'a FeatureDataset,
    pub held_out: &'a FeatureDataset,
    pub fractions: &'a [f64],
    pub seeds: &'a [u64],
    pub config: &'a TrainConfig,
}

/// Worker count from the environment, defaulting to the available cores.
pub fn thread_cap() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(Error::Argument(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))),
        },
        Err(_) => Ok(thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

pub fn run(plan: &SweepPlan<'_>, threads: usize) -> Result<SweepReport> {
    if plan.fractions.is_empty() {
        return Err(Error::Argument("sweep needs at least one fraction".into()));
    }
    if plan.seeds.is_empty() {
        return Err(Error::Argument("sweep needs at least one seed".into()));
    }
    if let Some(f) = plan.fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
        return Err(Error::Argument(format!("sweep fraction {f} is outside (0, 1]")));
    }
    plan.config.validate()?;

    let cells: Vec<(f64, u64)> = plan
        .fractions
        .iter()
        .flat_map(|&f| plan.seeds.iter().map(move |&s| (f, s)))
        .collect();
    let results: Mutex<Vec<Option<Result<SweepCell>>>> = Mutex::new((0..cells.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    let workers = threads.clamp(1, cells.len());
    thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(fraction, seed)) = cells.get(i) else {
                    break;
                };
                let outcome = run_cell(plan, fraction, seed);
                results.lock().expect("no worker panics while holding the lock")[i] = Some(outcome);
            });
        }
    });
    let cells = results
        .into_inner()
        .expect("workers finished")
        .into_iter()
        .map(|r| r.expect("every cell ran"))
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepReport {
        held_out_records: plan.held_out.len(),
        cells,
    })
}

fn run_cell(plan: &SweepPlan<'_>, fraction: f64, seed: u64) -> Result<SweepCell> {
    let (subset, _) = split(plan.pool, fraction, seed)?;
    let config = TrainConfig {
        seed,
        ..plan.config.clone()
    };
    log::info!("sweep cell fraction {fraction} seed {seed}: {} records", subset.len());
    let (model, _) = train(&subset, &config)?;
    let report = evaluate(&model, plan.held_out)?;
    Ok(SweepCell {
        fraction,
        seed,
        train_records: subset.len(),
        metrics: report.metrics,
    })
}

/// Fixed-width text rendering of a sweep, one row per cell.
pub fn table(report: &SweepReport) -> String {
    let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"));
    let header = ["fraction", "seed", "train", "AP", "ACC", "real ACC", "fake ACC", "F1"];
    let rows: Vec<[String; 8]> = report
        .cells
        .iter()
        .map(|c| {
            [
                format!("{}", c.fraction),
                c.seed.to_string(),
                c.train_records.to_string(),
                opt(c.metrics.ap),
                format!("{:.4}", c.metrics.acc),
                opt(c.metrics.real_acc),
                opt(c.metrics.fake_acc),
                format!("{:.4}", c.metrics.f1),
            ]
        })
        .collect();
    let widths: Vec<usize> = (0..header.len())
        .map(|j| rows.iter().map(|r| r[j].len()).chain([header[j].len()]).max().unwrap_or(0))
        .collect();
    let line = |cells: Vec<&str>| -> String {
        cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:>w$}"))
            .collect::<Vec<_>>()
            .join("  ")
    };
    let mut out = line(header.to_vec());
    out.push('\n');
    for r in &rows {
        out.push_str(&line(r.iter().map(String::as_str).collect()));
        out.push('\n');
    }
    out
}

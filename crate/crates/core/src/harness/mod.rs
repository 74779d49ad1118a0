//! Experiment harness: configuration, the interaction protocol, metrics,
//! output files and parameter sweeps.

mod config;
mod metrics;
mod simulation;

use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use rayon::prelude::*;
use serde::Serialize;

pub use config::{
    ExperimentConfig, GeneratedReward, GeneratorSpec, InitKind, LearnerParams, MediatorConfig, PopulationGroup,
    Setup, UtilitySpec,
};
pub use metrics::{
    compute_summary, fit_slope, loglog_slope, QuartileAverages, RoundDiagnostics, RoundRecord, Slopes, Summary,
    SLOPE_POINTS,
};
pub use simulation::{
    build_mediator, build_population, mediator_settings, steering_bound, RegretTrace, RunOutput, Simulation,
};

use crate::error::{Error, Result};

/// Environment variable capping the worker-thread count.
pub const THREADS_ENV: &str = "MFGSTEER_THREADS";

/// Worker count from `MFGSTEER_THREADS` (unset or 0 means rayon's default).
pub fn thread_count() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => {
            let n: usize = v
                .trim()
                .parse()
                .map_err(|_| Error::config(THREADS_ENV, format!("expected a nonnegative integer, got {v:?}")))?;
            Ok((n > 0).then_some(n))
        }
    }
}

/// A thread pool honoring `MFGSTEER_THREADS`.
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_count()? {
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| Error::Numerical(format!("cannot build thread pool: {e}")))
}

/// Sizes rayon's global pool from `MFGSTEER_THREADS` (a no-op when unset or
/// when the global pool already exists).
pub fn configure_global_threads() -> Result<()> {
    if let Some(n) = thread_count()? {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Runs all T rounds of a configuration.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunOutput> {
    Simulation::new(config.clone())?.run()
}

/// Writes `rounds.csv` (fixed column order) to any writer.
pub fn write_rounds_csv<W: std::io::Write>(records: &[RoundRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `rounds.csv` and `summary.json` into `dir`, creating it if needed.
pub fn write_outputs(output: &RunOutput, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_rounds_csv(&output.records, fs::File::create(dir.join("rounds.csv"))?)?;
    let summary = serde_json::to_string_pretty(&output.summary)?;
    fs::write(dir.join("summary.json"), summary + "\n")?;
    Ok(())
}

/// Growth of the final cumulative metrics across a sweep over T.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepSlopes {
    #[serde(rename = "T")]
    pub rounds: Vec<usize>,
    #[serde(rename = "Delta_T")]
    pub delta_t: Vec<f64>,
    #[serde(rename = "C_T")]
    pub c_t: Vec<f64>,
    #[serde(rename = "adj_C_T")]
    pub adj_c_t: Vec<f64>,
    #[serde(rename = "K")]
    pub k: Vec<usize>,
    /// Slope of ln Δ_T against ln T across the sweep.
    #[serde(rename = "slope_Delta_T")]
    pub slope_delta_t: Option<f64>,
    #[serde(rename = "slope_C_T")]
    pub slope_c_t: Option<f64>,
    #[serde(rename = "slope_adj_C_T")]
    pub slope_adj_c_t: Option<f64>,
    /// Within-run prefix slopes, one per T.
    pub per_run: Vec<Slopes>,
}

fn across(rounds: &[usize], values: &[f64]) -> Option<f64> {
    if values.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return None;
    }
    let xs: Vec<f64> = rounds.iter().map(|&t| (t as f64).ln()).collect();
    let ys: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    fit_slope(&xs, &ys)
}

/// Runs the configuration once per horizon in `grid` (in parallel), writing
/// each run to `out_dir/T<value>/` and the cross-run slopes to
/// `out_dir/slopes.json`.
pub fn run_sweep(config: &ExperimentConfig, grid: &[usize], out_dir: &Path) -> Result<SweepSlopes> {
    if grid.is_empty() {
        return Err(Error::config("grid", "needs at least one value of T"));
    }
    let mut grid = grid.to_vec();
    grid.sort_unstable();
    grid.dedup();
    let pool = thread_pool()?;
    let outputs: Vec<(usize, Summary)> = pool.install(|| {
        grid.par_iter()
            .map(|&t| {
                let mut c = config.clone();
                c.rounds = t;
                let out = run_experiment(&c)?;
                let dir = run_dir(out_dir, t);
                write_outputs(&out, &dir)?;
                info!("sweep: T = {t} done ({})", dir.display());
                Ok((t, out.summary))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let rounds: Vec<usize> = outputs.iter().map(|(t, _)| *t).collect();
    let delta_t: Vec<f64> = outputs.iter().map(|(_, s)| s.delta_t).collect();
    let c_t: Vec<f64> = outputs.iter().map(|(_, s)| s.c_t).collect();
    let adj_c_t: Vec<f64> = outputs.iter().map(|(_, s)| s.adj_c_t).collect();
    let slopes = SweepSlopes {
        slope_delta_t: across(&rounds, &delta_t),
        slope_c_t: across(&rounds, &c_t),
        slope_adj_c_t: across(&rounds, &adj_c_t),
        k: outputs.iter().map(|(_, s)| s.k).collect(),
        per_run: outputs.iter().map(|(_, s)| s.slopes.clone()).collect(),
        rounds,
        delta_t,
        c_t,
        adj_c_t,
    };
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("slopes.json"), serde_json::to_string_pretty(&slopes)? + "\n")?;
    Ok(slopes)
}

/// Directory of one sweep run.
pub fn run_dir(out_dir: &Path, rounds: usize) -> PathBuf {
    out_dir.join(format!("T{rounds}"))
}

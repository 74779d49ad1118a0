//! `mfgsteer` command-line interface.
//!
//! Exit codes: 0 on success, 1 on invalid input or configuration, 2 on a
//! numerical failure (including failing property suites).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;

use mfgsteer::harness::{self, ExperimentConfig, Setup, UtilitySpec};
use mfgsteer::{verify, Error, Result};

#[derive(Debug, Parser)]
#[command(name = "mfgsteer", version, about = "Steering no-regret populations in finite-horizon mean-field games")]
struct Cli {
    /// Overrides the master seed of the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides the configuration's `output`).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Only print errors.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Runs one experiment and writes rounds.csv and summary.json.
    Run { config: PathBuf },
    /// Runs one experiment per value of T and writes slopes.json.
    Sweep {
        config: PathBuf,
        /// Horizon grid, e.g. `T=500,1000,2000,4000`.
        #[arg(long)]
        grid: String,
    },
    /// Executes the property suites.
    Verify,
    /// Prints the utility-maximizing density and policy of a game.
    Plan {
        /// A model document {S, A, H, mu1, P, reward_spec, r_max} or a full
        /// experiment configuration.
        model: PathBuf,
        /// Utility as JSON (inline or a file path); defaults to the
        /// configuration's utility or a seeded random linear utility.
        #[arg(long)]
        utility: Option<String>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = if cli.quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}

fn execute(cli: &Cli) -> Result<ExitCode> {
    harness::configure_global_threads()?;
    match &cli.command {
        Command::Run { config } => {
            let config = load_config(config, cli)?;
            let out_dir = output_dir(&config, cli);
            let output = harness::run_experiment(&config)?;
            harness::write_outputs(&output, &out_dir)?;
            info!("wrote {}", out_dir.display());
            if !cli.quiet {
                println!("{}", serde_json::to_string_pretty(&output.summary)?);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep { config, grid } => {
            let config = load_config(config, cli)?;
            let grid = parse_grid(grid)?;
            let out_dir = output_dir(&config, cli);
            let slopes = harness::run_sweep(&config, &grid, &out_dir)?;
            if !cli.quiet {
                println!("{}", serde_json::to_string_pretty(&slopes)?);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify => {
            let reports = verify::run_all(cli.seed.unwrap_or(verify::DEFAULT_SEED))?;
            let mut ok = true;
            for r in &reports {
                ok &= r.passed;
                if !cli.quiet || !r.passed {
                    println!("{r}");
                }
            }
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
        Command::Plan { model, utility } => {
            let text = std::fs::read_to_string(model)?;
            let config = plan_config(&text, utility.as_deref(), cli.seed)?;
            let setup = Setup::new(config)?;
            let opt = &setup.optimum;
            let d = setup.dims();
            let nest = |v: &[f64]| -> Vec<Vec<Vec<f64>>> {
                v.chunks(d.step_len())
                    .map(|step| step.chunks(d.actions).map(<[f64]>::to_vec).collect())
                    .collect()
            };
            let out = serde_json::json!({
                "optimal_utility": opt.value,
                "certificate": opt.certificate,
                "mu_star": nest(opt.density.values()),
                "pi_star": nest(opt.policy.probs()),
            });
            println!("{}", serde_json::to_string_pretty(&out)?);
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn load_config(path: &Path, cli: &Cli) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::from_path(path).map_err(|e| match e {
        Error::Io(io) => Error::config(path.display().to_string(), io.to_string()),
        other => other,
    })?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn output_dir(config: &ExperimentConfig, cli: &Cli) -> PathBuf {
    cli.out_dir
        .clone()
        .or_else(|| config.output.clone())
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn parse_grid(grid: &str) -> Result<Vec<usize>> {
    let values = grid
        .strip_prefix("T=")
        .ok_or_else(|| Error::config("--grid", "expected the form T=v1,v2,..."))?;
    values
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<usize>()
                .ok()
                .filter(|&t| t > 0)
                .ok_or_else(|| Error::config("--grid", format!("`{v}` is not a positive integer")))
        })
        .collect()
}

/// Builds a one-round configuration around a model document (or reads a full
/// configuration) so the planner sees the same resolution rules as `run`.
fn plan_config(text: &str, utility: Option<&str>, seed: Option<u64>) -> Result<ExperimentConfig> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    let utility_spec = match utility {
        Some(u) => {
            let json = if Path::new(u).is_file() {
                std::fs::read_to_string(u)?
            } else {
                u.to_string()
            };
            Some(serde_json::from_str::<UtilitySpec>(&json).map_err(|e| Error::config("--utility", e.to_string()))?)
        }
        None => None,
    };
    let mut config = if value.get("population").is_some() {
        ExperimentConfig::from_json_str(text)?
    } else {
        let wrapped = serde_json::json!({
            "model": value,
            "population": [{"count": 1, "kind": "ogd"}],
            "mediator": {"strategy": "known_model"},
            "utility": {"kind": "linear_random"},
            "T": 1,
        });
        ExperimentConfig::from_json_str(&wrapped.to_string())?
    };
    if let Some(u) = utility_spec {
        config.utility = u;
    }
    if let Some(s) = seed {
        config.seed = s;
    }
    config.validate()?;
    Ok(config)
}

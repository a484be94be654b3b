//! `hermite-lab`: batch front end for the Hermite-process laboratory.
//!
//! Every run writes one CSV data file and one JSON summary (with the full
//! reproducibility manifest) into the output directory. Exit codes: 0 pass,
//! 1 test failure, 2 config error, 3 numeric error.

mod commands;
mod config;
mod output;

use clap::Parser;
use commands::{dispatch, Run};
use config::{ExperimentConfig, RawConfig};
use hermite_core::HermiteError;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "hermite-lab", version, about = "Hermite process numerical laboratory")]
struct Cli {
    /// Subcommand: simulate, validate-cov, validate-ss, validate-si,
    /// malliavin-ss, gram-det, slnd, det-positivity, chaos-tests, oracle,
    /// refine
    subcommand: String,

    /// Flat key=value configuration file; defaults apply when omitted
    #[arg(long)]
    config: Option<PathBuf>,

    /// Output directory (overrides config `out_dir`)
    #[arg(long)]
    out: Option<PathBuf>,

    /// Worker threads; 0 = all cores. Must not affect outputs
    #[arg(long)]
    threads: Option<usize>,

    /// RNG seed (overrides config `seed`)
    #[arg(long)]
    seed: Option<u64>,
}

fn load_config(cli: &Cli) -> hermite_core::Result<ExperimentConfig> {
    let raw = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                HermiteError::Config(format!("cannot read {}: {e}", path.display()))
            })?;
            RawConfig::parse(&text)?
        }
        None => RawConfig::parse("")?,
    };
    let mut cfg = ExperimentConfig::from_raw(&raw)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    if let Some(threads) = cli.threads {
        cfg.threads = threads;
    }
    Ok(cfg)
}

fn try_main(cli: &Cli) -> hermite_core::Result<bool> {
    let cfg = load_config(cli)?;
    if cfg.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build_global()
            .map_err(|e| HermiteError::Resource(format!("thread pool: {e}")))?;
    }
    let out_dir = cfg.out_dir.clone();
    let run = Run { cfg: &cfg, out_dir: &out_dir };
    dispatch(&cli.subcommand, &run)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let start = std::time::Instant::now();
    let code = match try_main(&cli) {
        Ok(true) => {
            eprintln!("{}: pass", cli.subcommand);
            ExitCode::from(0)
        }
        Ok(false) => {
            eprintln!("{}: FAIL", cli.subcommand);
            ExitCode::from(1)
        }
        Err(e @ (HermiteError::Config(_) | HermiteError::Domain(_) | HermiteError::Shape(_))) => {
            eprintln!("{e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(3)
        }
    };
    // wall clock goes to stderr only: result files must be byte-identical
    // across re-runs of the same manifest
    eprintln!("wall_clock_seconds {:.3}", start.elapsed().as_secs_f64());
    code
}

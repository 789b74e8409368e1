//! `besovmap` command-line interface.
//!
//! Exit codes: 0 success, 1 invalid input or configuration, 2 experiment-level
//! failure (only with `--strict`).

mod commands;
mod inputs;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use besovmap::config::ExperimentConfig;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "besovmap",
    version,
    about = "MAP estimation and small-ball experiments under Besov priors"
)]
struct Cli {
    /// Experiment configuration (JSON). Built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Exit with status 2 when a solve fails to converge or a check fails.
    #[arg(long, global = true)]
    strict: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw coefficient vectors from the prior.
    SamplePrior {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        count: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute the MAP estimate for observed data.
    SolveMap {
        /// `{"y": [...], "n": k}` or `{"ys": [[...], ...]}`.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Include the objective value at every accepted iterate.
        #[arg(long)]
        trace: bool,
    },
    /// Small-ball verification experiments.
    #[command(subcommand)]
    Verify(Verify),
    /// Posterior consistency table for a known truth.
    Consistency {
        #[arg(long)]
        truth: PathBuf,
        /// Comma-separated, strictly increasing observation counts.
        #[arg(long)]
        schedule: String,
        #[arg(long)]
        replicates: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the resolved configuration, the first rates α_ℓ and the version.
    Info,
}

#[derive(Args)]
struct Sampling {
    /// Comma-separated radii; defaults to the config's `lab.eps_grid`.
    #[arg(long)]
    eps: Option<String>,
    /// Defaults to the config's `lab.n_samples`.
    #[arg(long)]
    samples: Option<u64>,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Verify {
    /// Ball-probability ratio `m(B_ε(z2))/m(B_ε(z1))` against its limit.
    OmRatio {
        #[arg(long)]
        z1: PathBuf,
        #[arg(long)]
        z2: PathBuf,
        /// Observed data; use the posterior instead of the prior.
        #[arg(long)]
        data: Option<PathBuf>,
        #[command(flatten)]
        sampling: Sampling,
    },
    /// Shifted-ball ratio against the Radon–Nikodym derivative.
    Rn {
        #[arg(long)]
        u: PathBuf,
        #[arg(long)]
        h: PathBuf,
        #[command(flatten)]
        sampling: Sampling,
    },
    /// Anderson inequality `λ(B_ε + x) ≤ λ(B_ε)` for a list of shifts.
    Anderson {
        #[arg(long)]
        eps: f64,
        /// JSON list of coefficient fields.
        #[arg(long)]
        shifts: PathBuf,
        #[arg(long)]
        samples: Option<u64>,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare `log R_h(u)` with the integral of the logarithmic derivative.
    Logderivative {
        #[arg(long)]
        u: PathBuf,
        #[arg(long)]
        h: PathBuf,
    },
}

/// Sizes the global rayon pool from `BESOVMAP_THREADS` (unset or 0 = automatic).
fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var("BESOVMAP_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .with_context(|| format!("BESOVMAP_THREADS must be a non-negative integer, got `{value}`"))?;
    if threads > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build_global()?;
    }
    Ok(())
}

fn load_config(path: Option<&PathBuf>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("invalid configuration {}", p.display())),
        None => Ok(ExperimentConfig::default()),
    }
}

fn run(cli: Cli) -> Result<bool> {
    configure_threads()?;
    let cfg = load_config(cli.config.as_ref())?;
    let ctx = commands::Context::new(cfg)?;
    match cli.command {
        Command::SamplePrior { seed, count, out } => ctx.sample_prior(seed, count, &out),
        Command::SolveMap { data, out, trace } => ctx.solve_map(&data, &out, trace),
        Command::Consistency {
            truth,
            schedule,
            replicates,
            seed,
            out,
        } => ctx.consistency(&truth, &schedule, replicates, seed, &out),
        Command::Info => ctx.info(),
        Command::Verify(v) => match v {
            Verify::OmRatio { z1, z2, data, sampling } => ctx.om_ratio(
                &z1,
                &z2,
                data.as_deref(),
                sampling.eps.as_deref(),
                sampling.samples,
                sampling.seed,
                &sampling.out,
            ),
            Verify::Rn { u, h, sampling } => ctx.rn(
                &u,
                &h,
                sampling.eps.as_deref(),
                sampling.samples,
                sampling.seed,
                &sampling.out,
            ),
            Verify::Anderson {
                eps,
                shifts,
                samples,
                seed,
                out,
            } => ctx.anderson(eps, &shifts, samples, seed, &out),
            Verify::Logderivative { u, h } => ctx.logderivative(&u, &h),
        },
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let strict = cli.strict;
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) if strict => ExitCode::from(2),
        Ok(false) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

//! `archetypal`: synthesize benchmark datasets, fit archetypes, score the
//! recovery, run noise sweeps, and probe identifiability on the hexagon
//! family. Settings merge from built-in defaults, an optional flat
//! `key = value` config file, then command-line flags; later layers win.
//!
//! Exit codes: 0 when all requested work completed, 2 for I/O or parse
//! failures, 1 for anything else.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use archetypal_core::Error;
use clap::{Args, Parser, Subcommand};

use config::KvConfig;

#[derive(Parser)]
#[command(name = "archetypal", version, about = "Archetypal analysis workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset (X.csv, X0.csv, W0.csv, H0.csv, meta.json)
    Synth(Shared),
    /// Fit archetypes to a CSV data matrix (H_hat.csv, W_hat.csv, report.json)
    Fit(Shared),
    /// Score estimated archetypes against a reference set (metrics.json)
    Eval(Shared),
    /// Sweep noise levels end to end and aggregate recovery error (curve.csv)
    Sweep(Shared),
    /// Estimate the identifiability constant over hexagon instances
    /// (alpha_curve.csv)
    Alpha(Shared),
}

/// Flags shared by every subcommand. Each maps to a config key of the same
/// name; a flag overrides the config file, which overrides defaults.
#[derive(Args)]
struct Shared {
    /// Flat key=value settings file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base RNG seed
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for output files (created if missing)
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// palm, sgd, altmin or altmin-inf
    #[arg(long)]
    solver: Option<String>,
    /// spa or spectral
    #[arg(long)]
    init: Option<String>,
    /// Penalty weight: a number, "inf", or "auto" (sweep only)
    #[arg(long)]
    lambda: Option<String>,
    /// Number of archetypes
    #[arg(long)]
    r: Option<usize>,
    /// Number of data rows
    #[arg(long)]
    n: Option<usize>,
    /// Ambient dimension
    #[arg(long)]
    d: Option<usize>,
    /// Noise standard deviation per coordinate
    #[arg(long)]
    sigma: Option<f64>,
    /// Input data matrix (fit)
    #[arg(long)]
    input: Option<PathBuf>,
    /// Reference archetype CSV (eval, or a fixed truth for synth/sweep)
    #[arg(long)]
    h0: Option<PathBuf>,
    /// Estimated archetype CSV (eval)
    #[arg(long)]
    h_hat: Option<PathBuf>,
    /// spectra, dense, separable or toy (synth); spectra or separable (sweep)
    #[arg(long)]
    generator: Option<String>,
    /// Comma-separated ascending noise levels (sweep)
    #[arg(long)]
    sigma_grid: Option<String>,
    /// Number of replicate seeds per noise level (sweep)
    #[arg(long)]
    replicates: Option<usize>,
    /// Explicit comma-separated replicate seeds (sweep)
    #[arg(long)]
    seeds: Option<String>,
    /// Comma-separated hexagon parameters in (0, 0.5] (alpha)
    #[arg(long)]
    grid: Option<String>,
    /// Search restarts per grid point (alpha)
    #[arg(long)]
    restarts: Option<usize>,
    /// Cap on total search evaluations per grid point (alpha)
    #[arg(long)]
    max_evals: Option<usize>,
    /// Iteration cap for the solver (fit, sweep)
    #[arg(long)]
    max_iter: Option<usize>,
    /// Extra key=value override, repeatable
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

impl Shared {
    fn into_config(self) -> archetypal_core::Result<KvConfig> {
        let mut cfg = KvConfig::new();
        if let Some(path) = &self.config {
            cfg.load_file(path)?;
        }
        cfg.set_opt("seed", &self.seed);
        cfg.set_opt("out_dir", &self.out_dir.map(|p| p.display().to_string()));
        cfg.set_opt("solver", &self.solver);
        cfg.set_opt("init", &self.init);
        cfg.set_opt("lambda", &self.lambda);
        cfg.set_opt("r", &self.r);
        cfg.set_opt("n", &self.n);
        cfg.set_opt("d", &self.d);
        cfg.set_opt("sigma", &self.sigma);
        cfg.set_opt("input", &self.input.map(|p| p.display().to_string()));
        cfg.set_opt("h0", &self.h0.map(|p| p.display().to_string()));
        cfg.set_opt("h_hat", &self.h_hat.map(|p| p.display().to_string()));
        cfg.set_opt("generator", &self.generator);
        cfg.set_opt("sigma_grid", &self.sigma_grid);
        cfg.set_opt("replicates", &self.replicates);
        cfg.set_opt("seeds", &self.seeds);
        cfg.set_opt("grid", &self.grid);
        cfg.set_opt("restarts", &self.restarts);
        cfg.set_opt("max_evals", &self.max_evals);
        cfg.set_opt("max_iter", &self.max_iter);
        for pair in &self.sets {
            cfg.set_pair(pair)?;
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> archetypal_core::Result<()> {
    match cli.command {
        Command::Synth(args) => commands::cmd_synth(&args.into_config()?),
        Command::Fit(args) => commands::cmd_fit(&args.into_config()?),
        Command::Eval(args) => commands::cmd_eval(&args.into_config()?),
        Command::Sweep(args) => commands::cmd_sweep(&args.into_config()?),
        Command::Alpha(args) => commands::cmd_alpha(&args.into_config()?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                Error::Io(_) | Error::Parse { .. } => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use andnmf_harness::experiment::{self, DEFAULT_DECAY_ALPHAS};
use andnmf_harness::{Experiment, ExperimentConfig, HarnessError, Preset, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

/// Non-negative matrix factorization experiments with AND and baselines.
#[derive(Debug, Parser)]
#[command(name = "andnmf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    /// JSON experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset preset (DIR, CTM, NEG, NOISE, BINARY, paper-scale); replaces
    /// the config's preset.
    #[arg(long)]
    preset: Option<String>,
    /// Output directory (default: the config's output_dir, else `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed; replaces the config's seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw A*, X, Y, noise and the warm start; write them with a manifest.
    Generate(ExperimentArgs),
    /// Run the configured solvers on a generated dataset.
    Run {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Solvers to run in parallel.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Correlation error of an estimate against a ground truth.
    Eval {
        estimate: PathBuf,
        truth: PathBuf,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Empirical GCC parameters, raw moments and decay profile of weights.
    Gcc {
        weights: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Thresholds for the decay profile.
        #[arg(long, value_delimiter = ',')]
        alphas: Option<Vec<f64>>,
    },
}

fn experiment(args: &ExperimentArgs) -> Result<(Experiment, PathBuf)> {
    let preset = args.preset.as_deref().map(str::parse::<Preset>).transpose()?;
    let mut cfg = match (&args.config, preset) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Some(p)) => ExperimentConfig::from_preset(p),
        (None, None) => {
            return Err(HarnessError::Validation("give --config or --preset".into()));
        }
    };
    if let Some(p) = preset {
        cfg.dataset.preset = p;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let ex = cfg.resolve()?;
    let out = experiment::output_dir(&ex, args.out.as_deref());
    Ok((ex, out))
}

fn emit(value: &impl Serialize, out: Option<&Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| HarnessError::io(path, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn execute(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Generate(args) => {
            let (ex, out) = experiment(&args)?;
            let manifest = experiment::generate(&ex, &out)?;
            eprintln!("wrote dataset to {} (config {})", out.display(), &manifest.config_hash[..12]);
            for v in &manifest.gcc.closed_form_violations {
                eprintln!("warning: closed-form GCC disagrees with the sample: {v}");
            }
            Ok(0)
        }
        Command::Run { exp, jobs } => {
            if jobs == 0 {
                return Err(HarnessError::Validation("--jobs must be >= 1".into()));
            }
            let (ex, out) = experiment(&exp)?;
            let output = experiment::run(&ex, &out, jobs)?;
            for s in &output.summary.solvers {
                let err = s.final_error.map(|e| format!("{e:.3e}")).unwrap_or_else(|| "-".into());
                eprintln!("{:<12} {:?} final error {err} in {:.2}s", s.label, s.status, s.wall_clock_seconds);
                if let Some(m) = &s.message {
                    eprintln!("  {m}");
                }
            }
            Ok(output.summary.exit_code())
        }
        Command::Eval { estimate, truth, out } => {
            emit(&experiment::eval(&estimate, &truth)?, out.as_deref())?;
            Ok(0)
        }
        Command::Gcc { weights, out, alphas } => {
            let alphas = alphas.unwrap_or_else(|| DEFAULT_DECAY_ALPHAS.to_vec());
            emit(&experiment::gcc(&weights, &alphas)?, out.as_deref())?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    // clap exits with 2 on usage errors; usage errors are validation errors here
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

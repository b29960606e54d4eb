//! Command implementations behind the `owninfer` binary.

pub mod commands;
pub mod config;
pub mod dataset;

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    /// 1 for bad input, 2 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "owninfer",
    version,
    about = "Ownership inference with conformal uncertainty and active questioning"
)]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Base seed; trial i uses seed + i.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset from a scenario spec.
    Gen {
        #[arg(long)]
        spec: Option<PathBuf>,
    },
    /// Fit the conformal thresholds on a labeled calibration environment.
    Calibrate {
        #[arg(long)]
        spec: Option<PathBuf>,
    },
    /// Run the questioning loop for every trial.
    Run {
        /// oracle | scripted:<file> | console
        #[arg(long)]
        respondent: Option<String>,
        /// heuristic | llm | replay:<file>
        #[arg(long)]
        scorer: Option<String>,
        /// full | no-background | no-history | no-neighbors | no-similars | no-context | no-questioning
        #[arg(long)]
        ablation: Option<String>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        q_max: Option<usize>,
        /// Use this dataset for every trial instead of generating one.
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
    /// Evaluate predictions against ground truth.
    Eval {
        /// Single predictions file; otherwise every run under --out is evaluated.
        #[arg(long, requires = "truth")]
        predictions: Option<PathBuf>,
        #[arg(long, requires = "predictions")]
        truth: Option<PathBuf>,
    },
    /// Re-execute a recorded trace and check that it reproduces.
    Replay {
        #[arg(long)]
        trace: PathBuf,
        /// Chat transcript; defaults to transcript.json next to the trace.
        #[arg(long)]
        transcript: Option<PathBuf>,
    },
}

/// Executes one parsed command line, writing progress to `out`.
pub fn execute(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(p) => config::RunConfig::load(p)?,
        None => config::RunConfig::default(),
    };
    let out_flag = cli.out.clone();
    if let Some(o) = cli.out {
        cfg.out = o;
    }
    if let Some(s) = cli.seed {
        cfg.seed = Some(s);
    }
    match cli.command {
        Command::Gen { spec } => commands::gen(&cfg, spec, out),
        Command::Calibrate { spec } => {
            if spec.is_some() {
                cfg.spec = spec;
            }
            commands::calibrate(&cfg, out).map(|_| ())
        }
        Command::Run {
            respondent,
            scorer,
            ablation,
            trials,
            q_max,
            data_dir,
        } => {
            if let Some(r) = respondent {
                cfg.respondent = r;
            }
            if let Some(s) = scorer {
                cfg.scorer = s;
            }
            if let Some(a) = ablation {
                cfg.ablation = a;
            }
            if let Some(t) = trials {
                cfg.trials = t;
            }
            if q_max.is_some() {
                cfg.q_max = q_max;
            }
            if data_dir.is_some() {
                cfg.data_dir = data_dir;
            }
            commands::run(&cfg, out)
        }
        Command::Eval { predictions, truth } => match (predictions, truth) {
            (Some(p), Some(t)) => commands::eval_single(&cfg, &p, &t, out),
            _ => commands::eval_runs(&cfg, out),
        },
        Command::Replay { trace, transcript } => {
            commands::replay(&trace, transcript.as_deref(), out_flag.as_deref(), out)
        }
    }
}

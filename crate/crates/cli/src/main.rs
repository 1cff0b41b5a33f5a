//! `ecoc-agg`: train, apply and evaluate aggregation weights for multiclass
//! classifiers built from binary ones.
//!
//! Exit codes: 0 success, 1 input error, 2 solver did not converge (the model
//! is still written, with `converged: false`).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ecoc_agg::experiment::Encoding;
use ecoc_agg::{Exec, LossKind};

#[derive(Debug, Parser)]
#[command(name = "ecoc-agg", version, about = "Convex aggregation of binary classifiers for multiclass problems")]
pub struct Cli {
    /// Run every loop on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a code matrix as JSON.
    Codematrix(CodematrixArgs),
    /// Learn aggregation weights from features or from a precomputed Q matrix.
    Train(TrainArgs),
    /// Write class posteriors and predicted labels.
    Predict(PredictArgs),
    /// Accuracy, Brier score and confusion matrix, optionally with the
    /// generalization bound.
    Evaluate(EvaluateArgs),
    /// Synthetic experiments.
    #[command(subcommand)]
    Synth(SynthCommand),
    /// Train once per regularization value and report weights and accuracy.
    Regpath(RegpathArgs),
}

#[derive(Debug, Args)]
pub struct CodematrixArgs {
    /// aps (all-pairs), ova or ecoc.
    #[arg(long)]
    scheme: Encoding,
    /// Number of classes K.
    #[arg(long)]
    classes: usize,
    /// Seed for the sparse random code (K >= 8).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Either a feature file or a Q matrix with labels.
#[derive(Debug, Args)]
pub struct InputArgs {
    /// Feature CSV `x1,...,xD,label` (labels 1..K).
    #[arg(long, conflicts_with_all = ["q", "labels"])]
    data: Option<PathBuf>,
    /// Q matrix CSV: one row per example, one probability per code row.
    #[arg(long, requires = "labels")]
    q: Option<PathBuf>,
    /// Label CSV, one label in 1..K per line.
    #[arg(long, requires = "q")]
    labels: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    /// Interior-point iteration cap.
    #[arg(long, default_value_t = 200)]
    max_iters: usize,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Code matrix JSON.
    #[arg(long)]
    code: PathBuf,
    /// xent or exp.
    #[arg(long, default_value = "xent")]
    loss: LossKind,
    #[arg(long, default_value_t = 1e-4)]
    lambda: f64,
    /// Regularization of the built-in logistic base classifiers.
    #[arg(long, default_value_t = 1.0)]
    base_reg: f64,
    #[command(flatten)]
    solver: SolverArgs,
    /// Model JSON to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// Feature CSV `x1,...,xD,label`; needs a model trained from features.
    #[arg(long, conflicts_with = "q")]
    data: Option<PathBuf>,
    #[arg(long)]
    q: Option<PathBuf>,
    /// Output CSV `predicted_label,p_1..p_K`; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    input: InputArgs,
    /// Append the generalization bound. B defaults to ‖w‖.
    #[arg(long, value_name = "B")]
    bound: Option<Option<f64>>,
    /// Confidence level of the bound.
    #[arg(long, default_value_t = 0.05)]
    epsilon: f64,
    /// Metrics JSON; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum SynthCommand {
    /// Three classes, all-pairs code, one broken pairwise classifier.
    ThreeClass(ThreeClassArgs),
    /// K Gaussian blobs in the plane, loss-based decoding vs learned weights.
    Gauss(GaussArgs),
}

#[derive(Debug, Args)]
pub struct ThreeClassArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-4)]
    lambda: f64,
    /// Write `q.csv`, `labels.csv` and `code.json` here.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GaussArgs {
    #[arg(long)]
    classes: usize,
    #[arg(long, default_value = "aps")]
    encoding: Encoding,
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    /// Base seed; repeat r uses seed + r.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-4)]
    lambda: f64,
    #[arg(long, default_value_t = 1.0)]
    base_reg: f64,
    /// Write `train.csv`, `test.csv` and `code.json` of the first repeat here.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RegpathArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    code: PathBuf,
    #[arg(long, default_value = "xent")]
    loss: LossKind,
    /// Comma-separated λ values; defaults to 1e-6,1e-5,...,1e1.
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
    #[arg(long, default_value_t = 1.0)]
    base_reg: f64,
    #[command(flatten)]
    solver: SolverArgs,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let exec = if cli.sequential { Exec::Sequential } else { Exec::Parallel };
    match commands::run(cli.command, exec) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

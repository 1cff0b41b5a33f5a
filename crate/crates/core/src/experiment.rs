//! End-to-end experiment drivers shared by the CLI, the acceptance tests and
//! the benches.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::base::train_binary_problems_with;
use crate::decode::{metrics, posteriors_with, uniform_weights, EvalMetrics};
use crate::discrepancy::{compute_phi_with, LossKind, ProbMatrix};
use crate::encoding::{gen_allpairs, gen_ecoc_with, gen_ova, CodeMatrix};
use crate::model::AggregationModel;
use crate::pdip::{solve, SolverOptions};
use crate::synthgen::{gen_gauss, gen_three_class, SynthConfig};
use crate::{Error, Result};

pub const DEFAULT_LAMBDA: f64 = 1e-4;
pub const DEFAULT_BASE_REG: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Encoding {
    Aps,
    Ova,
    Ecoc,
}

impl Encoding {
    /// Code matrix for `k` classes. `seed` only matters for sparse ECOC.
    pub fn code(self, exec: crate::Exec, k: usize, seed: u64) -> Result<CodeMatrix> {
        match self {
            Encoding::Aps => gen_allpairs(k),
            Encoding::Ova => gen_ova(k),
            Encoding::Ecoc => gen_ecoc_with(exec, k, seed),
        }
    }
}

impl fmt::Display for Encoding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Encoding::Aps => "aps",
            Encoding::Ova => "ova",
            Encoding::Ecoc => "ecoc",
        })
    }
}

impl FromStr for Encoding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "aps" | "allpairs" => Ok(Encoding::Aps),
            "ova" => Ok(Encoding::Ova),
            "ecoc" => Ok(Encoding::Ecoc),
            other => Err(Error::InvalidConfig(format!("unknown encoding '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThreeClassReport {
    pub seed: u64,
    pub loss_based: EvalMetrics,
    pub convex: EvalMetrics,
    pub weights: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Training accuracy of loss-based decoding and of learned weights on the
/// broken-classifier fixture.
pub fn run_three_class(seed: u64, lambda: f64, opts: &SolverOptions) -> Result<ThreeClassReport> {
    let f = gen_three_class(seed);
    let loss_based = evaluate(&f.code, &f.q, &f.labels, &uniform_weights(3), LossKind::Exponential, opts)?;
    let (model, report) = AggregationModel::fit(&f.code, &f.q, &f.labels, LossKind::CrossEntropy, lambda, opts)?;
    let convex = evaluate(&f.code, &f.q, &f.labels, &model.weights, model.loss, opts)?;
    Ok(ThreeClassReport {
        seed,
        loss_based,
        convex,
        weights: model.weights,
        iterations: report.iterations,
        converged: report.converged,
    })
}

fn evaluate(
    code: &CodeMatrix,
    q: &ProbMatrix,
    labels: &[usize],
    w: &[f64],
    loss: LossKind,
    opts: &SolverOptions,
) -> Result<EvalMetrics> {
    let post = posteriors_with(opts.exec, w, code, q, loss)?;
    metrics(labels, &post)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussRepeat {
    pub seed: u64,
    pub loss_based: f64,
    pub convex: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussReport {
    #[serde(rename = "K")]
    pub k: usize,
    pub encoding: Encoding,
    pub loss_based_mean: f64,
    pub loss_based_std: f64,
    pub convex_mean: f64,
    pub convex_std: f64,
    pub repeats: Vec<GaussRepeat>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussSettings {
    pub k: usize,
    pub encoding: Encoding,
    pub repeats: usize,
    pub base_seed: u64,
    pub lambda: f64,
    pub base_reg: f64,
}

impl GaussSettings {
    pub fn new(k: usize, encoding: Encoding, repeats: usize, base_seed: u64) -> Self {
        GaussSettings { k, encoding, repeats, base_seed, lambda: DEFAULT_LAMBDA, base_reg: DEFAULT_BASE_REG }
    }
}

/// Seed of repeat `r`.
pub fn repeat_seed(base_seed: u64, r: usize) -> u64 {
    base_seed.wrapping_add(r as u64)
}

/// One Gaussian run: train base classifiers and weights on the training split,
/// report test accuracy of loss-based decoding and of the learned weights.
pub fn run_gauss_once(s: &GaussSettings, seed: u64, opts: &SolverOptions) -> Result<GaussRepeat> {
    let (train, test) = gen_gauss(&SynthConfig::new(seed, s.k))?;
    let code = s.encoding.code(opts.exec, s.k, seed)?;
    let (models, q_train) = train_binary_problems_with(opts.exec, &train, &code, s.base_reg)?;
    let q_test = crate::base::score(opts.exec, &models, &test)?;
    let m = code.rows();
    let loss_based = evaluate(&code, &q_test, test.labels(), &uniform_weights(m), LossKind::Exponential, opts)?;
    let phi = compute_phi_with(opts.exec, &code, &q_train, train.labels(), LossKind::CrossEntropy)?;
    let report = solve(&phi, s.lambda, opts)?;
    let convex = evaluate(&code, &q_test, test.labels(), &report.w_star, LossKind::CrossEntropy, opts)?;
    Ok(GaussRepeat {
        seed,
        loss_based: loss_based.accuracy,
        convex: convex.accuracy,
        iterations: report.iterations,
        converged: report.converged,
    })
}

/// Repeats are independent and run in parallel; results are ordered by repeat.
pub fn run_gauss(s: &GaussSettings, opts: &SolverOptions) -> Result<GaussReport> {
    if s.repeats == 0 {
        return Err(Error::InvalidConfig("repeats must be positive".into()));
    }
    let repeats = opts
        .exec
        .map_range(s.repeats, |r| run_gauss_once(s, repeat_seed(s.base_seed, r), opts))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let (loss_based_mean, loss_based_std) = mean_std(repeats.iter().map(|r| r.loss_based));
    let (convex_mean, convex_std) = mean_std(repeats.iter().map(|r| r.convex));
    Ok(GaussReport { k: s.k, encoding: s.encoding, loss_based_mean, loss_based_std, convex_mean, convex_std, repeats })
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_std(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let v: Vec<f64> = values.collect();
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegPathRow {
    pub lambda: f64,
    pub weights: Vec<f64>,
    pub train_accuracy: f64,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// `10^-6, 10^-5, ..., 10^1`.
pub fn default_lambda_grid() -> Vec<f64> {
    (-6..=1).map(|p| 10f64.powi(p)).collect()
}

/// Solves from the uniform start for every λ. A failed solve is recorded in
/// its row and the sweep continues.
pub fn run_regpath(
    code: &CodeMatrix,
    q: &ProbMatrix,
    labels: &[usize],
    loss: LossKind,
    grid: &[f64],
    opts: &SolverOptions,
) -> Result<Vec<RegPathRow>> {
    let phi = compute_phi_with(opts.exec, code, q, labels, loss)?;
    let rows = grid
        .iter()
        .map(|&lambda| {
            let outcome = solve(&phi, lambda, opts).and_then(|report| {
                let m = evaluate(code, q, labels, &report.w_star, loss, opts)?;
                Ok((report, m.accuracy))
            });
            match outcome {
                Ok((report, accuracy)) => RegPathRow {
                    lambda,
                    weights: report.w_star,
                    train_accuracy: accuracy,
                    converged: report.converged,
                    error: None,
                },
                Err(e) => RegPathRow {
                    lambda,
                    weights: vec![f64::NAN; code.rows()],
                    train_accuracy: f64::NAN,
                    converged: false,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    Ok(rows)
}

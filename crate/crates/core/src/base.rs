//! Produces the probability matrix Q: either by fitting one ℓ2-regularized
//! logistic regression per code-matrix row, or by reading externally computed
//! probabilities.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::discrepancy::ProbMatrix;
use crate::encoding::{CodeEntry, CodeMatrix};
use crate::exec::Exec;
use crate::{Error, Result};

/// Stopping tolerance on the gradient norm of the logistic objective.
pub const GRAD_TOL: f64 = 1e-8;
const MAX_NEWTON_ITERS: usize = 100;

/// Feature matrix (row-major, N×D) with 0-based labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    dim: usize,
    labels: Vec<usize>,
    classes: usize,
}

impl Dataset {
    pub fn new(features: Vec<f64>, dim: usize, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if dim == 0 || features.len() != labels.len() * dim {
            return Err(Error::InvalidDataset(format!(
                "{} feature values do not form {} rows of dimension {dim}",
                features.len(),
                labels.len()
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset("non-finite feature value".into()));
        }
        if let Some(&label) = labels.iter().find(|&&y| y >= classes) {
            return Err(Error::InvalidLabel { label, classes });
        }
        Ok(Dataset { features, dim, labels, classes })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    /// Fails unless every class `0..K` occurs at least once.
    pub fn check_all_classes_present(&self) -> Result<()> {
        let mut seen = vec![false; self.classes];
        self.labels.iter().for_each(|&y| seen[y] = true);
        match seen.iter().position(|s| !s) {
            Some(k) => Err(Error::InvalidDataset(format!("class {} has no examples", k + 1))),
            None => Ok(()),
        }
    }
}

/// Logistic model `P(Pos | x) = σ(coefficients·x + intercept)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryModel {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub reg: f64,
}

impl BinaryModel {
    pub fn probability(&self, x: &[f64]) -> f64 {
        sigmoid(self.margin(x))
    }

    fn margin(&self, x: &[f64]) -> f64 {
        self.coefficients.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + self.intercept
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(t))` without overflow.
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// Fits `Σ_i log(1 + exp(-t_i θ·x̃_i)) + reg/2 ‖θ‖²` by damped Newton, where
/// `x̃ = (x, 1)` and the intercept is penalized like the coefficients.
pub fn fit_logistic(rows: &[&[f64]], targets: &[bool], reg: f64) -> BinaryModel {
    let d = rows.first().map_or(0, |r| r.len());
    let p = d + 1;
    let signs: Vec<f64> = targets.iter().map(|&t| if t { 1.0 } else { -1.0 }).collect();
    let augmented = |i: usize, a: usize| if a < d { rows[i][a] } else { 1.0 };
    let objective = |theta: &DVector<f64>| {
        let loss: f64 = (0..rows.len())
            .map(|i| {
                let m: f64 = (0..p).map(|a| theta[a] * augmented(i, a)).sum();
                softplus(-signs[i] * m)
            })
            .sum();
        loss + 0.5 * reg * theta.norm_squared()
    };

    let mut theta = DVector::<f64>::zeros(p);
    let mut value = objective(&theta);
    for _ in 0..MAX_NEWTON_ITERS {
        let mut grad = reg * &theta;
        let mut hess = DMatrix::<f64>::identity(p, p) * reg;
        for i in 0..rows.len() {
            let m: f64 = (0..p).map(|a| theta[a] * augmented(i, a)).sum();
            let s = sigmoid(-signs[i] * m);
            let curvature = s * (1.0 - s);
            for a in 0..p {
                let xa = augmented(i, a);
                grad[a] -= signs[i] * s * xa;
                for b in a..p {
                    hess[(a, b)] += curvature * xa * augmented(i, b);
                }
            }
        }
        if grad.norm() <= GRAD_TOL {
            break;
        }
        hess.fill_lower_triangle_with_upper_triangle();
        let Some(chol) = hess.cholesky() else { break };
        let direction = -chol.solve(&grad);
        let slope = grad.dot(&direction);
        let mut step = 1.0;
        let mut improved = false;
        while step > 1e-12 {
            let candidate = &theta + step * &direction;
            let v = objective(&candidate);
            if v <= value + 1e-4 * step * slope {
                theta = candidate;
                value = v;
                improved = true;
                break;
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    BinaryModel { coefficients: theta.as_slice()[..d].to_vec(), intercept: theta[d], reg }
}

/// Fits one logistic model per code-matrix row on the examples whose class is
/// not don't-care in that row, then scores every example with every model.
pub fn train_binary_problems(data: &Dataset, code: &CodeMatrix, reg: f64) -> Result<(Vec<BinaryModel>, ProbMatrix)> {
    train_binary_problems_with(Exec::default(), data, code, reg)
}

pub fn train_binary_problems_with(
    exec: Exec,
    data: &Dataset,
    code: &CodeMatrix,
    reg: f64,
) -> Result<(Vec<BinaryModel>, ProbMatrix)> {
    if !(reg > 0.0) || !reg.is_finite() {
        return Err(Error::InvalidConfig(format!("base regularization must be positive, got {reg}")));
    }
    if data.classes() != code.classes() {
        return Err(Error::DimensionMismatch { expected: code.classes(), found: data.classes() });
    }
    let models = exec
        .map_range(code.rows(), |j| {
            let row = code.row(j);
            let mut rows = Vec::new();
            let mut targets = Vec::new();
            for i in 0..data.len() {
                match row[data.labels()[i]] {
                    CodeEntry::Pos => targets.push(true),
                    CodeEntry::Neg => targets.push(false),
                    CodeEntry::DontCare => continue,
                }
                rows.push(data.row(i));
            }
            if !targets.contains(&true) || !targets.contains(&false) {
                return Err(Error::DegenerateBinaryProblem { row: j });
            }
            Ok(fit_logistic(&rows, &targets, reg))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let q = score(exec, &models, data)?;
    Ok((models, q))
}

/// Probability matrix of `data` under trained binary models.
pub fn score(exec: Exec, models: &[BinaryModel], data: &Dataset) -> Result<ProbMatrix> {
    if let Some(m) = models.iter().find(|m| m.coefficients.len() != data.dim()) {
        return Err(Error::DimensionMismatch { expected: data.dim(), found: m.coefficients.len() });
    }
    let rows = exec.map_range(data.len(), |i| models.iter().map(|m| m.probability(data.row(i))).collect::<Vec<_>>());
    ProbMatrix::new(data.len(), models.len(), rows.concat())
}

/// Reads a Q-matrix CSV (one row per example, M decimals, optional header) and
/// checks it against `code`.
pub fn ingest_q(path: &Path, code: &CodeMatrix) -> Result<ProbMatrix> {
    let q = crate::io::read_q(path)?;
    if q.classifiers() != code.rows() {
        return Err(Error::DimensionMismatch { expected: code.rows(), found: q.classifiers() });
    }
    Ok(q)
}

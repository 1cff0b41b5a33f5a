//! Per-classifier losses, the weighted discrepancy between a codeword and a
//! probability vector, and the discrepancy-difference features used by the
//! objective.

use serde::{Deserialize, Serialize};

use crate::encoding::{CodeEntry, CodeMatrix};
use crate::exec::Exec;
use crate::{Error, Result};

/// Probabilities are clipped to `[PROB_EPS, 1 - PROB_EPS]` before any log.
pub const PROB_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum LossKind {
    /// Binary cross-entropy; don't-care entries cost 0.
    #[default]
    #[serde(rename = "xent")]
    CrossEntropy,
    /// `exp(-c (q - 1/2))` with `c` in {1, -1, 0}; don't-care entries cost 1.
    #[serde(rename = "exp")]
    Exponential,
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "xent" | "cross-entropy" => Ok(LossKind::CrossEntropy),
            "exp" | "exponential" => Ok(LossKind::Exponential),
            other => Err(Error::InvalidConfig(format!("unknown loss '{other}'"))),
        }
    }
}

pub fn clip_probability(q: f64) -> f64 {
    q.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

/// N×M matrix of binary probability estimates, one row per example.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMatrix {
    examples: usize,
    classifiers: usize,
    values: Vec<f64>,
}

impl ProbMatrix {
    /// Row-major values; each must lie in `[0, 1]` and is clipped.
    pub fn new(examples: usize, classifiers: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != examples * classifiers {
            return Err(Error::Shape(format!(
                "{} values for a {examples}x{classifiers} probability matrix",
                values.len()
            )));
        }
        let values = values
            .into_iter()
            .map(|q| {
                if (0.0..=1.0).contains(&q) {
                    Ok(clip_probability(q))
                } else {
                    Err(Error::InvalidProbability(q))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ProbMatrix { examples, classifiers, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::Shape("ragged probability rows".into()));
        }
        ProbMatrix::new(rows.len(), m, rows.concat())
    }

    /// Number of examples N.
    pub fn examples(&self) -> usize {
        self.examples
    }

    /// Number of binary classifiers M.
    pub fn classifiers(&self) -> usize {
        self.classifiers
    }

    /// The probability vector q_i of example `i`.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.classifiers..(i + 1) * self.classifiers]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.classifiers + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Loss of probability `q` against code entry `entry`.
pub fn loss(entry: CodeEntry, q: f64, kind: LossKind) -> Result<f64> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidProbability(q));
    }
    Ok(loss_clipped(entry, clip_probability(q), kind))
}

#[inline]
pub(crate) fn loss_clipped(entry: CodeEntry, q: f64, kind: LossKind) -> f64 {
    match kind {
        LossKind::CrossEntropy => match entry {
            CodeEntry::Pos => -q.ln(),
            CodeEntry::Neg => -(1.0 - q).ln(),
            CodeEntry::DontCare => 0.0,
        },
        LossKind::Exponential => (-entry.sign() * (q - 0.5)).exp(),
    }
}

fn check_weights(w: &[f64]) -> Result<()> {
    match w.iter().position(|&x| !(x >= 0.0)) {
        Some(index) => Err(Error::InvalidWeights { index, value: w[index] }),
        None => Ok(()),
    }
}

/// Weighted discrepancy `Σ_j w_j loss(c_j, q_j)` between a codeword and a
/// probability vector.
pub fn rho(codeword: &[CodeEntry], q: &[f64], w: &[f64], kind: LossKind) -> Result<f64> {
    if codeword.len() != q.len() || q.len() != w.len() {
        return Err(Error::Shape(format!(
            "codeword {}, probabilities {}, weights {}",
            codeword.len(),
            q.len(),
            w.len()
        )));
    }
    check_weights(w)?;
    let mut total = 0.0;
    for ((&c, &qj), &wj) in codeword.iter().zip(q).zip(w) {
        total += wj * loss(c, qj, kind)?;
    }
    Ok(total)
}

/// Per-class losses of one example, laid out K×M (class-major).
pub(crate) fn class_losses(code: &CodeMatrix, q: &[f64], kind: LossKind) -> Vec<f64> {
    let (k, m) = (code.classes(), code.rows());
    let mut out = vec![0.0; k * m];
    for (j, &qj) in q.iter().enumerate() {
        for (c, &entry) in code.row(j).iter().enumerate() {
            out[c * m + j] = loss_clipped(entry, qj, kind);
        }
    }
    out
}

/// Discrepancy of every class codeword for one (already clipped) probability
/// vector. Weights are assumed validated.
pub(crate) fn rho_all(code: &CodeMatrix, q: &[f64], w: &[f64], kind: LossKind) -> Vec<f64> {
    let mut out = vec![0.0; code.classes()];
    for (j, (&qj, &wj)) in q.iter().zip(w).enumerate() {
        for (c, &entry) in code.row(j).iter().enumerate() {
            out[c] += wj * loss_clipped(entry, qj, kind);
        }
    }
    out
}

pub(crate) fn validate_weights(w: &[f64], m: usize) -> Result<()> {
    if w.len() != m {
        return Err(Error::DimensionMismatch { expected: m, found: w.len() });
    }
    check_weights(w)
}

/// Feature vector whose entry `l` is `loss(C[l][k], q_l) - loss(C[l][j], q_l)`;
/// its inner product with `w` is `rho(c_k) - rho(c_j)`.
pub fn phi_general(code: &CodeMatrix, q: &[f64], j: usize, k: usize, kind: LossKind) -> Result<Vec<f64>> {
    let classes = code.classes();
    for c in [j, k] {
        if c >= classes {
            return Err(Error::InvalidLabel { label: c, classes });
        }
    }
    if q.len() != code.rows() {
        return Err(Error::DimensionMismatch { expected: code.rows(), found: q.len() });
    }
    (0..code.rows())
        .map(|l| Ok(loss(code.entry(l, k), q[l], kind)? - loss(code.entry(l, j), q[l], kind)?))
        .collect()
}

/// Discrepancy differences relative to each example's true class, stored as
/// N blocks of K×M. Block `i`, row `j` holds φ_i^{j,y_i}, whose entry `l` is
/// `loss(C[l][y_i], q_il) - loss(C[l][j], q_il)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiTensor {
    examples: usize,
    classes: usize,
    classifiers: usize,
    values: Vec<f64>,
    labels: Vec<usize>,
}

impl PhiTensor {
    /// Assembles a tensor from raw blocks; the true-class slice of each block
    /// must be zero.
    pub fn from_parts(classes: usize, classifiers: usize, values: Vec<f64>, labels: Vec<usize>) -> Result<Self> {
        let n = labels.len();
        if values.len() != n * classes * classifiers {
            return Err(Error::Shape(format!(
                "{} values for {n} examples of {classes}x{classifiers}",
                values.len()
            )));
        }
        if let Some(&label) = labels.iter().find(|&&y| y >= classes) {
            return Err(Error::InvalidLabel { label, classes });
        }
        let phi = PhiTensor { examples: n, classes, classifiers, values, labels };
        for i in 0..n {
            if phi.slice(i, phi.labels[i]).iter().any(|&v| v != 0.0) {
                return Err(Error::Shape(format!("true-class slice of example {i} is not zero")));
            }
        }
        Ok(phi)
    }

    pub fn examples(&self) -> usize {
        self.examples
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn classifiers(&self) -> usize {
        self.classifiers
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// The K×M block of example `i` (rows are classes).
    pub fn block(&self, i: usize) -> &[f64] {
        let size = self.classes * self.classifiers;
        &self.values[i * size..(i + 1) * size]
    }

    /// φ_i^{j,y_i}.
    pub fn slice(&self, i: usize, j: usize) -> &[f64] {
        let start = (i * self.classes + j) * self.classifiers;
        &self.values[start..start + self.classifiers]
    }
}

/// Builds the φ features for every example, O(MNK).
pub fn compute_phi(code: &CodeMatrix, q: &ProbMatrix, labels: &[usize], kind: LossKind) -> Result<PhiTensor> {
    compute_phi_with(Exec::default(), code, q, labels, kind)
}

pub fn compute_phi_with(
    exec: Exec,
    code: &CodeMatrix,
    q: &ProbMatrix,
    labels: &[usize],
    kind: LossKind,
) -> Result<PhiTensor> {
    let (k, m) = (code.classes(), code.rows());
    if q.classifiers() != m {
        return Err(Error::DimensionMismatch { expected: m, found: q.classifiers() });
    }
    if labels.len() != q.examples() {
        return Err(Error::DimensionMismatch { expected: q.examples(), found: labels.len() });
    }
    if let Some(&label) = labels.iter().find(|&&y| y >= k) {
        return Err(Error::InvalidLabel { label, classes: k });
    }
    let blocks = exec.map_range(labels.len(), |i| {
        let losses = class_losses(code, q.row(i), kind);
        let truth = &losses[labels[i] * m..(labels[i] + 1) * m];
        let mut block = vec![0.0; k * m];
        for j in 0..k {
            if j == labels[i] {
                continue;
            }
            let other = &losses[j * m..(j + 1) * m];
            for l in 0..m {
                block[j * m + l] = truth[l] - other[l];
            }
        }
        block
    });
    Ok(PhiTensor {
        examples: labels.len(),
        classes: k,
        classifiers: m,
        values: blocks.concat(),
        labels: labels.to_vec(),
    })
}

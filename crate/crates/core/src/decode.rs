//! Class posteriors, hard predictions, the loss-based decoding baseline and
//! evaluation metrics.

use serde::{Deserialize, Serialize};

use crate::discrepancy::{clip_probability, rho_all, validate_weights, LossKind, ProbMatrix};
use crate::encoding::CodeMatrix;
use crate::exec::Exec;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassPosterior {
    pub probs: Vec<f64>,
}

impl ClassPosterior {
    /// Softmax of `-rho`, with max-subtraction.
    pub fn from_discrepancies(rho: &[f64]) -> Self {
        let min = rho.iter().copied().fold(f64::INFINITY, f64::min);
        let mut probs: Vec<f64> = rho.iter().map(|r| (min - r).exp()).collect();
        let total: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p /= total);
        ClassPosterior { probs }
    }

    pub fn uniform(k: usize) -> Self {
        ClassPosterior { probs: vec![1.0 / k as f64; k] }
    }
}

fn check_q(code: &CodeMatrix, q: &[f64]) -> Result<Vec<f64>> {
    if q.len() != code.rows() {
        return Err(Error::DimensionMismatch { expected: code.rows(), found: q.len() });
    }
    q.iter()
        .map(|&v| if (0.0..=1.0).contains(&v) { Ok(clip_probability(v)) } else { Err(Error::InvalidProbability(v)) })
        .collect()
}

/// Class posterior `softmax(-rho(c_k, q, w))` for one example.
pub fn posterior(w: &[f64], code: &CodeMatrix, q: &[f64], kind: LossKind) -> Result<ClassPosterior> {
    validate_weights(w, code.rows())?;
    let q = check_q(code, q)?;
    Ok(ClassPosterior::from_discrepancies(&rho_all(code, &q, w, kind)))
}

/// Posteriors for every row of `q`, computed in parallel.
pub fn posteriors(w: &[f64], code: &CodeMatrix, q: &ProbMatrix, kind: LossKind) -> Result<Vec<ClassPosterior>> {
    posteriors_with(Exec::default(), w, code, q, kind)
}

pub fn posteriors_with(
    exec: Exec,
    w: &[f64],
    code: &CodeMatrix,
    q: &ProbMatrix,
    kind: LossKind,
) -> Result<Vec<ClassPosterior>> {
    validate_weights(w, code.rows())?;
    if q.classifiers() != code.rows() {
        return Err(Error::DimensionMismatch { expected: code.rows(), found: q.classifiers() });
    }
    Ok(exec.map_range(q.examples(), |i| ClassPosterior::from_discrepancies(&rho_all(code, q.row(i), w, kind))))
}

/// Index of the largest probability; ties go to the lowest index.
pub fn predict(posterior: &ClassPosterior) -> usize {
    argmax(&posterior.probs)
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (k, &p) in v.iter().enumerate().skip(1) {
        if p > v[best] {
            best = k;
        }
    }
    best
}

pub(crate) fn argmin(v: &[f64]) -> usize {
    let mut best = 0;
    for (k, &p) in v.iter().enumerate().skip(1) {
        if p < v[best] {
            best = k;
        }
    }
    best
}

/// Uniform weights `1/M` with the exponential loss.
pub fn uniform_weights(m: usize) -> Vec<f64> {
    vec![1.0 / m as f64; m]
}

/// Loss-based decoding posterior: uniform weights `1/M`, exponential loss.
pub fn loss_based_posterior(code: &CodeMatrix, q: &[f64]) -> Result<ClassPosterior> {
    posterior(&uniform_weights(code.rows()), code, q, LossKind::Exponential)
}

/// Classic hard decision: the class whose codeword has the smallest mean
/// exponential loss.
pub fn loss_based_decode(code: &CodeMatrix, q: &[f64]) -> Result<usize> {
    let m = code.rows();
    let q = check_q(code, q)?;
    Ok(argmin(&rho_all(code, &q, &uniform_weights(m), LossKind::Exponential)))
}

pub fn loss_based_posteriors(code: &CodeMatrix, q: &ProbMatrix) -> Result<Vec<ClassPosterior>> {
    posteriors(&uniform_weights(code.rows()), code, q, LossKind::Exponential)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub accuracy: f64,
    /// Mean Brier score against the one-hot target.
    pub mse: f64,
    /// K×K counts, rows true class, columns predicted class.
    pub confusion: Vec<Vec<usize>>,
}

/// Accuracy, Brier score and confusion matrix.
pub fn metrics(true_labels: &[usize], posteriors: &[ClassPosterior]) -> Result<EvalMetrics> {
    if true_labels.len() != posteriors.len() {
        return Err(Error::DimensionMismatch { expected: true_labels.len(), found: posteriors.len() });
    }
    if posteriors.is_empty() {
        return Err(Error::Shape("no examples to evaluate".into()));
    }
    let k = posteriors[0].probs.len();
    if let Some(p) = posteriors.iter().find(|p| p.probs.len() != k) {
        return Err(Error::DimensionMismatch { expected: k, found: p.probs.len() });
    }
    let mut confusion = vec![vec![0usize; k]; k];
    let mut brier = 0.0;
    for (&y, p) in true_labels.iter().zip(posteriors) {
        if y >= k {
            return Err(Error::InvalidLabel { label: y, classes: k });
        }
        confusion[y][predict(p)] += 1;
        brier += p
            .probs
            .iter()
            .enumerate()
            .map(|(j, &pj)| {
                let t = if j == y { 1.0 } else { 0.0 };
                (t - pj) * (t - pj)
            })
            .sum::<f64>();
    }
    let n = true_labels.len() as f64;
    let correct: usize = (0..k).map(|j| confusion[j][j]).sum();
    Ok(EvalMetrics { accuracy: correct as f64 / n, mse: brier / n, confusion })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::{gen_allpairs, gen_ova};
    use approx::assert_relative_eq;

    #[test]
    fn zero_weights_are_uniform() {
        let c = gen_allpairs(4).unwrap();
        let p = posterior(&[0.0; 6], &c, &[0.2, 0.9, 0.4, 0.1, 0.6, 0.7], LossKind::CrossEntropy).unwrap();
        assert!(p.probs.iter().all(|&x| (x - 0.25).abs() < 1e-15));
    }

    #[test]
    fn symmetric_evidence_is_uniform() {
        let c = gen_ova(3).unwrap();
        let p = posterior(&[1.0, 1.0, 1.0], &c, &[0.5, 0.5, 0.5], LossKind::CrossEntropy).unwrap();
        assert!(p.probs.iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn softmax_of_known_discrepancies() {
        let p = ClassPosterior::from_discrepancies(&[0.0, 1.0, 2.0]);
        // exp(0), exp(-1), exp(-2) normalized.
        let z = 1.0 + (-1f64).exp() + (-2f64).exp();
        assert_relative_eq!(p.probs[0], 1.0 / z, epsilon = 1e-15);
        assert_relative_eq!(p.probs[0], 0.665_240_955_774_821_5, epsilon = 1e-15);
        assert_relative_eq!(p.probs[1], 0.244_728_471_054_797_6, epsilon = 1e-15);
        assert_relative_eq!(p.probs[2], 0.090_030_573_170_380_46, epsilon = 1e-15);
    }

    #[test]
    fn predict_with_tie_break() {
        assert_eq!(predict(&ClassPosterior { probs: vec![0.2, 0.5, 0.3] }), 1);
        assert_eq!(predict(&ClassPosterior::uniform(4)), 0);
    }

    #[test]
    fn dominant_class_one_evidence() {
        // Lexicographic all-pairs: rows (1,2), (1,3), (2,3).
        let c = gen_allpairs(3).unwrap();
        let p = posterior(&[1.0; 3], &c, &[0.95, 0.9, 0.5], LossKind::CrossEntropy).unwrap();
        assert_eq!(predict(&p), 0);
    }

    #[test]
    fn loss_based_is_uniform_exponential() {
        let c = gen_allpairs(4).unwrap();
        let q = [0.2, 0.9, 0.4, 0.1, 0.6, 0.7];
        let a = loss_based_posterior(&c, &q).unwrap();
        let b = posterior(&[1.0 / 6.0; 6], &c, &q, LossKind::Exponential).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn metrics_closed_forms() {
        let onehot: Vec<ClassPosterior> =
            (0..3).map(|k| ClassPosterior { probs: (0..3).map(|j| if j == k { 1.0 } else { 0.0 }).collect() }).collect();
        let m = metrics(&[0, 1, 2], &onehot).unwrap();
        assert_eq!(m.accuracy, 1.0);
        assert_eq!(m.mse, 0.0);
        let uniform = vec![ClassPosterior::uniform(3); 3];
        let m = metrics(&[0, 1, 2], &uniform).unwrap();
        assert_relative_eq!(m.mse, 2.0 / 3.0, epsilon = 1e-15);
        assert_eq!(m.confusion, vec![vec![1, 0, 0]; 3]);
        assert!(matches!(metrics(&[3], &uniform[..1]), Err(Error::InvalidLabel { label: 3, .. })));
        assert!(metrics(&[0, 1], &uniform).is_err());
    }

    #[test]
    fn posterior_errors() {
        let c = gen_ova(3).unwrap();
        assert!(posterior(&[1.0, 1.0], &c, &[0.5; 3], LossKind::CrossEntropy).is_err());
        assert!(posterior(&[1.0; 3], &c, &[0.5; 2], LossKind::CrossEntropy).is_err());
        assert!(posterior(&[1.0, -1.0, 1.0], &c, &[0.5; 3], LossKind::CrossEntropy).is_err());
    }
}

//! The trained artifact: nonnegative aggregation weights together with the
//! code matrix and loss they were learned for.

use serde::{Deserialize, Serialize};

use crate::base::{score, BinaryModel, Dataset};
use crate::decode::{posteriors_with, predict, ClassPosterior};
use crate::discrepancy::{compute_phi_with, LossKind, ProbMatrix};
use crate::encoding::CodeMatrix;
use crate::pdip::{solve, SolveReport, SolverOptions};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregationModel {
    pub weights: Vec<f64>,
    pub lambda: f64,
    pub loss: LossKind,
    pub code_matrix: CodeMatrix,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(default = "default_converged")]
    pub converged: bool,
    /// Base classifiers when the model was trained from raw features.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_models: Option<Vec<BinaryModel>>,
}

fn default_converged() -> bool {
    true
}

impl AggregationModel {
    /// Learns weights from a precomputed Q matrix.
    pub fn fit(
        code: &CodeMatrix,
        q: &ProbMatrix,
        labels: &[usize],
        loss: LossKind,
        lambda: f64,
        opts: &SolverOptions,
    ) -> Result<(Self, SolveReport)> {
        let phi = compute_phi_with(opts.exec, code, q, labels, loss)?;
        let report = solve(&phi, lambda, opts)?;
        let model = AggregationModel {
            weights: report.w_star.clone(),
            lambda,
            loss,
            code_matrix: code.clone(),
            k: code.classes(),
            converged: report.converged,
            base_models: None,
        };
        Ok((model, report))
    }

    pub fn with_base_models(mut self, models: Vec<BinaryModel>) -> Self {
        self.base_models = Some(models);
        self
    }

    /// Checks the internal consistency of a deserialized model.
    pub fn validate(&self) -> Result<()> {
        if self.k != self.code_matrix.classes() {
            return Err(Error::DimensionMismatch { expected: self.code_matrix.classes(), found: self.k });
        }
        crate::discrepancy::validate_weights(&self.weights, self.code_matrix.rows())?;
        if let Some(models) = &self.base_models {
            if models.len() != self.code_matrix.rows() {
                return Err(Error::DimensionMismatch { expected: self.code_matrix.rows(), found: models.len() });
            }
        }
        Ok(())
    }

    pub fn posteriors(&self, q: &ProbMatrix, opts: &SolverOptions) -> Result<Vec<ClassPosterior>> {
        posteriors_with(opts.exec, &self.weights, &self.code_matrix, q, self.loss)
    }

    /// Scores raw features with the stored base classifiers.
    pub fn q_for(&self, data: &Dataset, opts: &SolverOptions) -> Result<ProbMatrix> {
        let models = self
            .base_models
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("model has no base classifiers; supply a Q matrix".into()))?;
        score(opts.exec, models, data)
    }

    pub fn predict(&self, q: &ProbMatrix, opts: &SolverOptions) -> Result<Vec<usize>> {
        Ok(self.posteriors(q, opts)?.iter().map(predict).collect())
    }
}

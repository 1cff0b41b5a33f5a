//! Convex aggregation of binary classifiers into multiclass class-membership
//! probabilities.
//!
//! A multiclass problem is decomposed into binary subproblems by a code matrix
//! ([`encoding`]). Each binary classifier reports a probability per example
//! ([`base`]); those probabilities are compared against every class codeword
//! through a weighted discrepancy ([`discrepancy`]), and a softmax over the
//! negated discrepancies gives the class posterior ([`decode`]). The weights are
//! learned by minimizing an ℓ2-regularized log-sum-exp objective
//! ([`objective`]) under nonnegativity constraints with a primal-dual
//! interior-point solver ([`pdip`]). The large-margin variant and its
//! diagnostics live in [`margin`].
//!
//! Class labels are 0-based (`0..K`) everywhere in the library API. Files use
//! 1-based labels; the conversion happens in [`io`].

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod base;
pub mod decode;
pub mod discrepancy;
pub mod encoding;
mod error;
pub mod exec;
pub mod experiment;
pub mod io;
pub mod margin;
pub mod model;
pub mod objective;
pub mod pdip;
pub mod synthgen;

pub use error::{Error, Result};
pub use exec::Exec;

pub use base::{ingest_q, train_binary_problems, BinaryModel, Dataset};
pub use decode::{loss_based_decode, loss_based_posterior, metrics, posterior, predict, ClassPosterior, EvalMetrics};
pub use discrepancy::{compute_phi, loss, rho, LossKind, PhiTensor, ProbMatrix};
pub use encoding::{code_distance, gen_allpairs, gen_ecoc, gen_ova, CodeEntry, CodeMatrix, Scheme};
pub use margin::{BoundReport, MarginReport};
pub use model::AggregationModel;
pub use objective::{eval_objective, kl_total, ObjectiveConfig, ObjectiveEval};
pub use pdip::{solve, SolveReport, SolverOptions};

//! The regularized log-sum-exp objective and its derivatives.
//!
//! With `Ψ_i` the K×M block of example `i` and cost vector `c_i` (zero for the
//! plain objective, `1 - δ(y_i, k)` when cost-augmented), the objective is
//!
//! ```text
//! f(w) = 1/(τN) Σ_i log Σ_k exp{τ (c_ik + Ψ_i[k]·w)} + λ/2 ‖w‖²
//! ```
//!
//! `τ = 1` without costs is the negative log-likelihood of the softmax model.
//! Writing `π_i = softmax(τ (c_i + Ψ_i w))`, the gradient is
//! `1/N Σ Ψ_iᵀ π_i + λ w` and the Hessian `τ/N Σ Ψ_iᵀ (diag π_i - π_i π_iᵀ) Ψ_i + λ I`.
//! The 1/N factor is applied to value, gradient and Hessian alike.

use nalgebra::{DMatrix, DVector};

use crate::discrepancy::PhiTensor;
use crate::exec::Exec;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveConfig {
    pub lambda: f64,
    /// Stiffness; 1 for the plain likelihood.
    pub tau: f64,
    /// Adds the misclassification cost `1 - δ(y_i, k)` inside the exponent.
    pub cost_augmented: bool,
}

impl ObjectiveConfig {
    /// The plain regularized negative log-likelihood.
    pub fn likelihood(lambda: f64) -> Self {
        ObjectiveConfig { lambda, tau: 1.0, cost_augmented: false }
    }

    /// The τ-stiffened, cost-augmented objective.
    pub fn stiffened(lambda: f64, tau: f64) -> Self {
        ObjectiveConfig { lambda, tau, cost_augmented: true }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidConfig(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !(self.tau >= 1.0) || !self.tau.is_finite() {
            return Err(Error::InvalidConfig(format!("tau must be at least 1, got {}", self.tau)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveEval {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: Option<DMatrix<f64>>,
}

/// Numerically stable `log Σ exp(x)`; also returns the normalized weights.
pub fn log_sum_exp(xs: &[f64], weights: &mut [f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (p, &x) in weights.iter_mut().zip(xs) {
        *p = (x - max).exp();
        total += *p;
    }
    for p in weights.iter_mut() {
        *p /= total;
    }
    max + total.ln()
}

struct Partial {
    data: f64,
    gradient: Vec<f64>,
    hessian: Vec<f64>,
}

fn accumulate(w: &[f64], phi: &PhiTensor, cfg: &ObjectiveConfig, want_hessian: bool, range: std::ops::Range<usize>) -> Partial {
    let (k, m) = (phi.classes(), phi.classifiers());
    let mut part = Partial {
        data: 0.0,
        gradient: vec![0.0; m],
        hessian: if want_hessian { vec![0.0; m * m] } else { Vec::new() },
    };
    let mut exponents = vec![0.0; k];
    let mut pi = vec![0.0; k];
    let mut mean = vec![0.0; m];
    for i in range {
        let block = phi.block(i);
        let y = phi.labels()[i];
        for (c, e) in exponents.iter_mut().enumerate() {
            let row = &block[c * m..(c + 1) * m];
            let cost = if cfg.cost_augmented && c != y { 1.0 } else { 0.0 };
            *e = cfg.tau * (cost + row.iter().zip(w).map(|(a, b)| a * b).sum::<f64>());
        }
        part.data += log_sum_exp(&exponents, &mut pi) / cfg.tau;

        mean.iter_mut().for_each(|v| *v = 0.0);
        for (c, &p) in pi.iter().enumerate() {
            let row = &block[c * m..(c + 1) * m];
            for (acc, &v) in mean.iter_mut().zip(row) {
                *acc += p * v;
            }
        }
        for (g, &v) in part.gradient.iter_mut().zip(&mean) {
            *g += v;
        }
        if want_hessian {
            // Ψᵀ diag(π) Ψ - (Ψᵀπ)(Ψᵀπ)ᵀ, upper triangle only.
            for (c, &p) in pi.iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                let row = &block[c * m..(c + 1) * m];
                for a in 0..m {
                    let pa = p * row[a];
                    if pa == 0.0 {
                        continue;
                    }
                    for b in a..m {
                        part.hessian[a * m + b] += pa * row[b];
                    }
                }
            }
            for a in 0..m {
                for b in a..m {
                    part.hessian[a * m + b] -= mean[a] * mean[b];
                }
            }
        }
    }
    part
}

/// Evaluates the objective at `w`, with the Hessian when `want_hessian`.
pub fn eval_objective(w: &[f64], phi: &PhiTensor, cfg: &ObjectiveConfig, want_hessian: bool) -> Result<ObjectiveEval> {
    eval_objective_with(Exec::default(), w, phi, cfg, want_hessian)
}

pub fn eval_objective_with(
    exec: Exec,
    w: &[f64],
    phi: &PhiTensor,
    cfg: &ObjectiveConfig,
    want_hessian: bool,
) -> Result<ObjectiveEval> {
    let m = phi.classifiers();
    if w.len() != m {
        return Err(Error::DimensionMismatch { expected: m, found: w.len() });
    }
    let n = phi.examples();
    if n == 0 {
        return Err(Error::Shape("objective needs at least one example".into()));
    }
    let partials = exec.map_chunks(n, |range| accumulate(w, phi, cfg, want_hessian, range));

    let mut data = 0.0;
    let mut gradient = vec![0.0; m];
    let mut upper = if want_hessian { vec![0.0; m * m] } else { Vec::new() };
    for part in &partials {
        data += part.data;
        gradient.iter_mut().zip(&part.gradient).for_each(|(a, b)| *a += b);
        upper.iter_mut().zip(&part.hessian).for_each(|(a, b)| *a += b);
    }
    let n = n as f64;
    let norm_sq: f64 = w.iter().map(|x| x * x).sum();
    let value = data / n + 0.5 * cfg.lambda * norm_sq;
    if !value.is_finite() {
        return Err(Error::NumericOverflow("objective value"));
    }
    let gradient = DVector::from_iterator(m, gradient.iter().zip(w).map(|(g, x)| g / n + cfg.lambda * x));
    if gradient.iter().any(|g| !g.is_finite()) {
        return Err(Error::NumericOverflow("objective gradient"));
    }
    let hessian = want_hessian.then(|| {
        let scale = cfg.tau / n;
        DMatrix::from_fn(m, m, |a, b| {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let v = scale * upper[lo * m + hi];
            if a == b {
                v + cfg.lambda
            } else {
                v
            }
        })
    });
    if hessian.as_ref().is_some_and(|h| h.iter().any(|v| !v.is_finite())) {
        return Err(Error::NumericOverflow("objective Hessian"));
    }
    Ok(ObjectiveEval { value, gradient, hessian })
}

/// Total KL divergence between the one-hot targets and the model posteriors,
/// `Σ_i log Σ_k exp{w·φ_i^{k,y_i}}`.
pub fn kl_total(w: &[f64], phi: &PhiTensor) -> Result<f64> {
    let m = phi.classifiers();
    if w.len() != m {
        return Err(Error::DimensionMismatch { expected: m, found: w.len() });
    }
    let k = phi.classes();
    let mut exponents = vec![0.0; k];
    let mut scratch = vec![0.0; k];
    let mut total = 0.0;
    for i in 0..phi.examples() {
        for (c, e) in exponents.iter_mut().enumerate() {
            *e = phi.slice(i, c).iter().zip(w).map(|(a, b)| a * b).sum();
        }
        total += log_sum_exp(&exponents, &mut scratch);
    }
    if !total.is_finite() {
        return Err(Error::NumericOverflow("KL divergence"));
    }
    Ok(total)
}

//! Primal-dual interior-point solver for `minimize f(w) subject to w ⪰ 0`.
//!
//! Each iteration takes a Newton step on the perturbed KKT residual
//!
//! ```text
//! r_μ(w, z) = [ ∇f(w) - z ;  diag(z) w - μ 1 ]
//! ```
//!
//! after eliminating `Δz`, which leaves the M×M system `H Δw = -g` with
//! `H = ∇²f(w) + diag(z / w)` and `g = ∇f(w) - μ / w`. That system is solved
//! by diagonally preconditioned conjugate gradients, with a dense Cholesky
//! fallback. A backtracking line search keeps `w ≻ 0`, `z ⪰ 0` and enforces
//! sufficient decrease of `‖r_μ‖`; the barrier parameter drops to `η̂ / 2M`
//! (`η̂ = zᵀw`) after every step of length at least `s_min`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::discrepancy::PhiTensor;
use crate::exec::Exec;
use crate::objective::{eval_objective_with, ObjectiveConfig, ObjectiveEval};
use crate::{Error, Result};

/// Smallest step length tried before the line search gives up.
pub const MIN_STEP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Sufficient-decrease constant of the line search.
    pub alpha: f64,
    /// Backtracking shrink factor.
    pub beta: f64,
    /// Minimum step length for which the barrier parameter is reduced.
    pub s_min: f64,
    pub eps_fea: f64,
    pub eps_gap: f64,
    pub max_iters: usize,
    /// Relative residual at which PCG stops.
    pub pcg_tol: f64,
    /// PCG iteration cap; `None` means 10·M.
    pub pcg_max: Option<usize>,
    #[serde(skip)]
    pub exec: Exec,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            alpha: 0.01,
            beta: 0.5,
            s_min: 0.5,
            eps_fea: 1e-4,
            eps_gap: 1e-4,
            max_iters: 200,
            pcg_tol: 1e-10,
            pcg_max: None,
            exec: Exec::default(),
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidConfig(what.to_string()));
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return bad("alpha must lie in (0, 0.5)");
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return bad("beta must lie in (0, 1)");
        }
        if !(self.eps_fea > 0.0 && self.eps_gap > 0.0 && self.pcg_tol > 0.0) {
            return bad("tolerances must be positive");
        }
        if !(self.s_min > 0.0 && self.s_min <= 1.0) {
            return bad("s_min must lie in (0, 1]");
        }
        Ok(())
    }

    fn pcg_cap(&self, m: usize) -> usize {
        self.pcg_max.unwrap_or(10 * m).max(1)
    }
}

/// Primal-dual iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub w: Vec<f64>,
    pub z: Vec<f64>,
    pub mu: f64,
    pub residual_norm: f64,
    /// Surrogate duality gap `zᵀw`.
    pub gap: f64,
    pub iter: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Converged,
    MaxIterations,
    LineSearchFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub w_star: Vec<f64>,
    pub z_star: Vec<f64>,
    pub iterations: usize,
    pub final_residual: f64,
    pub final_gap: f64,
    /// Objective value at the starting point and after every iteration.
    pub objective_trace: Vec<f64>,
    pub converged: bool,
    pub termination: Termination,
    /// Newton steps for which PCG missed its tolerance and the dense solve
    /// was used.
    pub direct_fallbacks: usize,
}

/// Perturbed KKT residual, stacked `[∇f - z; z∘w - μ]`, and its 2-norm.
pub fn residual(w: &[f64], z: &[f64], mu: f64, gradient: &[f64]) -> (Vec<f64>, f64) {
    let top = gradient.iter().zip(z).map(|(g, zj)| g - zj);
    let bottom = z.iter().zip(w).map(|(zj, wj)| zj * wj - mu);
    let r: Vec<f64> = top.chain(bottom).collect();
    let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
    (r, norm)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// `‖b - A x‖ / ‖b‖` at exit.
    pub relative_residual: f64,
    pub converged: bool,
}

/// Conjugate gradients on the SPD system `a x = b`, preconditioned by the
/// diagonal of `a`.
pub fn pcg(a: &DMatrix<f64>, b: &[f64], tol: f64, max_iters: usize) -> PcgOutcome {
    let n = b.len();
    let b_norm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut x = DVector::zeros(n);
    if b_norm == 0.0 {
        return PcgOutcome { x: x.as_slice().to_vec(), iterations: 0, relative_residual: 0.0, converged: true };
    }
    let inv_diag: DVector<f64> =
        DVector::from_iterator(n, (0..n).map(|i| if a[(i, i)] > 0.0 { 1.0 / a[(i, i)] } else { 1.0 }));
    let mut r = DVector::from_column_slice(b);
    let mut zv = r.component_mul(&inv_diag);
    let mut p = zv.clone();
    let mut rz = r.dot(&zv);
    let mut iterations = 0;
    while iterations < max_iters {
        let ap = a * &p;
        let curvature = p.dot(&ap);
        if !(curvature > 0.0) {
            break;
        }
        let step = rz / curvature;
        x.axpy(step, &p, 1.0);
        r.axpy(-step, &ap, 1.0);
        iterations += 1;
        if r.norm() / b_norm <= tol {
            break;
        }
        zv = r.component_mul(&inv_diag);
        let rz_next = r.dot(&zv);
        p = &zv + (rz_next / rz) * &p;
        rz = rz_next;
    }
    // Recompute the true residual; the recurrence can drift.
    let true_rel = (DVector::from_column_slice(b) - a * &x).norm() / b_norm;
    PcgOutcome { x: x.as_slice().to_vec(), iterations, relative_residual: true_rel, converged: true_rel <= tol }
}

/// Dense SPD solve used as the PCG fallback and as a test oracle.
pub fn dense_solve(a: &DMatrix<f64>, b: &[f64]) -> Option<Vec<f64>> {
    let rhs = DVector::from_column_slice(b);
    if let Some(chol) = a.clone().cholesky() {
        return Some(chol.solve(&rhs).as_slice().to_vec());
    }
    a.clone().lu().solve(&rhs).map(|x| x.as_slice().to_vec())
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonStep {
    pub dw: Vec<f64>,
    pub dz: Vec<f64>,
    pub pcg_iterations: usize,
    pub used_fallback: bool,
}

/// Reduced Newton system `(H, -g)` at `(w, z, μ)`.
pub fn reduced_system(w: &[f64], z: &[f64], mu: f64, eval: &ObjectiveEval) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let hessian = eval
        .hessian
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("Newton step needs the Hessian".into()))?;
    let mut h = hessian.clone();
    for j in 0..w.len() {
        h[(j, j)] += z[j] / w[j];
    }
    let neg_g = (0..w.len()).map(|j| -(eval.gradient[j] - mu / w[j])).collect();
    Ok((h, neg_g))
}

/// Newton direction for the perturbed KKT system.
pub fn newton_step(
    w: &[f64],
    z: &[f64],
    mu: f64,
    eval: &ObjectiveEval,
    opts: &SolverOptions,
    iteration: usize,
) -> Result<NewtonStep> {
    let m = w.len();
    let (h, rhs) = reduced_system(w, z, mu, eval)?;
    let outcome = pcg(&h, &rhs, opts.pcg_tol, opts.pcg_cap(m));
    let (dw, used_fallback) = if outcome.converged {
        (outcome.x, false)
    } else {
        let x = dense_solve(&h, &rhs).ok_or(Error::SolverBreakdown { iteration })?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::SolverBreakdown { iteration });
        }
        (x, true)
    };
    let dz = (0..m)
        .map(|j| -(z[j] / w[j]) * dw[j] - (z[j] * w[j] - mu) / w[j])
        .collect();
    Ok(NewtonStep { dw, dz, pcg_iterations: outcome.iterations, used_fallback })
}

/// Largest `s ∈ [0, 1]` keeping `z + s Δz ⪰ 0`.
pub fn max_dual_step(z: &[f64], dz: &[f64]) -> f64 {
    z.iter()
        .zip(dz)
        .filter(|(_, &d)| d < 0.0)
        .map(|(&zj, &d)| -zj / d)
        .fold(1.0, f64::min)
}

/// New barrier parameter: `gap / 2M` after a long enough step, else unchanged.
pub fn update_mu(gap: f64, s: f64, m: usize, mu: f64, opts: &SolverOptions) -> f64 {
    if s >= opts.s_min {
        gap / (2.0 * m as f64)
    } else {
        mu
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineSearchOutcome {
    pub s: f64,
    pub w: Vec<f64>,
    pub z: Vec<f64>,
    pub residual_norm: f64,
    pub eval: ObjectiveEval,
}

/// Backtracking from `0.99 s_max` until `w ≻ 0` and
/// `‖r_μ(w + sΔw, z + sΔz)‖ ≤ (1 - αs) ‖r_μ(w, z)‖`. `evaluate` returns the
/// objective (with Hessian) at a trial point. Returns `Ok(None)` once the
/// step underflows [`MIN_STEP`].
#[allow(clippy::too_many_arguments)]
pub fn line_search<F>(
    w: &[f64],
    z: &[f64],
    dw: &[f64],
    dz: &[f64],
    mu: f64,
    residual_norm: f64,
    opts: &SolverOptions,
    mut evaluate: F,
) -> Result<Option<LineSearchOutcome>>
where
    F: FnMut(&[f64]) -> Result<ObjectiveEval>,
{
    let mut s = 0.99 * max_dual_step(z, dz);
    while s >= MIN_STEP {
        let trial_w: Vec<f64> = w.iter().zip(dw).map(|(a, d)| a + s * d).collect();
        if trial_w.iter().all(|&v| v > 0.0) {
            let trial_z: Vec<f64> = z.iter().zip(dz).map(|(a, d)| (a + s * d).max(0.0)).collect();
            let eval = evaluate(&trial_w)?;
            let (_, norm) = residual(&trial_w, &trial_z, mu, eval.gradient.as_slice());
            if norm <= (1.0 - opts.alpha * s) * residual_norm {
                return Ok(Some(LineSearchOutcome { s, w: trial_w, z: trial_z, residual_norm: norm, eval }));
            }
        }
        s *= opts.beta;
    }
    Ok(None)
}

/// Primal-dual starting point.
#[derive(Debug, Clone, PartialEq)]
pub struct StartPoint {
    pub w: Vec<f64>,
    pub z: Vec<f64>,
}

impl StartPoint {
    /// `w = 1/M`, `z = 1`.
    pub fn uniform(m: usize) -> Self {
        StartPoint { w: vec![1.0 / m as f64; m], z: vec![1.0; m] }
    }
}

/// Solves the plain likelihood problem from the uniform start.
pub fn solve(phi: &PhiTensor, lambda: f64, opts: &SolverOptions) -> Result<SolveReport> {
    solve_objective(phi, &ObjectiveConfig::likelihood(lambda), None, opts)
}

/// Solves `minimize f(w) s.t. w ⪰ 0` for any objective configuration,
/// optionally warm-started.
pub fn solve_objective(
    phi: &PhiTensor,
    cfg: &ObjectiveConfig,
    start: Option<StartPoint>,
    opts: &SolverOptions,
) -> Result<SolveReport> {
    cfg.validate()?;
    opts.validate()?;
    let m = phi.classifiers();
    if m == 0 || phi.examples() == 0 {
        return Err(Error::Shape("solver needs at least one classifier and one example".into()));
    }
    let start = start.unwrap_or_else(|| StartPoint::uniform(m));
    if start.w.len() != m || start.z.len() != m {
        return Err(Error::DimensionMismatch { expected: m, found: start.w.len().min(start.z.len()) });
    }
    if start.w.iter().any(|&v| !(v > 0.0)) || start.z.iter().any(|&v| !(v >= 0.0)) {
        return Err(Error::InvalidConfig("start point must have w > 0 and z >= 0".into()));
    }

    let evaluate = |w: &[f64]| eval_objective_with(opts.exec, w, phi, cfg, true);
    let mut state = SolverState { w: start.w, z: start.z, mu: 0.0, residual_norm: 0.0, gap: 0.0, iter: 0 };
    state.gap = dot(&state.z, &state.w);
    state.mu = state.gap / (2.0 * m as f64);
    let mut eval = evaluate(&state.w)?;
    state.residual_norm = residual(&state.w, &state.z, state.mu, eval.gradient.as_slice()).1;

    let mut trace = vec![eval.value];
    let mut fallbacks = 0;
    let mut termination = Termination::MaxIterations;
    let converged_at = |s: &SolverState| s.residual_norm <= opts.eps_fea && s.gap <= opts.eps_gap;

    if converged_at(&state) {
        termination = Termination::Converged;
    }
    while termination != Termination::Converged && state.iter < opts.max_iters {
        let iteration = state.iter + 1;
        let step = newton_step(&state.w, &state.z, state.mu, &eval, opts, iteration)?;
        fallbacks += usize::from(step.used_fallback);
        let current = residual(&state.w, &state.z, state.mu, eval.gradient.as_slice()).1;
        let Some(accepted) = line_search(&state.w, &state.z, &step.dw, &step.dz, state.mu, current, opts, evaluate)?
        else {
            termination = Termination::LineSearchFailure;
            break;
        };
        debug_assert!(accepted.w.iter().all(|&v| v > 0.0));
        debug_assert!(accepted.z.iter().all(|&v| v >= 0.0));
        state.w = accepted.w;
        state.z = accepted.z;
        state.iter = iteration;
        eval = accepted.eval;
        trace.push(eval.value);

        state.gap = dot(&state.z, &state.w);
        state.mu = update_mu(state.gap, accepted.s, m, state.mu, opts);
        state.residual_norm = residual(&state.w, &state.z, state.mu, eval.gradient.as_slice()).1;
        if converged_at(&state) {
            termination = Termination::Converged;
        }
    }

    Ok(SolveReport {
        w_star: state.w,
        z_star: state.z,
        iterations: state.iter,
        final_residual: state.residual_norm,
        final_gap: state.gap,
        objective_trace: trace,
        converged: termination == Termination::Converged,
        termination,
        direct_fallbacks: fallbacks,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn residual_vanishes_at_perturbed_kkt_point() {
        let w = [0.5, 2.0];
        let mu = 0.1;
        let z = [mu / w[0], mu / w[1]];
        let (_, norm) = residual(&w, &z, mu, &z);
        assert!(norm < 1e-15);
        let (_, exact) = residual(&[0.0, 3.0], &[1.5, 0.0], 0.0, &[1.5, 0.0]);
        assert_eq!(exact, 0.0);
    }

    #[test]
    fn residual_blocks() {
        let (r, norm) = residual(&[1.0, 2.0], &[0.5, 0.25], 0.1, &[0.7, -0.1]);
        let expect = [0.2, -0.35, 0.4, 0.4];
        for (a, b) in r.iter().zip(expect) {
            assert_relative_eq!(*a, b, epsilon = 1e-15);
        }
        assert_relative_eq!(norm, expect.iter().map(|v| v * v).sum::<f64>().sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn dual_step_bounds() {
        assert_eq!(max_dual_step(&[1.0, 1.0], &[0.5, 0.0]), 1.0);
        assert_eq!(max_dual_step(&[1.0, 1.0], &[-2.0, -0.5]), 0.5);
    }

    #[test]
    fn barrier_update_rule() {
        let o = SolverOptions::default();
        assert_relative_eq!(update_mu(0.4, 0.7, 10, 1.0, &o), 0.02);
        assert_eq!(update_mu(0.4, 0.3, 10, 1.0, &o), 1.0);
        assert_eq!(update_mu(0.0, 0.5, 10, 1.0, &o), 0.0);
    }

    #[test]
    fn pcg_handles_zero_rhs_and_identity() {
        let a = DMatrix::<f64>::identity(3, 3);
        let out = pcg(&a, &[0.0; 3], 1e-10, 30);
        assert!(out.converged && out.x == vec![0.0; 3]);
        let out = pcg(&a, &[1.0, 2.0, 3.0], 1e-10, 30);
        assert!(out.converged);
        assert_eq!(out.iterations, 1);
    }

    #[test]
    fn newton_step_is_zero_at_perturbed_kkt_point() {
        let w = [0.5, 2.0];
        let mu = 0.1;
        let z = vec![mu / w[0], mu / w[1]];
        let eval = ObjectiveEval {
            value: 0.0,
            gradient: DVector::from_vec(z.clone()),
            hessian: Some(DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0])),
        };
        let step = newton_step(&w, &z, mu, &eval, &SolverOptions::default(), 1).unwrap();
        assert!(step.dw.iter().chain(&step.dz).all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn options_validation() {
        assert!(SolverOptions::default().validate().is_ok());
        assert!(SolverOptions { alpha: 0.6, ..Default::default() }.validate().is_err());
        assert!(SolverOptions { beta: 1.0, ..Default::default() }.validate().is_err());
        assert!(SolverOptions { eps_fea: 0.0, ..Default::default() }.validate().is_err());
    }
}

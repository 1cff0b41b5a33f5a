//! Large-margin formulation: multiclass hinge loss on the φ features, its
//! projected-subgradient solver, the τ-annealed smooth approximation, and the
//! Rademacher generalization-bound diagnostic.
//!
//! Since `w·φ_i^{k,y_i} = rho(c_{y_i}) - rho(c_k)`, the margin
//! `min_{k≠y_i} rho(c_k) - rho(c_{y_i})` equals `-max_{k≠y_i} w·φ_i^{k,y_i}`,
//! and the hinge loss `max_k {(1 - δ(y_i,k)) + w·φ_i^{k,y_i}}` equals
//! `max(0, 1 - margin)`.

use serde::{Deserialize, Serialize};

use crate::discrepancy::PhiTensor;
use crate::objective::{eval_objective, log_sum_exp, ObjectiveConfig};
use crate::pdip::{solve_objective, SolveReport, SolverOptions, StartPoint};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginReport {
    pub margins: Vec<f64>,
    pub hinge_values: Vec<f64>,
    /// Mean hinge loss plus `λ/2 ‖w‖²`.
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    #[serde(rename = "B")]
    pub b: f64,
    pub epsilon: f64,
    pub empirical_loss: f64,
    pub complexity_term: f64,
    pub confidence_term: f64,
    pub total: f64,
}

/// Default initial step of the subgradient solver.
pub const SUBGRADIENT_STEP0: f64 = 1.0;
/// Default iteration count of the subgradient solver.
pub const SUBGRADIENT_ITERS: usize = 5000;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_len(w: &[f64], phi: &PhiTensor) -> Result<()> {
    if w.len() != phi.classifiers() {
        return Err(Error::DimensionMismatch { expected: phi.classifiers(), found: w.len() });
    }
    Ok(())
}

/// Cost-augmented scores `(1 - δ(y_i,k)) + w·φ_i^{k,y_i}` of one example.
fn augmented_scores(w: &[f64], phi: &PhiTensor, i: usize) -> Vec<f64> {
    let y = phi.labels()[i];
    (0..phi.classes())
        .map(|k| if k == y { 0.0 } else { 1.0 + dot(phi.slice(i, k), w) })
        .collect()
}

fn margin_of(w: &[f64], phi: &PhiTensor, i: usize) -> f64 {
    let y = phi.labels()[i];
    -(0..phi.classes())
        .filter(|&k| k != y)
        .map(|k| dot(phi.slice(i, k), w))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Ramp loss `min(1, max(0, 1 - z))`.
pub fn ramp(z: f64) -> f64 {
    (1.0 - z).clamp(0.0, 1.0)
}

/// Per-example margins and hinge losses, and the large-margin objective.
pub fn hinge_and_margin(w: &[f64], phi: &PhiTensor, lambda: f64) -> Result<MarginReport> {
    check_len(w, phi)?;
    let n = phi.examples();
    let margins: Vec<f64> = (0..n).map(|i| margin_of(w, phi, i)).collect();
    let hinge_values: Vec<f64> = (0..n)
        .map(|i| augmented_scores(w, phi, i).into_iter().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let objective = hinge_values.iter().sum::<f64>() / n as f64 + 0.5 * lambda * dot(w, w);
    Ok(MarginReport { margins, hinge_values, objective })
}

/// Large-margin objective value.
pub fn large_margin_objective(w: &[f64], phi: &PhiTensor, lambda: f64) -> Result<f64> {
    Ok(hinge_and_margin(w, phi, lambda)?.objective)
}

/// Projected subgradient descent on the large-margin objective with step
/// `step0 / √t`, starting from `w = 1/M`. Returns the best iterate seen.
pub fn subgradient_solve(phi: &PhiTensor, lambda: f64, step0: f64, iters: usize) -> Result<Vec<f64>> {
    let (n, m) = (phi.examples(), phi.classifiers());
    if n == 0 || m == 0 {
        return Err(Error::Shape("subgradient solver needs data".into()));
    }
    let mut w = vec![1.0 / m as f64; m];
    let mut best = w.clone();
    let mut best_value = large_margin_objective(&w, phi, lambda)?;
    let mut g = vec![0.0; m];
    for t in 1..=iters {
        g.iter_mut().zip(&w).for_each(|(gj, wj)| *gj = lambda * wj);
        for i in 0..n {
            let scores = augmented_scores(&w, phi, i);
            // Lowest index wins ties; the true class contributes a zero row.
            let mut top = 0;
            for k in 1..scores.len() {
                if scores[k] > scores[top] {
                    top = k;
                }
            }
            if top != phi.labels()[i] {
                for (gj, v) in g.iter_mut().zip(phi.slice(i, top)) {
                    *gj += v / n as f64;
                }
            }
        }
        let step = step0 / (t as f64).sqrt();
        for (wj, gj) in w.iter_mut().zip(&g) {
            *wj = (*wj - step * gj).max(0.0);
        }
        let value = large_margin_objective(&w, phi, lambda)?;
        if value < best_value {
            best_value = value;
            best.clone_from(&w);
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnealReport {
    pub w: Vec<f64>,
    pub taus: Vec<f64>,
    pub stages: Vec<SolveReport>,
}

/// Default stiffness schedule 1, 2, 4, ..., 64.
pub fn default_tau_schedule() -> Vec<f64> {
    (0..7).map(|p| f64::from(1u32 << p)).collect()
}

/// Solves the stiffened objective for each τ in `schedule`, warm-starting
/// every stage from the previous primal-dual solution.
pub fn tau_annealed_solve(
    phi: &PhiTensor,
    lambda: f64,
    schedule: &[f64],
    cost_augmented: bool,
    opts: &SolverOptions,
) -> Result<AnnealReport> {
    if schedule.first() != Some(&1.0) {
        return Err(Error::InvalidConfig("tau schedule must start at 1".into()));
    }
    if schedule.windows(2).any(|p| p[1] <= p[0]) {
        return Err(Error::InvalidConfig("tau schedule must be increasing".into()));
    }
    let mut start = None;
    let mut stages = Vec::with_capacity(schedule.len());
    for &tau in schedule {
        let cfg = ObjectiveConfig { lambda, tau, cost_augmented };
        let report = solve_objective(phi, &cfg, start.take(), opts)?;
        start = Some(StartPoint { w: report.w_star.clone(), z: report.z_star.clone() });
        stages.push(report);
    }
    let w = stages.last().map(|s| s.w_star.clone()).unwrap_or_default();
    Ok(AnnealReport { w, taus: schedule.to_vec(), stages })
}

/// Stiffened log-sum-exp loss of one example, `(1/τ) log Σ_k exp{τ s_k}`.
fn stiff_loss(scores: &[f64], tau: f64) -> f64 {
    let scaled: Vec<f64> = scores.iter().map(|s| tau * s).collect();
    let mut scratch = vec![0.0; scores.len()];
    log_sum_exp(&scaled, &mut scratch) / tau
}

/// Largest per-example gap between the stiffened loss and the hinge loss.
/// Always in `[0, log K / τ]`.
pub fn sandwich_gap(w: &[f64], phi: &PhiTensor, tau: f64) -> Result<f64> {
    check_len(w, phi)?;
    if !(tau >= 1.0) {
        return Err(Error::InvalidConfig(format!("tau must be at least 1, got {tau}")));
    }
    let mut gap = f64::NEG_INFINITY;
    for i in 0..phi.examples() {
        let scores = augmented_scores(w, phi, i);
        let hinge = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        gap = gap.max(stiff_loss(&scores, tau) - hinge);
    }
    Ok(gap)
}

/// Stiffened cost-augmented objective value at `w`.
pub fn stiffened_objective(w: &[f64], phi: &PhiTensor, lambda: f64, tau: f64) -> Result<f64> {
    Ok(eval_objective(w, phi, &ObjectiveConfig::stiffened(lambda, tau), false)?.value)
}

/// Three-term generalization bound: mean ramp loss of the margins, the
/// Rademacher term `(2B/N) (Σ_i min_{k≠y_i} ‖φ_i^{k,y_i}‖²)^{1/2}`, and the
/// confidence term `√(9 ln(2/ε) / 2N)`.
pub fn generalization_bound(w: &[f64], phi: &PhiTensor, b: f64, epsilon: f64) -> Result<BoundReport> {
    check_len(w, phi)?;
    let norm = dot(w, w).sqrt();
    if !(b >= norm) {
        return Err(Error::InvalidBoundParameter(format!("B = {b} is smaller than ‖w‖ = {norm}")));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidBoundParameter(format!("epsilon = {epsilon} is not in (0, 1)")));
    }
    let n = phi.examples();
    if n == 0 {
        return Err(Error::Shape("bound needs at least one example".into()));
    }
    let nf = n as f64;
    let empirical_loss = (0..n).map(|i| ramp(margin_of(w, phi, i))).sum::<f64>() / nf;
    let norms: f64 = (0..n)
        .map(|i| {
            let y = phi.labels()[i];
            (0..phi.classes())
                .filter(|&k| k != y)
                .map(|k| dot(phi.slice(i, k), phi.slice(i, k)))
                .fold(f64::INFINITY, f64::min)
        })
        .sum();
    let complexity_term = 2.0 * b / nf * norms.sqrt();
    let confidence_term = (9.0 * (2.0 / epsilon).ln() / (2.0 * nf)).sqrt();
    Ok(BoundReport {
        b,
        epsilon,
        empirical_loss,
        complexity_term,
        confidence_term,
        total: empirical_loss + complexity_term + confidence_term,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// One example, K=2, M=1, true class 0, with φ^{1,0} = c.
    fn single(c: f64) -> PhiTensor {
        PhiTensor::from_parts(2, 1, vec![0.0, c], vec![0]).unwrap()
    }

    #[test]
    fn zero_weights() {
        let phi = PhiTensor::from_parts(3, 2, vec![0.0, 0.0, 1.0, -2.0, 0.5, 3.0], vec![0]).unwrap();
        let r = hinge_and_margin(&[0.0, 0.0], &phi, 0.1).unwrap();
        assert_eq!(r.margins, vec![0.0]);
        assert_eq!(r.hinge_values, vec![1.0]);
    }

    #[test]
    fn margin_regimes() {
        // w·φ = -1.5 → margin 1.5, hinge 0.
        let r = hinge_and_margin(&[1.0], &single(-1.5), 0.0).unwrap();
        assert_relative_eq!(r.margins[0], 1.5);
        assert_eq!(r.hinge_values[0], 0.0);
        let r = hinge_and_margin(&[1.0], &single(-0.3), 0.0).unwrap();
        assert_relative_eq!(r.margins[0], 0.3);
        assert_relative_eq!(r.hinge_values[0], 0.7, epsilon = 1e-15);
        let r = hinge_and_margin(&[1.0], &single(0.4), 0.0).unwrap();
        assert!(r.margins[0] < 0.0 && r.hinge_values[0] >= 1.0);
    }

    #[test]
    fn ramp_loss_shape() {
        assert_eq!(ramp(2.0), 0.0);
        assert_eq!(ramp(-1.0), 1.0);
        assert_relative_eq!(ramp(0.25), 0.75);
    }

    #[test]
    fn sandwich_limits() {
        let phi = PhiTensor::from_parts(3, 2, vec![0.0, 0.0, 1.0, -2.0, 0.5, 3.0], vec![0]).unwrap();
        let g1 = sandwich_gap(&[0.2, 0.1], &phi, 1.0).unwrap();
        assert!((0.0..=3f64.ln()).contains(&g1));
        let g100 = sandwich_gap(&[0.2, 0.1], &phi, 100.0).unwrap();
        assert!((0.0..=0.011).contains(&g100));
        assert!(sandwich_gap(&[0.2, 0.1], &phi, 0.5).is_err());
    }

    #[test]
    fn bound_with_perfect_margins() {
        let phi = PhiTensor::from_parts(2, 1, vec![0.0, -2.0, -3.0, 0.0], vec![0, 1]).unwrap();
        let r = generalization_bound(&[1.0], &phi, 1.0, 0.05).unwrap();
        assert_eq!(r.empirical_loss, 0.0);
        assert_relative_eq!(r.complexity_term, 2.0 / 2.0 * (4.0f64 + 9.0).sqrt());
        assert_relative_eq!(r.confidence_term, (9.0 * 40f64.ln() / 4.0).sqrt());
        assert_relative_eq!(r.total, r.complexity_term + r.confidence_term);
        assert!(matches!(generalization_bound(&[1.0], &phi, 0.5, 0.05), Err(Error::InvalidBoundParameter(_))));
        assert!(matches!(generalization_bound(&[1.0], &phi, 1.0, 1.0), Err(Error::InvalidBoundParameter(_))));
    }

    #[test]
    fn subgradient_output_is_nonnegative() {
        let phi = PhiTensor::from_parts(2, 2, vec![0.0, 0.0, -1.0, 2.0, 0.5, -1.0, 0.0, 0.0], vec![0, 1]).unwrap();
        let w = subgradient_solve(&phi, 0.1, 1.0, 200).unwrap();
        assert!(w.iter().all(|&v| v >= 0.0));
        let w = subgradient_solve(&phi, 1e6, 1.0, 200).unwrap();
        assert!(w.iter().all(|&v| v < 1e-2));
    }

    #[test]
    fn schedule_validation() {
        let phi = single(1.0);
        let o = SolverOptions::default();
        assert!(tau_annealed_solve(&phi, 0.1, &[2.0, 4.0], true, &o).is_err());
        assert!(tau_annealed_solve(&phi, 0.1, &[1.0, 1.0], true, &o).is_err());
        assert_eq!(default_tau_schedule(), vec![1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0]);
    }
}

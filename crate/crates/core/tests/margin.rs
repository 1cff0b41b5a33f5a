#![allow(clippy::needless_range_loop)]

mod common;

use common::*;
use ecoc_agg::experiment::{run_gauss_once, GaussSettings, Encoding};
use ecoc_agg::margin::{
    default_tau_schedule, generalization_bound, hinge_and_margin, large_margin_objective, ramp, sandwich_gap,
    stiffened_objective, subgradient_solve, tau_annealed_solve, SUBGRADIENT_ITERS, SUBGRADIENT_STEP0,
};
use ecoc_agg::pdip::solve_objective;
use ecoc_agg::synthgen::{gen_gauss, gen_three_class, SynthConfig};
use ecoc_agg::{compute_phi, decode, solve, LossKind, ObjectiveConfig, SolverOptions};
use rand::Rng;

/// Hinge and stiffened loss of one example, straight from the discrepancies.
fn oracle_losses(rho: &[f64], y: usize, tau: f64) -> (f64, f64) {
    let scores: Vec<f64> = (0..rho.len()).map(|k| if k == y { 0.0 } else { 1.0 + rho[y] - rho[k] }).collect();
    let hinge = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let stiff = hinge + (scores.iter().map(|s| (tau * (s - hinge)).exp()).sum::<f64>()).ln() / tau;
    (hinge, stiff)
}

#[test]
fn hinge_and_margin_match_discrepancy_oracle() {
    let mut r = rng(31);
    for _ in 0..200 {
        let inst = random_instance(&mut r, 20);
        let w = random_weights(&mut r, inst.code.rows(), 3.0);
        let rep = hinge_and_margin(&w, &inst.phi, 0.0).unwrap();
        for i in 0..inst.labels.len() {
            let y = inst.labels[i];
            let rho = rho_oracle(&inst.code, inst.q.row(i), &w, inst.kind);
            let margin = (0..rho.len()).filter(|&k| k != y).map(|k| rho[k] - rho[y]).fold(f64::INFINITY, f64::min);
            assert!((rep.margins[i] - margin).abs() < 1e-10);
            let (hinge, _) = oracle_losses(&rho, y, 1.0);
            assert!((rep.hinge_values[i] - hinge).abs() < 1e-10);
            assert!((hinge - (1.0 - margin).max(0.0)).abs() < 1e-10);
            // hinge >= ramp >= 0-1 loss
            let zero_one = if margin <= 0.0 { 1.0 } else { 0.0 };
            assert!(rep.hinge_values[i] >= ramp(rep.margins[i]) && ramp(rep.margins[i]) >= zero_one);
        }
    }
}

#[test]
fn sandwich_inequalities_hold() {
    let mut r = rng(32);
    for t in 0..400 {
        let k = [3, 5, 10][t % 3];
        let code = if k == 10 { random_code(&mut r, 10, 12) } else { random_code(&mut r, k, 6) };
        let n = r.random_range(1..=15);
        let q = random_q(&mut r, n, code.rows(), 1e-3);
        let labels = random_labels(&mut r, n, k);
        let phi = compute_phi(&code, &q, &labels, LossKind::CrossEntropy).unwrap();
        let w = random_weights(&mut r, code.rows(), 4.0);
        let tau = [1.0, 4.0, 16.0, 64.0][t % 4];
        let bound = (k as f64).ln() / tau;
        let gap = sandwich_gap(&w, &phi, tau).unwrap();
        assert!(gap >= 0.0 && gap <= bound, "gap {gap} bound {bound}");
        let diff = stiffened_objective(&w, &phi, 0.1, tau).unwrap() - large_margin_objective(&w, &phi, 0.1).unwrap();
        assert!(diff.abs() <= bound);
        for i in 0..n {
            let rho = rho_oracle(&code, q.row(i), &w, LossKind::CrossEntropy);
            let (h, l) = oracle_losses(&rho, labels[i], tau);
            assert!(l - h >= 0.0 && l - h <= bound);
        }
    }
}

#[test]
fn subgradient_output_is_feasible_and_shrinks_under_huge_lambda() {
    let f = gen_three_class(4);
    let phi = compute_phi(&f.code, &f.q, &f.labels, LossKind::CrossEntropy).unwrap();
    let w = subgradient_solve(&phi, 1e6, SUBGRADIENT_STEP0, 200).unwrap();
    assert!(w.iter().all(|&v| (0.0..1e-2).contains(&v)));
    let w = subgradient_solve(&phi, 1e-4, SUBGRADIENT_STEP0, 500).unwrap();
    assert!(w.iter().all(|&v| v >= 0.0));
}

#[test]
fn subgradient_and_annealed_interior_point_agree_within_five_percent() {
    let lambda = 1e-2;
    for seed in 0..3 {
        let f = gen_three_class(seed);
        let phi = compute_phi(&f.code, &f.q, &f.labels, LossKind::CrossEntropy).unwrap();
        let sub = subgradient_solve(&phi, lambda, SUBGRADIENT_STEP0, SUBGRADIENT_ITERS).unwrap();
        let annealed = tau_annealed_solve(&phi, lambda, &default_tau_schedule(), true, &SolverOptions::default()).unwrap();
        let a = large_margin_objective(&sub, &phi, lambda).unwrap();
        let b = large_margin_objective(&annealed.w, &phi, lambda).unwrap();
        assert!((a - b).abs() <= 0.05 * b, "subgradient {a} vs annealed {b}");
        assert!(annealed.w.iter().all(|&v| v >= 0.0));
    }
}

#[test]
fn annealed_solution_is_within_the_final_gap_of_the_hinge_objective() {
    let f = gen_three_class(5);
    let phi = compute_phi(&f.code, &f.q, &f.labels, LossKind::CrossEntropy).unwrap();
    let schedule = default_tau_schedule();
    let rep = tau_annealed_solve(&phi, 1e-3, &schedule, true, &SolverOptions::default()).unwrap();
    let tau = *schedule.last().unwrap();
    let f_tau = stiffened_objective(&rep.w, &phi, 1e-3, tau).unwrap();
    let f_lm = large_margin_objective(&rep.w, &phi, 1e-3).unwrap();
    assert!((f_tau - f_lm).abs() <= 3f64.ln() / tau);
    assert!(rep.stages.iter().all(|s| s.objective_trace.iter().all(|v| v.is_finite())));
}

#[test]
fn warm_started_stages_need_no_more_iterations_than_cold_starts() {
    let f = gen_three_class(6);
    let phi = compute_phi(&f.code, &f.q, &f.labels, LossKind::CrossEntropy).unwrap();
    let opts = SolverOptions::default();
    let schedule = default_tau_schedule();
    let rep = tau_annealed_solve(&phi, 1e-3, &schedule, true, &opts).unwrap();
    for (stage, &tau) in rep.stages.iter().zip(&schedule).skip(1) {
        let cold = solve_objective(&phi, &ObjectiveConfig::stiffened(1e-3, tau), None, &opts).unwrap();
        assert!(stage.iterations <= cold.iterations, "tau {tau}: warm {} cold {}", stage.iterations, cold.iterations);
    }
}

#[test]
fn single_stage_without_cost_is_the_plain_solve() {
    let f = gen_three_class(2);
    let phi = compute_phi(&f.code, &f.q, &f.labels, LossKind::CrossEntropy).unwrap();
    let opts = SolverOptions::default();
    let rep = tau_annealed_solve(&phi, 1e-4, &[1.0], false, &opts).unwrap();
    assert_eq!(rep.w, solve(&phi, 1e-4, &opts).unwrap().w_star);
}

#[test]
fn bound_exceeds_observed_test_error() {
    let opts = SolverOptions::default();
    let settings = GaussSettings::new(3, Encoding::Aps, 1, 0);
    let (train, test) = gen_gauss(&SynthConfig::new(0, 3)).unwrap();
    let code = ecoc_agg::gen_allpairs(3).unwrap();
    let (models, q_train) = ecoc_agg::train_binary_problems(&train, &code, settings.base_reg).unwrap();
    let phi = compute_phi(&code, &q_train, train.labels(), LossKind::CrossEntropy).unwrap();
    let w = solve(&phi, settings.lambda, &opts).unwrap().w_star;
    let q_test = ecoc_agg::base::score(opts.exec, &models, &test).unwrap();
    let post = decode::posteriors(&w, &code, &q_test, LossKind::CrossEntropy).unwrap();
    let test_error = 1.0 - decode::metrics(test.labels(), &post).unwrap().accuracy;
    let rep = generalization_bound(&w, &phi, norm(&w), 0.05).unwrap();
    assert!(rep.total >= test_error, "bound {} < test error {test_error}", rep.total);
    assert!(rep.empirical_loss >= 0.0 && rep.complexity_term >= 0.0 && rep.confidence_term >= 0.0);
    // The shared driver reproduces the same split and accuracy.
    let once = run_gauss_once(&settings, 0, &opts).unwrap();
    assert!((once.convex - (1.0 - test_error)).abs() < 1e-12);
}

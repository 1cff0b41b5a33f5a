//! Random instances and definition-level oracles shared by the integration
//! tests. The oracles recompute everything from the code matrix and Q
//! directly, never through the φ tensor.

#![allow(dead_code)]

use ecoc_agg::encoding::{gen_allpairs, gen_ecoc, gen_ova, CodeEntry, CodeMatrix, Scheme};
use ecoc_agg::{compute_phi, LossKind, PhiTensor, ProbMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Oracle loss, written out from the definitions.
pub fn d(entry: CodeEntry, q: f64, kind: LossKind) -> f64 {
    let q = q.clamp(1e-12, 1.0 - 1e-12);
    match (kind, entry) {
        (LossKind::CrossEntropy, CodeEntry::Pos) => -q.ln(),
        (LossKind::CrossEntropy, CodeEntry::Neg) => -(1.0 - q).ln(),
        (LossKind::CrossEntropy, CodeEntry::DontCare) => 0.0,
        (LossKind::Exponential, CodeEntry::Pos) => (-(q - 0.5)).exp(),
        (LossKind::Exponential, CodeEntry::Neg) => (q - 0.5).exp(),
        (LossKind::Exponential, CodeEntry::DontCare) => 1.0,
    }
}

/// `ρ_k = Σ_j w_j d(C_{j,k}, q_j)` for every class.
pub fn rho_oracle(code: &CodeMatrix, q: &[f64], w: &[f64], kind: LossKind) -> Vec<f64> {
    (0..code.classes())
        .map(|k| (0..code.rows()).map(|j| w[j] * d(code.entry(j, k), q[j], kind)).sum())
        .collect()
}

/// Naive softmax of `-ρ` (fine for the moderate values used in tests).
pub fn posterior_oracle(code: &CodeMatrix, q: &[f64], w: &[f64], kind: LossKind) -> Vec<f64> {
    let rho = rho_oracle(code, q, w, kind);
    let e: Vec<f64> = rho.iter().map(|r| (-r).exp()).collect();
    let z: f64 = e.iter().sum();
    e.iter().map(|v| v / z).collect()
}

/// `f_0(w) = -(1/N) Σ_i log P(y_i | q_i, w) + λ/2 ‖w‖²`, via log-sum-exp.
pub fn f0_oracle(code: &CodeMatrix, q: &ProbMatrix, labels: &[usize], w: &[f64], kind: LossKind, lambda: f64) -> f64 {
    let n = q.examples();
    let mut total = 0.0;
    for i in 0..n {
        let rho = rho_oracle(code, q.row(i), w, kind);
        let min = rho.iter().copied().fold(f64::INFINITY, f64::min);
        let lse = -min + rho.iter().map(|r| (min - r).exp()).sum::<f64>().ln();
        total += rho[labels[i]] + lse;
    }
    total / n as f64 + 0.5 * lambda * w.iter().map(|x| x * x).sum::<f64>()
}

/// Random valid code matrix with `k` classes and `m` rows (DontCare 1/2,
/// Pos 1/4, Neg 1/4, redrawn until valid).
pub fn random_code(r: &mut ChaCha8Rng, k: usize, m: usize) -> CodeMatrix {
    loop {
        let rows: Vec<Vec<CodeEntry>> = (0..m)
            .map(|_| {
                (0..k)
                    .map(|_| match r.random_range(0..4) {
                        0 | 1 => CodeEntry::DontCare,
                        2 => CodeEntry::Pos,
                        _ => CodeEntry::Neg,
                    })
                    .collect()
            })
            .collect();
        if let Ok(c) = CodeMatrix::new(Scheme::EcocSparseRandom, rows) {
            return c;
        }
    }
}

/// A code matrix from one of the structured schemes or a random sparse one,
/// with `K ≤ 5` and `M ≤ 8`.
pub fn small_code(r: &mut ChaCha8Rng) -> CodeMatrix {
    match r.random_range(0..4) {
        0 => gen_ova(r.random_range(3..=5)).unwrap(),
        1 => gen_allpairs(r.random_range(3..=4)).unwrap(),
        2 => gen_ecoc(r.random_range(3..=4), 0).unwrap(),
        _ => {
            let k = r.random_range(3..=5);
            let m = r.random_range(4..=8);
            random_code(r, k, m)
        }
    }
}

/// Random probabilities in `[lo, 1 - lo]`.
pub fn random_q(r: &mut ChaCha8Rng, n: usize, m: usize, lo: f64) -> ProbMatrix {
    let values = (0..n * m).map(|_| r.random_range(lo..=1.0 - lo)).collect();
    ProbMatrix::new(n, m, values).unwrap()
}

pub fn random_labels(r: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<usize> {
    (0..n).map(|_| r.random_range(0..k)).collect()
}

pub fn random_weights(r: &mut ChaCha8Rng, m: usize, hi: f64) -> Vec<f64> {
    (0..m).map(|_| r.random_range(0.0..hi)).collect()
}

pub struct Instance {
    pub code: CodeMatrix,
    pub q: ProbMatrix,
    pub labels: Vec<usize>,
    pub kind: LossKind,
    pub phi: PhiTensor,
}

/// Random instance with `N ≤ max_n`, `K ≤ 5`, `M ≤ 8`.
pub fn random_instance(r: &mut ChaCha8Rng, max_n: usize) -> Instance {
    let code = small_code(r);
    let n = r.random_range(2..=max_n);
    let q = random_q(r, n, code.rows(), 0.02);
    let labels = random_labels(r, n, code.classes());
    let kind = if r.random_bool(0.5) { LossKind::CrossEntropy } else { LossKind::Exponential };
    let phi = compute_phi(&code, &q, &labels, kind).unwrap();
    Instance { code, q, labels, kind, phi }
}

/// Informative instance: Q agrees with the code for the true class with
/// probability 0.8, so the likelihood optimum is finite and moderate.
pub fn informative_instance(r: &mut ChaCha8Rng, code: CodeMatrix, n: usize, kind: LossKind) -> Instance {
    let labels = random_labels(r, n, code.classes());
    let mut values = Vec::with_capacity(n * code.rows());
    for &y in &labels {
        for j in 0..code.rows() {
            let v: f64 = r.random_range(0.05..0.45);
            let agree = r.random_bool(0.8);
            values.push(match code.entry(j, y) {
                CodeEntry::Pos if agree => 1.0 - v,
                CodeEntry::Neg if !agree => 1.0 - v,
                CodeEntry::DontCare => r.random_range(0.05..0.95),
                _ => v,
            });
        }
    }
    let q = ProbMatrix::new(n, code.rows(), values).unwrap();
    let phi = compute_phi(&code, &q, &labels, kind).unwrap();
    Instance { code, q, labels, kind, phi }
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(b).max(f64::MIN_POSITIVE)
}

/// Minimum of a convex function of two variables over the grid
/// `{0, h, 2h, ..., hi}²`: for each first coordinate, a discrete convex
/// search over the second. Exact on the grid for convex `f`.
pub fn grid_min(f: impl Fn(f64, f64) -> f64, hi: f64, h: f64) -> (f64, f64, f64) {
    let steps = (hi / h).round() as usize;
    let at = |i: usize| i as f64 * h;
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for a in 0..=steps {
        let x = at(a);
        let g = |b: usize| f(x, at(b));
        // Smallest b with g(b) <= g(b + 1).
        let (mut lo, mut hi_idx) = (0usize, steps);
        while lo < hi_idx {
            let mid = (lo + hi_idx) / 2;
            if g(mid) <= g(mid + 1) {
                hi_idx = mid;
            } else {
                lo = mid + 1;
            }
        }
        let v = g(lo);
        if v < best.0 {
            best = (v, x, at(lo));
        }
    }
    best
}

//! Synthetic fixtures: the three-class problem with one broken pairwise
//! classifier, and K-class 2D Gaussian blobs.
//!
//! Randomness comes from `ChaCha8Rng::seed_from_u64(seed)`. The Gaussian
//! generator splits one seed into independent streams: stream 0 draws the
//! class means, stream 1 the training samples, stream 2 the test samples.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::base::Dataset;
use crate::discrepancy::ProbMatrix;
use crate::encoding::{gen_allpairs, CodeMatrix};
use crate::{Error, Result};

pub const THREE_CLASS_PER_CLASS: usize = 100;
pub const GAUSS_DIM: usize = 2;
pub const GAUSS_MEAN_RANGE: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    #[serde(rename = "K")]
    pub k: usize,
    pub per_class_train: usize,
    pub per_class_test: usize,
}

impl SynthConfig {
    pub fn new(seed: u64, k: usize) -> Self {
        SynthConfig { seed, k, per_class_train: 300, per_class_test: 1000 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 3 {
            return Err(Error::InvalidClassCount(self.k));
        }
        if self.per_class_train == 0 || self.per_class_test == 0 {
            return Err(Error::InvalidConfig("per-class sample counts must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ThreeClassFixture {
    pub q: ProbMatrix,
    pub labels: Vec<usize>,
    pub code: CodeMatrix,
}

fn r(v: f64) -> f64 {
    if v > 0.5 {
        1.0
    } else {
        -1.0
    }
}

/// 300 examples, 100 per class in label order. For each example the draws
/// are `u1, u2, u3, v` in that order. Rows of the code are (1,2), (1,3), (2,3);
/// the third classifier outputs noise symmetric about 0.5.
pub fn gen_three_class(seed: u64) -> ThreeClassFixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 3 * THREE_CLASS_PER_CLASS;
    let mut values = Vec::with_capacity(n * 3);
    let mut labels = Vec::with_capacity(n);
    for class in 0..3 {
        for _ in 0..THREE_CLASS_PER_CLASS {
            let u1: f64 = rng.random();
            let u2: f64 = rng.random();
            let u3: f64 = rng.random();
            let v: f64 = rng.random();
            let (q1, q2, q3) = match class {
                0 => (0.9 + 0.1 * u1, 0.6 + 0.4 * u2, u3),
                1 => (0.1 + 0.1 * u1, u2, 0.5 + 0.5 * r(v) * u3),
                _ => (u1, 0.1 + 0.1 * u2, 0.5 + 0.5 * r(v) * u3),
            };
            values.extend_from_slice(&[q1, q2, q3]);
            labels.push(class);
        }
    }
    let q = ProbMatrix::new(n, 3, values).expect("affine maps stay in [0, 1]");
    let code = gen_allpairs(3).expect("K = 3 is valid");
    ThreeClassFixture { q, labels, code }
}

fn sample(rng: &mut ChaCha8Rng, means: &[[f64; GAUSS_DIM]], per_class: usize, k: usize) -> Dataset {
    let mut features = Vec::with_capacity(k * per_class * GAUSS_DIM);
    let mut labels = Vec::with_capacity(k * per_class);
    for (class, mean) in means.iter().enumerate() {
        for _ in 0..per_class {
            for m in mean {
                let z: f64 = rng.sample(StandardNormal);
                features.push(m + z);
            }
            labels.push(class);
        }
    }
    Dataset::new(features, GAUSS_DIM, labels, k).expect("generated dataset is well formed")
}

/// Class means uniform on `[0, 20]^2`, identity covariance.
pub fn gen_gauss(cfg: &SynthConfig) -> Result<(Dataset, Dataset)> {
    cfg.validate()?;
    let stream = |s: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(s);
        rng
    };
    let mut mean_rng = stream(0);
    let means: Vec<[f64; GAUSS_DIM]> = (0..cfg.k)
        .map(|_| {
            let mut m = [0.0; GAUSS_DIM];
            m.iter_mut().for_each(|x| *x = mean_rng.random_range(0.0..=GAUSS_MEAN_RANGE));
            m
        })
        .collect();
    let train = sample(&mut stream(1), &means, cfg.per_class_train, cfg.k);
    let test = sample(&mut stream(2), &means, cfg.per_class_test, cfg.k);
    Ok((train, test))
}

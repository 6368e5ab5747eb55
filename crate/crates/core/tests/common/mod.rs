#![allow(dead_code)]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use thief_core::linalg::Matrix;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// `B B' / p + 0.1 I` with Gaussian `B`.
pub fn random_spd(rng: &mut ChaCha8Rng, p: usize) -> Matrix {
    let b = Matrix::from_fn(p, p, |_, _| normal(rng));
    let mut a = b.matmul(&b.transpose()).unwrap().scaled(1.0 / p as f64);
    for i in 0..p {
        a[(i, i)] += 0.1;
    }
    a
}

/// Independent OLS projection `S pinv(S) b` via nalgebra's SVD.
pub fn pinv_projection(s: &Matrix, base: &[f64]) -> Vec<f64> {
    let sm = nalgebra::DMatrix::from_row_slice(s.rows(), s.cols(), s.as_slice());
    let pinv = sm.clone().pseudo_inverse(1e-12).unwrap();
    let b = nalgebra::DVector::from_column_slice(base);
    (sm * (pinv * b)).iter().copied().collect()
}

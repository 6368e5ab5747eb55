mod common;

use common::{normal, pinv_projection, random_spd, rng};
use thief_core::linalg::{Cholesky, Matrix};
use thief_core::reconcile::{estimate_covariance, reconcile, ErrorHistory, Reconciler, ShrunkCovariance};
use thief_core::{Hierarchy, SummingMatrix};

fn identity_w() -> ShrunkCovariance {
    ShrunkCovariance::from_matrix(Matrix::identity(60)).unwrap()
}

fn random_base(r: &mut rand_chacha::ChaCha8Rng) -> Vec<f64> {
    (0..60).map(|_| 50.0 + 30.0 * normal(r)).collect()
}

#[test]
fn identity_weights_match_pseudo_inverse_projection() {
    let s = SummingMatrix::daily();
    let rec = Reconciler::new(&identity_w(), &s).unwrap();
    let mut r = rng(1);
    for _ in 0..50 {
        let base = random_base(&mut r);
        let ours = rec.reconcile(&base).unwrap();
        let oracle = pinv_projection(s.matrix(), &base);
        for (a, b) in ours.iter().zip(&oracle) {
            assert!((a - b).abs() <= 1e-8, "{a} vs {b}");
        }
    }
}

#[test]
fn coherent_input_is_a_fixed_point_and_projection_is_idempotent() {
    let s = SummingMatrix::daily();
    let h = Hierarchy::daily();
    let mut r = rng(2);
    for _ in 0..10 {
        let w = ShrunkCovariance::from_matrix(random_spd(&mut r, 60)).unwrap();
        let rec = Reconciler::new(&w, &s).unwrap();
        let p: Vec<f64> = (0..24).map(|_| 40.0 + 20.0 * normal(&mut r)).collect();
        let coherent = h.aggregate(&p).unwrap();
        let out = rec.reconcile(&coherent).unwrap();
        for (a, b) in out.iter().zip(coherent.iter()) {
            assert!((a - b).abs() <= 1e-10 * b.abs().max(1.0));
        }
        let base = random_base(&mut r);
        let once = rec.reconcile(&base).unwrap();
        let twice = rec.reconcile(&once).unwrap();
        for (a, b) in once.iter().zip(twice.iter()) {
            assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
        }
        assert!(h.coherence_error(&once) <= 1e-9);
    }
}

#[test]
fn reconciliation_is_scale_equivariant() {
    let s = SummingMatrix::daily();
    let mut r = rng(3);
    let wm = random_spd(&mut r, 60);
    let base = random_base(&mut r);
    let alpha = 3.5;
    let w = ShrunkCovariance::from_matrix(wm.clone()).unwrap();
    let w_scaled = ShrunkCovariance::from_matrix(wm.scaled(alpha * alpha)).unwrap();
    let scaled_base: Vec<f64> = base.iter().map(|v| alpha * v).collect();
    let reference = reconcile(&base, &w, &s).unwrap();
    let a = reconcile(&scaled_base, &w_scaled, &s).unwrap();
    let b = reconcile(&scaled_base, &w, &s).unwrap();
    for i in 0..60 {
        let target = alpha * reference[i];
        assert!((a[i] - target).abs() <= 1e-9 * target.abs().max(1.0));
        assert!((b[i] - target).abs() <= 1e-9 * target.abs().max(1.0));
    }
}

#[test]
fn reconciliation_preserves_unbiasedness() {
    let s = SummingMatrix::daily();
    let h = Hierarchy::daily();
    let mut r = rng(4);
    let wm = random_spd(&mut r, 60);
    let chol = Cholesky::new(&wm).unwrap();
    let rec = Reconciler::new(&ShrunkCovariance::from_matrix(wm.clone()).unwrap(), &s).unwrap();
    let p_true: Vec<f64> = (0..24).map(|i| 30.0 + i as f64).collect();
    let truth = h.aggregate(&p_true).unwrap();
    let draws = 10_000;
    let mut sum = vec![0.0; 60];
    let mut sumsq = vec![0.0; 60];
    for _ in 0..draws {
        let z: Vec<f64> = (0..60).map(|_| normal(&mut r)).collect();
        let eps = chol.factor().matvec(&z).unwrap();
        let base: Vec<f64> = truth.iter().zip(&eps).map(|(t, e)| t + e).collect();
        let out = rec.reconcile(&base).unwrap();
        for i in 0..60 {
            let d = out[i] - truth[i];
            sum[i] += d;
            sumsq[i] += d * d;
        }
    }
    let n = draws as f64;
    for i in 0..60 {
        let mean = sum[i] / n;
        let se = ((sumsq[i] / n - mean * mean) / n).sqrt();
        assert!(mean.abs() <= 3.0 * se + 1e-12, "node {i}: bias {mean}, se {se}");
    }
}

fn history_from(rows: &[Vec<f64>], capacity: usize) -> ErrorHistory {
    let mut h = ErrorHistory::new(rows[0].len(), capacity);
    for row in rows {
        h.update_daily(row).unwrap();
    }
    h
}

#[test]
fn diagonal_truth_is_shrunk_strongly() {
    let mut r = rng(5);
    let rows: Vec<Vec<f64>> = (0..5000)
        .map(|_| (0..60).map(|j| (1.0 + j as f64 / 30.0) * normal(&mut r)).collect())
        .collect();
    let h = history_from(&rows, 5000);
    let cov = estimate_covariance(&h).unwrap();
    assert!(cov.lambda >= 0.5, "lambda {}", cov.lambda);
    assert!(cov.is_positive_definite());
    // off-diagonals pulled toward zero relative to the raw sample covariance
    let raw = estimate_raw(&rows);
    for i in 0..60 {
        for j in 0..i {
            assert!(cov.w[(i, j)].abs() <= raw[(i, j)].abs() + 1e-15);
        }
    }
    assert!(cov.w.asymmetry() <= 1e-12);
}

fn estimate_raw(rows: &[Vec<f64>]) -> Matrix {
    let n = rows.len() as f64;
    let p = rows[0].len();
    let mean: Vec<f64> = (0..p).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    Matrix::from_fn(p, p, |i, j| {
        rows.iter().map(|r| (r[i] - mean[i]) * (r[j] - mean[j])).sum::<f64>() / (n - 1.0)
    })
}

#[test]
fn common_factor_needs_little_shrinkage() {
    let mut r = rng(6);
    let rows: Vec<Vec<f64>> = (0..5000)
        .map(|_| {
            let f = 3.0 * normal(&mut r);
            (0..60).map(|_| f + normal(&mut r)).collect()
        })
        .collect();
    let h = history_from(&rows, 5000);
    let cov = estimate_covariance(&h).unwrap();
    assert!(cov.lambda <= 0.2, "lambda {}", cov.lambda);
    assert!(cov.is_positive_definite());
    let raw = estimate_raw(&rows);
    for i in 0..60 {
        for j in 0..60 {
            let expected = if i == j { raw[(i, j)] } else { (1.0 - cov.lambda) * raw[(i, j)] };
            assert!((cov.w[(i, j)] - expected).abs() <= 1e-9 * raw[(i, i)]);
        }
    }
}

#[test]
fn rolling_update_matches_recomputation() {
    let mut r = rng(7);
    let rows: Vec<Vec<f64>> = (0..101)
        .map(|_| (0..60).map(|_| normal(&mut r)).collect())
        .collect();
    let mut h = history_from(&rows[..100], 100);
    let before = h.estimate_covariance().unwrap();
    h.update_daily(&rows[100]).unwrap();
    let after = h.estimate_covariance().unwrap();
    let scratch = history_from(&rows[1..], 100).estimate_covariance().unwrap();
    assert_eq!(after, scratch);
    assert_ne!(after.w, before.w);

    // appending a copy of the evicted row restores the original sample
    let mut h2 = history_from(&rows[..100], 100);
    h2.update_daily(&rows[0]).unwrap();
    let cycled = h2.estimate_covariance().unwrap();
    for (a, b) in cycled.w.as_slice().iter().zip(before.w.as_slice()) {
        assert!((a - b).abs() <= 1e-12);
    }
}

#[test]
fn few_observations_still_give_positive_definite_weights() {
    let mut r = rng(8);
    let rows: Vec<Vec<f64>> = (0..30)
        .map(|_| {
            let f = normal(&mut r);
            (0..60).map(|_| f + normal(&mut r)).collect()
        })
        .collect();
    let cov = history_from(&rows, 1092).estimate_covariance().unwrap();
    assert!(cov.lambda > 0.0 && cov.lambda <= 1.0);
    assert!(cov.is_positive_definite());
    Reconciler::new(&cov, &SummingMatrix::daily()).unwrap();
}

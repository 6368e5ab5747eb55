//! Covariance-weighted reconciliation of base forecasts.
//!
//! Given base forecasts `b` for every hierarchy node, the reconciled vector
//! is `S (S' W^-1 S)^-1 S' W^-1 b`, where `W` is a shrunk estimate of the
//! base-error covariance. The projection is evaluated with two Cholesky
//! factorizations (of `W` and of the bottom-level Gram matrix); no inverse
//! is ever formed.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{check_finite, Error, Result};
use crate::hierarchy::{HierarchyVector, SummingMatrix};
use crate::linalg::{self, Cholesky, Matrix};

/// Floor for zero-variance diagonal entries of the sample covariance.
pub const VARIANCE_FLOOR: f64 = 1e-8;

/// Largest accepted condition number of `S' W^-1 S`.
pub const MAX_CONDITION: f64 = 1e12;

/// Default number of retained days in an [`ErrorHistory`].
pub const DEFAULT_CAPACITY: usize = 1092;

/// Rolling window of daily base-forecast errors (forecast minus actual),
/// one row per day in canonical block order.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorHistory {
    width: usize,
    capacity: usize,
    rows: VecDeque<Vec<f64>>,
}

impl ErrorHistory {
    pub fn new(width: usize, capacity: usize) -> Self {
        Self {
            width,
            capacity: capacity.max(1),
            rows: VecDeque::with_capacity(capacity.min(4096)),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.rows.iter().map(|r| r.as_slice())
    }

    /// Appends one day's errors, evicting the oldest day beyond capacity.
    pub fn update_daily(&mut self, errors: &[f64]) -> Result<()> {
        if errors.len() != self.width {
            return Err(Error::Dimension {
                expected: self.width,
                got: errors.len(),
            });
        }
        check_finite(errors)?;
        if self.rows.len() == self.capacity {
            self.rows.pop_front();
        }
        self.rows.push_back(errors.to_vec());
        Ok(())
    }

    pub fn estimate_covariance(&self) -> Result<ShrunkCovariance> {
        estimate_covariance(self)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShrunkCovariance {
    /// `(1 - lambda) * sample + lambda * diag(sample)`.
    pub w: Matrix,
    pub lambda: f64,
    /// Diagonal of the sample covariance (the shrinkage target).
    pub target: Vec<f64>,
    /// Blocks whose sample variance was floored at [`VARIANCE_FLOOR`].
    pub floored: Vec<usize>,
    pub observations: usize,
}

impl ShrunkCovariance {
    /// Wraps a known covariance matrix (no shrinkage).
    pub fn from_matrix(w: Matrix) -> Result<Self> {
        if w.rows() != w.cols() {
            return Err(Error::Dimension {
                expected: w.rows(),
                got: w.cols(),
            });
        }
        let target = (0..w.rows()).map(|i| w[(i, i)]).collect();
        Ok(Self {
            w,
            lambda: 0.0,
            target,
            floored: Vec::new(),
            observations: 0,
        })
    }

    pub fn is_positive_definite(&self) -> bool {
        Cholesky::new(&self.w).is_ok()
    }
}

/// Sample covariance shrunk toward its own diagonal.
///
/// The intensity is `sum_{i!=j} Var(s_ij) / sum_{i!=j} s_ij^2`, clamped to
/// `[0, 1]`, where `Var(s_ij)` is the empirical variance of the cross
/// products that make up `s_ij`.
pub fn estimate_covariance(history: &ErrorHistory) -> Result<ShrunkCovariance> {
    let n = history.len();
    let p = history.width();
    if n < 2 {
        return Err(Error::WindowTooShort { got: n, need: 2 });
    }
    let nf = n as f64;
    let mut mean = vec![0.0; p];
    for row in history.rows() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= nf);
    let centered: Vec<Vec<f64>> = history
        .rows()
        .map(|r| r.iter().zip(&mean).map(|(v, m)| v - m).collect())
        .collect();

    let mut sample = Matrix::zeros(p, p);
    for row in &centered {
        for i in 0..p {
            let ri = row[i];
            for j in 0..=i {
                sample[(i, j)] += ri * row[j];
            }
        }
    }
    for i in 0..p {
        for j in 0..=i {
            let v = sample[(i, j)] / (nf - 1.0);
            sample[(i, j)] = v;
            sample[(j, i)] = v;
        }
    }

    // Var(s_ij) = n / (n-1)^3 * sum_k (x_ki x_kj - mean_k(x_ki x_kj))^2
    let mut num = 0.0;
    let mut den = 0.0;
    let scale = nf / ((nf - 1.0) * (nf - 1.0) * (nf - 1.0));
    for i in 0..p {
        for j in 0..i {
            let wbar = sample[(i, j)] * (nf - 1.0) / nf;
            let ss: f64 = centered
                .iter()
                .map(|r| {
                    let d = r[i] * r[j] - wbar;
                    d * d
                })
                .sum();
            num += 2.0 * scale * ss;
            den += 2.0 * sample[(i, j)] * sample[(i, j)];
        }
    }
    let lambda = if den > 0.0 {
        (num / den).clamp(0.0, 1.0)
    } else if num > 0.0 {
        1.0
    } else {
        0.0
    };

    let mut floored = Vec::new();
    let mut target = Vec::with_capacity(p);
    for i in 0..p {
        if !(sample[(i, i)] > VARIANCE_FLOOR) {
            sample[(i, i)] = VARIANCE_FLOOR;
            floored.push(i);
        }
        target.push(sample[(i, i)]);
    }
    let w = Matrix::from_fn(p, p, |i, j| {
        if i == j {
            target[i]
        } else {
            (1.0 - lambda) * sample[(i, j)]
        }
    });
    Ok(ShrunkCovariance {
        w,
        lambda,
        target,
        floored,
        observations: n,
    })
}

/// Factorized reconciliation operator for one `(W, S)` pair, reusable
/// across many base vectors.
#[derive(Debug, Clone)]
pub struct Reconciler {
    s: SummingMatrix,
    /// `W^-1 S`, nodes x bottom.
    winv_s: Matrix,
    gram: Cholesky,
    condition: f64,
}

impl Reconciler {
    pub fn new(w: &ShrunkCovariance, s: &SummingMatrix) -> Result<Self> {
        let (m, k) = (s.nodes(), s.bottom());
        if w.w.rows() != m {
            return Err(Error::Dimension {
                expected: m,
                got: w.w.rows(),
            });
        }
        let chol_w = Cholesky::new(&w.w)?;
        let sm = s.matrix();
        let mut winv_s = Matrix::zeros(m, k);
        for c in 0..k {
            let z = chol_w.solve(&sm.column(c));
            for (r, v) in z.into_iter().enumerate() {
                winv_s[(r, c)] = v;
            }
        }
        let mut gram = sm.transpose().matmul(&winv_s)?;
        for i in 0..k {
            for j in 0..i {
                let v = 0.5 * (gram[(i, j)] + gram[(j, i)]);
                gram[(i, j)] = v;
                gram[(j, i)] = v;
            }
        }
        let eig = linalg::symmetric_eigenvalues(&gram)?;
        let condition = if eig[0] > 0.0 {
            eig[k - 1] / eig[0]
        } else {
            f64::INFINITY
        };
        if !(condition <= MAX_CONDITION) {
            return Err(Error::Singular { condition });
        }
        let gram = Cholesky::new(&gram).map_err(|_| Error::Singular { condition })?;
        Ok(Self {
            s: s.clone(),
            winv_s,
            gram,
            condition,
        })
    }

    /// Condition number of `S' W^-1 S`.
    pub fn condition(&self) -> f64 {
        self.condition
    }

    /// Reconciled bottom-level values `(S' W^-1 S)^-1 S' W^-1 b`.
    pub fn bottom(&self, base: &[f64]) -> Result<Vec<f64>> {
        let m = self.s.nodes();
        if base.len() != m {
            return Err(Error::Dimension {
                expected: m,
                got: base.len(),
            });
        }
        check_finite(base)?;
        let rhs = self.winv_s.transpose().matvec(base)?;
        Ok(self.gram.solve(&rhs))
    }

    pub fn reconcile(&self, base: &[f64]) -> Result<HierarchyVector> {
        let bottom = self.bottom(base)?;
        self.s.apply(&bottom)
    }
}

/// One-shot reconciliation of a single base vector.
pub fn reconcile(base: &[f64], w: &ShrunkCovariance, s: &SummingMatrix) -> Result<HierarchyVector> {
    Reconciler::new(w, s)?.reconcile(base)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn history_evicts_oldest() {
        let mut h = ErrorHistory::new(2, 3);
        assert!(h.is_empty());
        h.update_daily(&[1.0, 1.0]).unwrap();
        assert_eq!(h.len(), 1);
        for v in 2..=4 {
            h.update_daily(&[v as f64, 0.0]).unwrap();
        }
        assert_eq!(h.len(), 3);
        let first: Vec<f64> = h.rows().map(|r| r[0]).collect();
        assert_eq!(first, vec![2.0, 3.0, 4.0]);
        assert!(h.update_daily(&[1.0]).is_err());
        assert!(h.update_daily(&[1.0, f64::NAN]).is_err());
    }

    #[test]
    fn two_mirrored_rows_need_no_shrinkage() {
        let mut h = ErrorHistory::new(3, 10);
        h.update_daily(&[1.0, -2.0, 0.5]).unwrap();
        h.update_daily(&[-1.0, 2.0, -0.5]).unwrap();
        let cov = estimate_covariance(&h).unwrap();
        assert_eq!(cov.lambda, 0.0);
        // Sample covariance of two points: (x1 - x2)(x1 - x2)' / 2.
        let d = [2.0, -4.0, 1.0];
        for i in 0..3 {
            for j in 0..3 {
                assert!((cov.w[(i, j)] - d[i] * d[j] / 2.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_variance_block_is_floored() {
        let mut h = ErrorHistory::new(2, 10);
        for v in [1.0, 2.0, 4.0] {
            h.update_daily(&[v, 0.0]).unwrap();
        }
        let cov = estimate_covariance(&h).unwrap();
        assert_eq!(cov.floored, vec![1]);
        assert_eq!(cov.w[(1, 1)], VARIANCE_FLOOR);
        assert!(cov.is_positive_definite());
    }

    #[test]
    fn single_row_is_rejected() {
        let mut h = ErrorHistory::new(2, 10);
        h.update_daily(&[1.0, 2.0]).unwrap();
        assert_eq!(
            estimate_covariance(&h).unwrap_err(),
            Error::WindowTooShort { got: 1, need: 2 }
        );
    }

    #[test]
    fn singular_weights_are_reported() {
        let s = SummingMatrix::daily();
        let mut w = Matrix::identity(60);
        // Huge spread of variances across hourly nodes makes S'W^-1S ill-conditioned.
        for i in 36..60 {
            w[(i, i)] = if i == 36 { 1e-14 } else { 1e6 };
        }
        for i in 0..36 {
            w[(i, i)] = 1e6;
        }
        let err = Reconciler::new(&ShrunkCovariance::from_matrix(w).unwrap(), &s).unwrap_err();
        assert!(matches!(err, Error::Singular { .. }), "{err:?}");
    }
}

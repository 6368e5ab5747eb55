//! Small dense linear algebra: row-major matrices, Cholesky factorization,
//! Householder least squares and a Jacobi eigenvalue solver.
//!
//! Sizes in this crate are tiny (at most 60x60 for covariances, ~1100x20
//! for regression designs) so plain loops are sufficient.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension {
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::Dimension {
                expected: self.cols,
                got: other.rows,
            });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let src = other.row(k);
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += a * s;
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::Dimension {
                expected: self.cols,
                got: x.len(),
            });
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), x)).collect())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    /// Largest absolute difference between `self` and its transpose.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.rows {
            for j in 0..i {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Lower-triangular Cholesky factor `L` with `A = L L^T`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: Matrix,
}

impl Cholesky {
    pub fn new(a: &Matrix) -> Result<Self> {
        let n = a.rows();
        if a.cols() != n {
            return Err(Error::Dimension {
                expected: n,
                got: a.cols(),
            });
        }
        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            let mut diag = a[(j, j)];
            for k in 0..j {
                diag -= l[(j, k)] * l[(j, k)];
            }
            if !(diag > 0.0) || !diag.is_finite() {
                return Err(Error::NotPositiveDefinite { pivot: j });
            }
            let ljj = libm::sqrt(diag);
            l[(j, j)] = ljj;
            for i in j + 1..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / ljj;
            }
        }
        Ok(Self { l })
    }

    pub fn factor(&self) -> &Matrix {
        &self.l
    }

    pub fn dim(&self) -> usize {
        self.l.rows()
    }

    /// Solves `L z = b` in place.
    pub fn solve_lower_in_place(&self, b: &mut [f64]) {
        let n = self.dim();
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= self.l[(i, k)] * b[k];
            }
            b[i] = s / self.l[(i, i)];
        }
    }

    /// Solves `L^T x = z` in place.
    pub fn solve_upper_in_place(&self, b: &mut [f64]) {
        let n = self.dim();
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in i + 1..n {
                s -= self.l[(k, i)] * b[k];
            }
            b[i] = s / self.l[(i, i)];
        }
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        self.solve_lower_in_place(b);
        self.solve_upper_in_place(b);
    }
}

/// Least-squares solution from a Householder QR factorization.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    pub coefficients: Vec<f64>,
    /// Diagonal of the triangular factor `R`, in column order.
    pub r_diagonal: Vec<f64>,
    /// Upper triangle of `R`, row-major `p x p`.
    pub r: Matrix,
}

/// Relative tolerance below which a column counts as linearly dependent on
/// the columns before it.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Minimizes `||X b - y||_2` with Householder reflections applied to a
/// column-major copy of `X`. The normal equations are never formed.
///
/// Columns whose residual norm after projecting out earlier columns falls
/// below `RANK_TOLERANCE` times their original norm are reported through
/// [`Error::RankDeficient`].
pub fn least_squares(x: &Matrix, y: &[f64]) -> Result<LeastSquares> {
    let (n, p) = (x.rows(), x.cols());
    if y.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: y.len(),
        });
    }
    if n < p {
        return Err(Error::InvalidInput(alloc::format!(
            "least squares needs at least as many rows ({n}) as columns ({p})"
        )));
    }
    let mut a: Vec<f64> = Vec::with_capacity(n * p);
    for j in 0..p {
        a.extend((0..n).map(|i| x[(i, j)]));
    }
    let mut rhs = y.to_vec();
    let original_norms: Vec<f64> = (0..p)
        .map(|j| libm::sqrt(a[j * n..(j + 1) * n].iter().map(|v| v * v).sum()))
        .collect();

    let mut deficient = Vec::new();
    let mut r = Matrix::zeros(p, p);
    let mut v = vec![0.0; n];
    for k in 0..p {
        let (head, tail) = a.split_at_mut((k + 1) * n);
        for i in 0..k {
            r[(i, k)] = head[k * n + i];
        }
        let col = &mut head[k * n + k..(k + 1) * n];
        let norm = libm::sqrt(col.iter().map(|v| v * v).sum());
        if original_norms[k] == 0.0 || norm <= RANK_TOLERANCE * original_norms[k] {
            deficient.push(k);
            continue;
        }
        let alpha = if col[0] > 0.0 { -norm } else { norm };
        let m = n - k;
        v[..m].copy_from_slice(col);
        v[0] -= alpha;
        let vnorm2: f64 = v[..m].iter().map(|t| t * t).sum();
        r[(k, k)] = alpha;
        if vnorm2 == 0.0 {
            continue;
        }
        let scale = 2.0 / vnorm2;
        for j in 0..p - k - 1 {
            let cj = &mut tail[j * n + k..(j + 1) * n];
            let s = dot(&v[..m], cj) * scale;
            for (c, vi) in cj.iter_mut().zip(&v[..m]) {
                *c -= s * vi;
            }
        }
        let s = dot(&v[..m], &rhs[k..]) * scale;
        for (c, vi) in rhs[k..].iter_mut().zip(&v[..m]) {
            *c -= s * vi;
        }
    }
    if !deficient.is_empty() {
        return Err(Error::RankDeficient {
            columns: deficient,
        });
    }

    let mut coef = vec![0.0; p];
    for i in (0..p).rev() {
        let mut s = rhs[i];
        for j in i + 1..p {
            s -= r[(i, j)] * coef[j];
        }
        coef[i] = s / r[(i, i)];
    }
    let r_diagonal = (0..p).map(|i| r[(i, i)]).collect();
    Ok(LeastSquares {
        coefficients: coef,
        r_diagonal,
        r,
    })
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn symmetric_eigenvalues(a: &Matrix) -> Result<Vec<f64>> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::Dimension {
            expected: n,
            got: a.cols(),
        });
    }
    let mut m = a.clone();
    for _sweep in 0..100 {
        let mut off = 0.0;
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                let v = m[(i, j)] * m[(i, j)];
                total += v;
                if i != j {
                    off += v;
                }
            }
        }
        if off <= 1e-30 * total || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + libm::sqrt(theta * theta + 1.0));
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / libm::sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
    eig.sort_by(|a, b| a.total_cmp(b));
    Ok(eig)
}

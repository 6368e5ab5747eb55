use alloc::vec::Vec;

use crate::error::{check_finite, Error, Result};
use crate::linalg::{self, Matrix};
use crate::transform::TransformParams;

/// Linear autoregression with exogenous inputs, fitted by least squares.
/// There is no intercept column: the weekday dummies span the constant.
#[derive(Debug, Clone, PartialEq)]
pub struct ArxModel {
    pub beta: Vec<f64>,
    /// `sqrt(SSR / (n - p))` in transformed units.
    pub residual_std: f64,
    /// Ratio of extreme singular values of the design matrix.
    pub condition_number: f64,
}

impl ArxModel {
    pub fn predict_transformed(&self, x: &[f64]) -> f64 {
        linalg::dot(&self.beta, x)
    }
}

pub fn fit_arx(x: &Matrix, y: &[f64]) -> Result<ArxModel> {
    let (n, p) = (x.rows(), x.cols());
    if n <= p {
        return Err(Error::InvalidInput(alloc::format!(
            "ARX needs more rows ({n}) than parameters ({p})"
        )));
    }
    check_finite(x.as_slice())?;
    check_finite(y)?;
    let ls = linalg::least_squares(x, y)?;
    let ssr: f64 = (0..n)
        .map(|i| {
            let e = y[i] - linalg::dot(x.row(i), &ls.coefficients);
            e * e
        })
        .sum();
    let gram = ls.r.transpose().matmul(&ls.r)?;
    let eig = linalg::symmetric_eigenvalues(&gram)?;
    let condition_number = libm::sqrt(eig[p - 1] / eig[0].max(f64::MIN_POSITIVE));
    Ok(ArxModel {
        beta: ls.coefficients,
        residual_std: libm::sqrt(ssr / (n - p) as f64),
        condition_number,
    })
}

/// `invert(beta . x)` in EUR/MWh.
pub fn predict_arx(model: &ArxModel, x: &[f64], target: &TransformParams) -> f64 {
    target.invert(model.predict_transformed(x))
}

//! Area hyperbolic sine standardization, `asinh((y - mu) / sigma)`, and its
//! inverse `sinh(z) * sigma + mu`.

use crate::error::{check_finite, Error, Result};

/// Floor applied to the standard deviation of a constant window.
pub const SIGMA_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformParams {
    pub mu: f64,
    pub sigma: f64,
    /// Set when the fitting window had (numerically) zero spread and
    /// `sigma` was floored.
    pub degenerate: bool,
}

impl TransformParams {
    pub fn new(mu: f64, sigma: f64) -> Self {
        Self {
            mu,
            sigma,
            degenerate: false,
        }
    }

    /// Sample mean and standard deviation (divisor `n - 1`), two-pass.
    pub fn fit(window: &[f64]) -> Result<Self> {
        if window.len() < 2 {
            return Err(Error::WindowTooShort {
                got: window.len(),
                need: 2,
            });
        }
        check_finite(window)?;
        Ok(Self::fit_iter(window.iter().copied(), window.len()))
    }

    /// Same as [`fit`](Self::fit) for an iterator the caller has already
    /// validated; `len` must equal the number of items.
    pub(crate) fn fit_iter<I: Iterator<Item = f64> + Clone>(values: I, len: usize) -> Self {
        let n = len as f64;
        let mu = values.clone().sum::<f64>() / n;
        let ss: f64 = values.map(|v| (v - mu) * (v - mu)).sum();
        let sigma = libm::sqrt(ss / (n - 1.0));
        if sigma > SIGMA_FLOOR {
            Self::new(mu, sigma)
        } else {
            Self {
                mu,
                sigma: SIGMA_FLOOR,
                degenerate: true,
            }
        }
    }

    pub fn apply(&self, y: f64) -> f64 {
        libm::asinh((y - self.mu) / self.sigma)
    }

    pub fn invert(&self, z: f64) -> f64 {
        libm::sinh(z) * self.sigma + self.mu
    }
}

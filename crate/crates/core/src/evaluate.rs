//! Accuracy metrics per hierarchy level, percentage gains and the
//! multivariate Diebold-Mariano test.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::hierarchy::{Hierarchy, HierarchyVector, LevelSpec};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelMetrics {
    pub level: LevelSpec,
    pub mae: f64,
    pub rmse: f64,
    pub n_days: usize,
}

/// MAE and RMSE over every (day, block) cell of one level.
pub fn level_metrics(
    hierarchy: &Hierarchy,
    forecasts: &[HierarchyVector],
    actuals: &[HierarchyVector],
    level: LevelSpec,
) -> Result<LevelMetrics> {
    if forecasts.len() != actuals.len() {
        return Err(Error::InvalidInput(alloc::format!(
            "misaligned day lists: {} forecasts vs {} actuals",
            forecasts.len(),
            actuals.len()
        )));
    }
    if hierarchy.level(level.block_length) != Some(level) {
        return Err(Error::InvalidInput(alloc::format!(
            "level {} is not part of the hierarchy",
            level.label()
        )));
    }
    let rows = hierarchy.level_rows(level.block_length);
    let (mut abs, mut sq, mut cells) = (0.0, 0.0, 0usize);
    for (f, a) in forecasts.iter().zip(actuals) {
        for r in rows.clone() {
            let e = f[r] - a[r];
            abs += e.abs();
            sq += e * e;
            cells += 1;
        }
    }
    let denom = cells.max(1) as f64;
    Ok(LevelMetrics {
        level,
        mae: abs / denom,
        rmse: libm::sqrt(sq / denom),
        n_days: forecasts.len(),
    })
}

/// `100 * (base - reconciled) / base`.
pub fn pct_gain(base: f64, reconciled: f64) -> Result<f64> {
    if base == 0.0 {
        return Err(Error::ZeroBaseMetric);
    }
    Ok(100.0 * (base - reconciled) / base)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Loss {
    L1,
    L2,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DmResult {
    pub statistic: f64,
    /// One-sided; small values favour the second forecaster.
    pub p_value: f64,
    pub loss: Loss,
}

pub const DM_MIN_DAYS: usize = 30;

fn norm(v: &[f64], loss: Loss) -> f64 {
    match loss {
        Loss::L1 => v.iter().map(|e| e.abs()).sum(),
        Loss::L2 => libm::sqrt(v.iter().map(|e| e * e).sum()),
    }
}

/// Multivariate Diebold-Mariano test on per-day error vectors.
///
/// The daily loss differential is `||e_a,t|| - ||e_b,t||`; a positive
/// statistic means forecaster `b` is more accurate.
pub fn dm_test<A: AsRef<[f64]>, B: AsRef<[f64]>>(
    errors_a: &[A],
    errors_b: &[B],
    loss: Loss,
) -> Result<DmResult> {
    if errors_a.len() != errors_b.len() {
        return Err(Error::InvalidInput(alloc::format!(
            "misaligned error series: {} vs {} days",
            errors_a.len(),
            errors_b.len()
        )));
    }
    let diff: Vec<f64> = errors_a
        .iter()
        .zip(errors_b)
        .map(|(a, b)| norm(a.as_ref(), loss) - norm(b.as_ref(), loss))
        .collect();
    dm_from_differentials(&diff, loss)
}

/// DM statistic from a loss-differential series, with a Bartlett-kernel
/// long-run variance using `floor(T^(1/3))` lags.
pub fn dm_from_differentials(diff: &[f64], loss: Loss) -> Result<DmResult> {
    let t = diff.len();
    if t < DM_MIN_DAYS {
        return Err(Error::WindowTooShort {
            got: t,
            need: DM_MIN_DAYS,
        });
    }
    if diff.iter().all(|&d| d == 0.0) {
        return Ok(DmResult {
            statistic: 0.0,
            p_value: 0.5,
            loss,
        });
    }
    let tf = t as f64;
    let mean = diff.iter().sum::<f64>() / tf;
    let lags = hac_lags(t);
    let autocov = |k: usize| -> f64 {
        (k..t)
            .map(|i| (diff[i] - mean) * (diff[i - k] - mean))
            .sum::<f64>()
            / tf
    };
    let mut lrv = autocov(0);
    for k in 1..=lags {
        lrv += 2.0 * (1.0 - k as f64 / (lags as f64 + 1.0)) * autocov(k);
    }
    if !(lrv > 0.0) {
        return Err(Error::ZeroVariance);
    }
    let statistic = mean / libm::sqrt(lrv / tf);
    Ok(DmResult {
        statistic,
        p_value: 1.0 - normal_cdf(statistic),
        loss,
    })
}

pub fn hac_lags(t: usize) -> usize {
    // floor of the real cube root, guarded against rounding just below an integer
    let mut l = libm::cbrt(t as f64) as usize;
    while (l + 1) * (l + 1) * (l + 1) <= t {
        l += 1;
    }
    while l > 0 && l * l * l > t {
        l -= 1;
    }
    l
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / core::f64::consts::SQRT_2)
}

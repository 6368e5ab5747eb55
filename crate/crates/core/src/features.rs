//! The 20 regressors of the expert model for one (day, block):
//! seven same-block price lags, the previous day's hourly minimum and
//! maximum, the block's load and wind forecasts, the coal and gas closes
//! from two days earlier, and seven weekday dummies (Monday first).
//!
//! All non-dummy entries are asinh-standardized with moments fitted on the
//! trailing training window, which always ends the day before the target.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::hierarchy::{block_mean, BlockId, Hierarchy};
use crate::linalg::Matrix;
use crate::panel::Panel;
use crate::transform::TransformParams;

pub const LAGS: usize = 7;
pub const FEATURES: usize = 20;
/// Fuel closes enter with this lag in days.
pub const FUEL_LAG: usize = 2;
/// First day index with a complete feature vector.
pub const EARLIEST_DAY: usize = LAGS;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector(pub [f64; FEATURES]);

impl FeatureVector {
    pub fn lag_prices(&self) -> &[f64] {
        &self.0[..LAGS]
    }

    pub fn min_prev(&self) -> f64 {
        self.0[7]
    }

    pub fn max_prev(&self) -> f64 {
        self.0[8]
    }

    pub fn load(&self) -> f64 {
        self.0[9]
    }

    pub fn wind(&self) -> f64 {
        self.0[10]
    }

    pub fn api2(&self) -> f64 {
        self.0[11]
    }

    pub fn ttf(&self) -> f64 {
        self.0[12]
    }

    pub fn dummies(&self) -> &[f64] {
        &self.0[13..]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// One set of transform moments per variable group. The seven price lags
/// and the regression target share `price`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureParams {
    pub price: TransformParams,
    pub min: TransformParams,
    pub max: TransformParams,
    pub load: TransformParams,
    pub wind: TransformParams,
    pub api2: TransformParams,
    pub ttf: TransformParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Series {
    Price,
    Load,
    Wind,
}

/// Per-day block mean of one hourly series.
pub fn block_series(panel: &Panel, block: BlockId, series: Series) -> Vec<f64> {
    panel
        .days()
        .iter()
        .map(|day| {
            let hourly = match series {
                Series::Price => &day.prices,
                Series::Load => &day.load,
                Series::Wind => &day.wind,
            };
            block_mean(hourly, block)
        })
        .collect()
}

/// Precomputed per-day series for one block, plus the day-level series
/// shared by all blocks. Building these once per panel avoids recomputing
/// block means inside the daily refit loop.
#[derive(Debug, Clone)]
pub struct BlockInputs {
    pub block: BlockId,
    pub price: Vec<f64>,
    pub load: Vec<f64>,
    pub wind: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct PanelSeries {
    pub weekday: Vec<u8>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub api2: Vec<f64>,
    pub ttf: Vec<f64>,
    pub blocks: Vec<BlockInputs>,
}

impl PanelSeries {
    pub fn new(panel: &Panel, hierarchy: &Hierarchy) -> Self {
        let days = panel.days();
        Self {
            weekday: days.iter().map(|d| d.weekday).collect(),
            min: days.iter().map(|d| d.min_price()).collect(),
            max: days.iter().map(|d| d.max_price()).collect(),
            api2: days.iter().map(|d| d.api2).collect(),
            ttf: days.iter().map(|d| d.ttf).collect(),
            blocks: hierarchy
                .blocks()
                .iter()
                .map(|&block| BlockInputs {
                    block,
                    price: block_series(panel, block, Series::Price),
                    load: block_series(panel, block, Series::Load),
                    wind: block_series(panel, block, Series::Wind),
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.weekday.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weekday.is_empty()
    }

    /// Fits every variable group on days `[d - window, d - 1]`, clipped to
    /// the start of the panel.
    pub fn fit_params(&self, row: usize, d: usize, window: usize) -> Result<FeatureParams> {
        let start = d.saturating_sub(window);
        if d > self.len() {
            return Err(Error::InvalidInput(alloc::format!(
                "day {d} beyond panel of {} days",
                self.len()
            )));
        }
        if d - start < 2 {
            return Err(Error::WindowTooShort {
                got: d - start,
                need: 2,
            });
        }
        let b = &self.blocks[row];
        let fit = |s: &[f64]| {
            let w = &s[start..d];
            crate::error::check_finite(w)?;
            Ok(TransformParams::fit_iter(w.iter().copied(), w.len()))
        };
        Ok(FeatureParams {
            price: fit(&b.price)?,
            min: fit(&self.min)?,
            max: fit(&self.max)?,
            load: fit(&b.load)?,
            wind: fit(&b.wind)?,
            api2: fit(&self.api2)?,
            ttf: fit(&self.ttf)?,
        })
    }

    /// Transformed features for day `t` and block row `row`.
    pub fn features(&self, row: usize, t: usize, p: &FeatureParams) -> Result<FeatureVector> {
        if t < EARLIEST_DAY {
            return Err(Error::InsufficientHistory {
                day: t,
                earliest: EARLIEST_DAY,
            });
        }
        if t >= self.len() {
            return Err(Error::InvalidInput(alloc::format!(
                "day {t} beyond panel of {} days",
                self.len()
            )));
        }
        let b = &self.blocks[row];
        let mut f = [0.0; FEATURES];
        for (i, slot) in f[..LAGS].iter_mut().enumerate() {
            *slot = p.price.apply(b.price[t - 1 - i]);
        }
        f[7] = p.min.apply(self.min[t - 1]);
        f[8] = p.max.apply(self.max[t - 1]);
        f[9] = p.load.apply(b.load[t]);
        f[10] = p.wind.apply(b.wind[t]);
        f[11] = p.api2.apply(self.api2[t - FUEL_LAG]);
        f[12] = p.ttf.apply(self.ttf[t - FUEL_LAG]);
        f[13 + usize::from(self.weekday[t] - 1)] = 1.0;
        Ok(FeatureVector(f))
    }

    /// Training design for a forecast of day `d`: rows for every day in the
    /// trailing window that has a full lag history, targets in transformed
    /// space, and the feature vector for `d` itself.
    pub fn training_set(&self, row: usize, d: usize, window: usize) -> Result<TrainingSet> {
        let params = self.fit_params(row, d, window)?;
        let first = d.saturating_sub(window).max(EARLIEST_DAY);
        if first >= d {
            return Err(Error::InsufficientHistory {
                day: d,
                earliest: EARLIEST_DAY + 1,
            });
        }
        let n = d - first;
        let mut data = Vec::with_capacity(n * FEATURES);
        let mut y = Vec::with_capacity(n);
        for t in first..d {
            data.extend_from_slice(&self.features(row, t, &params)?.0);
            y.push(params.price.apply(self.blocks[row].price[t]));
        }
        Ok(TrainingSet {
            x: Matrix::from_row_major(n, FEATURES, data)?,
            y,
            target_days: first..d,
            query: self.features(row, d, &params)?,
            params,
        })
    }
}

#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub x: Matrix,
    pub y: Vec<f64>,
    pub target_days: core::ops::Range<usize>,
    pub query: FeatureVector,
    pub params: FeatureParams,
}

/// Feature vector for day `d` and `block`, read straight from the panel.
pub fn build_features(
    panel: &Panel,
    d: usize,
    block: BlockId,
    params: &FeatureParams,
) -> Result<FeatureVector> {
    if d < EARLIEST_DAY || d >= panel.len() {
        return Err(Error::InsufficientHistory {
            day: d,
            earliest: EARLIEST_DAY,
        });
    }
    let days = panel.days();
    let mut f = [0.0; FEATURES];
    for i in 0..LAGS {
        f[i] = params.price.apply(block_mean(&days[d - 1 - i].prices, block));
    }
    let prev = &days[d - 1];
    f[7] = params.min.apply(prev.min_price());
    f[8] = params.max.apply(prev.max_price());
    f[9] = params.load.apply(block_mean(&days[d].load, block));
    f[10] = params.wind.apply(block_mean(&days[d].wind, block));
    f[11] = params.api2.apply(days[d - FUEL_LAG].api2);
    f[12] = params.ttf.apply(days[d - FUEL_LAG].ttf);
    f[13 + usize::from(days[d].weekday - 1)] = 1.0;
    Ok(FeatureVector(f))
}

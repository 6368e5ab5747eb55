//! In-memory daily panel of prices and exogenous inputs.
//!
//! Calendar dates are kept by the ingestion layer; here a day is addressed
//! by its position in a gap-free sequence.

use alloc::vec::Vec;

use crate::error::{check_finite, Error, Result};

pub const HOURS: usize = 24;

#[derive(Debug, Clone, PartialEq)]
pub struct DayRecord {
    /// ISO weekday, 1 = Monday ... 7 = Sunday.
    pub weekday: u8,
    /// Day-ahead hourly prices, EUR/MWh.
    pub prices: [f64; HOURS],
    /// Day-ahead load forecast for the delivery day, MW.
    pub load: [f64; HOURS],
    /// Day-ahead wind generation forecast for the delivery day, MW.
    pub wind: [f64; HOURS],
    /// Coal futures close as published on this day (no lag applied).
    pub api2: f64,
    /// Gas futures close as published on this day (no lag applied).
    pub ttf: f64,
}

impl DayRecord {
    pub fn validate(&self) -> Result<()> {
        if !(1..=7).contains(&self.weekday) {
            return Err(Error::InvalidInput(alloc::format!(
                "weekday {} outside 1..=7",
                self.weekday
            )));
        }
        check_finite(&self.prices)?;
        check_finite(&self.load)?;
        check_finite(&self.wind)?;
        check_finite(&[self.api2, self.ttf])
    }

    pub fn min_price(&self) -> f64 {
        self.prices.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_price(&self) -> f64 {
        self.prices.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Contiguous sequence of days. Consecutive records must advance the
/// weekday by one.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Panel {
    days: Vec<DayRecord>,
}

impl Panel {
    pub fn new(days: Vec<DayRecord>) -> Result<Self> {
        for (i, d) in days.iter().enumerate() {
            d.validate()
                .map_err(|e| Error::InvalidInput(alloc::format!("day {i}: {e}")))?;
            if i > 0 && d.weekday != days[i - 1].weekday % 7 + 1 {
                return Err(Error::InvalidInput(alloc::format!(
                    "day {i}: weekday {} does not follow {}",
                    d.weekday,
                    days[i - 1].weekday
                )));
            }
        }
        Ok(Self { days })
    }

    pub fn days(&self) -> &[DayRecord] {
        &self.days
    }

    pub fn day(&self, d: usize) -> &DayRecord {
        &self.days[d]
    }

    pub fn len(&self) -> usize {
        self.days.len()
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }

    pub fn truncated(&self, len: usize) -> Self {
        Self {
            days: self.days[..len.min(self.days.len())].to_vec(),
        }
    }
}

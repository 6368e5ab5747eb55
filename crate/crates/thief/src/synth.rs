//! Synthetic market data with the statistical shape of a day-ahead market:
//! persistent daily price level, intraday profile, weekday effects, prices
//! driven by load, wind and fuels, and occasional negative spikes on windy
//! low-demand days.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use chrono::{Datelike, NaiveDate, Weekday};
use rand_distr::{Distribution, StandardNormal};
use thief_core::{seed, HOURS};

use crate::dataio::{write_hourly, DATE_FORMAT};

pub fn default_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2018, 1, 5).expect("valid date")
}

pub const MIN_DAYS: usize = 30;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticMarket {
    pub dates: Vec<NaiveDate>,
    pub prices: Vec<[f64; HOURS]>,
    pub load: Vec<[f64; HOURS]>,
    pub wind: Vec<[f64; HOURS]>,
    /// Fuel closes on trading days only; weekends are absent except on day 0.
    pub fuels: Vec<(NaiveDate, f64, f64)>,
}

fn load_shape(h: usize) -> f64 {
    let x = (h as f64 + 0.5) / HOURS as f64 * std::f64::consts::TAU;
    -0.12 * x.cos() - 0.05 * (2.0 * x).cos()
}

fn price_shape(h: usize) -> f64 {
    let x = (h as f64 + 0.5) / HOURS as f64 * std::f64::consts::TAU;
    -0.6 * x.cos() - 0.35 * (2.0 * x).cos() + 0.1 * (3.0 * x).sin()
}

pub fn generate(seed_value: u64, days: usize, start: NaiveDate) -> SyntheticMarket {
    let mut rng = seed::rng(seed_value, &[0x5e_ed]);
    let mut n = || -> f64 { StandardNormal.sample(&mut rng) };

    let mut dates = Vec::with_capacity(days);
    let mut prices = Vec::with_capacity(days);
    let mut load = Vec::with_capacity(days);
    let mut wind = Vec::with_capacity(days);
    let mut fuels = Vec::new();

    let (mut level, mut wind_level) = (0.0f64, 0.0f64);
    let (mut log_api2, mut log_ttf) = (80f64.ln(), 20f64.ln());
    let mut fuel_hist: Vec<(f64, f64)> = Vec::with_capacity(days);

    for d in 0..days {
        let date = start + chrono::Days::new(d as u64);
        let weekday = date.weekday();
        let weekend = matches!(weekday, Weekday::Sat | Weekday::Sun);
        let season = (date.ordinal() as f64 / 365.25 * std::f64::consts::TAU).cos();

        level = 0.85 * level + 4.0 * n();
        wind_level = 0.7 * wind_level + 0.7 * n();
        log_api2 += 0.015 * n();
        log_ttf += 0.025 * n();
        fuel_hist.push((log_api2.exp(), log_ttf.exp()));
        if !weekend || d == 0 {
            fuels.push((date, log_api2.exp(), log_ttf.exp()));
        }
        // fuel prices enter the market with a publication lag
        let (api2, ttf) = fuel_hist[d.saturating_sub(2)];

        let base_load = 55_000.0 * (1.0 + 0.08 * season) * if weekend { 0.85 } else { 1.0 };
        let wind_mean = (15_000.0 * (1.0 + 0.3 * season) * (0.5 * wind_level).exp()).min(50_000.0);
        let shock = n();
        let spike = (weekend && wind_mean > 25_000.0) || shock > 2.4;

        let mut p = [0.0; HOURS];
        let mut l = [0.0; HOURS];
        let mut w = [0.0; HOURS];
        for h in 0..HOURS {
            l[h] = base_load * (1.0 + load_shape(h)) + 800.0 * n();
            w[h] = (wind_mean * (1.0 + 0.1 * n())).max(0.0);
            p[h] = 5.0 + 1.3 * ttf + 0.12 * api2 + level + 10.0 * price_shape(h)
                + 0.9 * (l[h] - 55_000.0) / 1000.0
                - 1.1 * w[h] / 1000.0
                + 3.0 * n();
            if spike && (10..16).contains(&h) {
                p[h] -= 60.0 + 80.0 * n().abs();
            }
        }
        dates.push(date);
        prices.push(p);
        load.push(l);
        wind.push(w);
    }
    SyntheticMarket {
        dates,
        prices,
        load,
        wind,
        fuels,
    }
}

impl SyntheticMarket {
    /// Writes `prices.csv`, `load.csv`, `wind.csv` and `fuels.csv`.
    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        fs::create_dir_all(dir)?;
        let rows = |v: &[[f64; HOURS]]| -> Vec<(NaiveDate, [f64; HOURS])> {
            self.dates.iter().copied().zip(v.iter().copied()).collect()
        };
        write_hourly(&rows(&self.prices), &dir.join("prices.csv"))?;
        write_hourly(&rows(&self.load), &dir.join("load.csv"))?;
        write_hourly(&rows(&self.wind), &dir.join("wind.csv"))?;
        let mut out = BufWriter::new(fs::File::create(dir.join("fuels.csv"))?);
        writeln!(out, "date,api2_close,ttf_close")?;
        for (date, a, t) in &self.fuels {
            writeln!(out, "{},{a},{t}", date.format(DATE_FORMAT))?;
        }
        out.flush()
    }
}

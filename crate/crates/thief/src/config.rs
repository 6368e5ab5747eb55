//! Backtest configuration and its flat `key = value` file format.
//!
//! ```text
//! # paths are relative to the config file
//! prices = data/prices.csv
//! load = data/load.csv
//! wind = data/wind.csv
//! fuels = data/fuels.csv
//! test_start = 2021-01-01
//! test_end = 2021-12-31
//! model = arx
//! train_window = 1092
//! seed = 42
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;

use crate::dataio::DATE_FORMAT;

pub const DEFAULT_TRAIN_WINDOW: usize = 1092;
pub const MIN_TRAIN_WINDOW: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Arx,
    Narx,
    External,
}

impl FromStr for ModelKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "arx" => Ok(Self::Arx),
            "narx" => Ok(Self::Narx),
            "external" => Ok(Self::External),
            _ => Err(ConfigError::Invalid {
                key: "model".into(),
                message: format!("unknown model `{s}` (expected arx, narx or external)"),
            }),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Arx => "ARX",
            Self::Narx => "NARX",
            Self::External => "EXTERNAL",
        })
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("missing config key `{0}`")]
    Missing(String),
    #[error("config key `{key}`: {message}")]
    Invalid { key: String, message: String },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestConfig {
    pub train_window: usize,
    pub test_start: NaiveDate,
    pub test_end: NaiveDate,
    pub model: ModelKind,
    pub external_file: Option<PathBuf>,
    pub seed: u64,
    pub reconcile: bool,
    /// Seed the error history with one-step-ahead forecasts over the
    /// training window instead of in-sample residuals of a single fit.
    pub strict_bootstrap: bool,
    /// Day written to `figure_day.csv`.
    pub plot_day: Option<NaiveDate>,
    /// Write the full shrunk covariance of every test day.
    pub dump_covariance: bool,
    /// Lift the training-window floor; for small fixtures only.
    pub allow_short_window: bool,
}

impl BacktestConfig {
    pub fn new(test_start: NaiveDate, test_end: NaiveDate, model: ModelKind) -> Self {
        Self {
            train_window: DEFAULT_TRAIN_WINDOW,
            test_start,
            test_end,
            model,
            external_file: None,
            seed: 0,
            reconcile: true,
            strict_bootstrap: false,
            plot_day: None,
            dump_covariance: false,
            allow_short_window: false,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.train_window < MIN_TRAIN_WINDOW && !self.allow_short_window {
            return Err(ConfigError::Invalid {
                key: "train_window".into(),
                message: format!("{} is below the minimum of {MIN_TRAIN_WINDOW}", self.train_window),
            });
        }
        if self.test_end < self.test_start {
            return Err(ConfigError::Invalid {
                key: "test_end".into(),
                message: format!("{} precedes test_start {}", self.test_end, self.test_start),
            });
        }
        if self.model == ModelKind::External && self.external_file.is_none() {
            return Err(ConfigError::Missing("external_file".into()));
        }
        Ok(())
    }

    pub fn test_days(&self) -> usize {
        (self.test_end - self.test_start).num_days() as usize + 1
    }
}

/// A parsed config file: input paths, the backtest settings and the output
/// directory.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub prices: PathBuf,
    pub load: PathBuf,
    pub wind: PathBuf,
    pub fuels: PathBuf,
    pub out_dir: PathBuf,
    pub backtest: BacktestConfig,
}

const KEYS: [&str; 16] = [
    "prices",
    "load",
    "wind",
    "fuels",
    "out_dir",
    "train_window",
    "test_start",
    "test_end",
    "model",
    "external_file",
    "seed",
    "reconcile",
    "strict_bootstrap",
    "plot_day",
    "dump_covariance",
    "threads",
];

pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax {
            line: i + 1,
            message: format!("expected `key = value`, found `{line}`"),
        })?;
        let key = key.trim().to_string();
        if !KEYS.contains(&key.as_str()) {
            return Err(ConfigError::Syntax {
                line: i + 1,
                message: format!("unknown key `{key}`"),
            });
        }
        if out.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(ConfigError::Syntax {
                line: i + 1,
                message: format!("duplicate key `{key}`"),
            });
        }
    }
    Ok(out)
}

fn value<T: FromStr>(pairs: &BTreeMap<String, String>, key: &str) -> Result<Option<T>, ConfigError>
where
    T::Err: fmt::Display,
{
    pairs
        .get(key)
        .map(|v| {
            v.parse::<T>().map_err(|e| ConfigError::Invalid {
                key: key.into(),
                message: e.to_string(),
            })
        })
        .transpose()
}

fn date(pairs: &BTreeMap<String, String>, key: &str) -> Result<Option<NaiveDate>, ConfigError> {
    pairs
        .get(key)
        .map(|v| {
            NaiveDate::parse_from_str(v, DATE_FORMAT).map_err(|e| ConfigError::Invalid {
                key: key.into(),
                message: format!("`{v}`: {e}"),
            })
        })
        .transpose()
}

fn require<T>(v: Option<T>, key: &str) -> Result<T, ConfigError> {
    v.ok_or_else(|| ConfigError::Missing(key.into()))
}

/// Parses a config file body; relative paths resolve against `base_dir`.
pub fn parse_config(text: &str, base_dir: &Path) -> Result<RunConfig, ConfigError> {
    let pairs = parse_pairs(text)?;
    let path = |key: &str| pairs.get(key).map(|v| base_dir.join(v));
    let mut backtest = BacktestConfig::new(
        require(date(&pairs, "test_start")?, "test_start")?,
        require(date(&pairs, "test_end")?, "test_end")?,
        require(value(&pairs, "model")?, "model")?,
    );
    if let Some(w) = value(&pairs, "train_window")? {
        backtest.train_window = w;
    }
    backtest.external_file = path("external_file");
    if let Some(s) = value(&pairs, "seed")? {
        backtest.seed = s;
    }
    if let Some(r) = value(&pairs, "reconcile")? {
        backtest.reconcile = r;
    }
    if let Some(s) = value(&pairs, "strict_bootstrap")? {
        backtest.strict_bootstrap = s;
    }
    backtest.plot_day = date(&pairs, "plot_day")?;
    if let Some(d) = value(&pairs, "dump_covariance")? {
        backtest.dump_covariance = d;
    }
    Ok(RunConfig {
        prices: require(path("prices"), "prices")?,
        load: require(path("load"), "load")?,
        wind: require(path("wind"), "wind")?,
        fuels: require(path("fuels"), "fuels")?,
        out_dir: path("out_dir").unwrap_or_else(|| base_dir.join("out")),
        backtest,
    })
}

/// Thread count from the config file, if given.
pub fn threads(text: &str) -> Result<Option<usize>, ConfigError> {
    value(&parse_pairs(text)?, "threads")
}

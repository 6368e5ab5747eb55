//! Rolling-origin backtest.
//!
//! Each test day `d` every block model is refit on the trailing window,
//! the 60 base forecasts are reconciled with a covariance estimated from
//! past base errors, and the day's errors are appended to the history only
//! after both forecast sets are recorded. Days run sequentially; the block
//! fits of one day run in parallel.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use chrono::NaiveDate;
use log::{debug, info};
use rayon::prelude::*;
use thief_core::features::{PanelSeries, TrainingSet, EARLIEST_DAY, FEATURES};
use thief_core::forecast::{fit_arx, fit_narx, predict_arx, predict_narx, ArxModel, NarxConfig, NarxModel};
use thief_core::{
    seed, BlockId, ErrorHistory, Hierarchy, HierarchyVector, Reconciler, ShrunkCovariance, SummingMatrix,
    TransformParams,
};

use crate::config::{BacktestConfig, ConfigError, ModelKind};
use crate::dataio::{load_external_base_forecasts, ExternalBaseForecasts, ForecastRecord, IngestError, PanelData};
use crate::report::{build_report, BacktestReport, RuntimeStats};

/// Largest accepted deviation from the parent-mean identities.
pub const COHERENCE_TOLERANCE: f64 = 1e-9;

/// Fewest training rows for a linear fit during strict bootstrap.
const MIN_ARX_ROWS: usize = 2 * FEATURES;

#[derive(Debug, thiserror::Error)]
pub enum BacktestError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("{date}: block {block}: {source}")]
    Block {
        date: NaiveDate,
        block: BlockId,
        source: thief_core::Error,
    },
    #[error("{date}: {source}")]
    Day {
        date: NaiveDate,
        source: thief_core::Error,
    },
    #[error("test range {start}..{end} is not inside the panel ({first}..{last})")]
    Range {
        start: NaiveDate,
        end: NaiveDate,
        first: NaiveDate,
        last: NaiveDate,
    },
    #[error("panel has {available} days before test start, the training window needs {needed}")]
    ShortHistory { available: usize, needed: usize },
    #[error("{date}: no external base forecast")]
    MissingExternal { date: NaiveDate },
    #[error("{date}: reconciled forecast violates coherence by {error:e}")]
    Incoherent { date: NaiveDate, error: f64 },
    #[error("checkpoint does not match this run: {0}")]
    Checkpoint(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

pub type Result<T> = std::result::Result<T, BacktestError>;

/// Covariance diagnostics of one test day.
#[derive(Debug, Clone, PartialEq)]
pub struct DayDiagnostics {
    pub date: NaiveDate,
    pub observations: usize,
    pub lambda: Option<f64>,
    pub floored: usize,
    pub condition: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestOutput {
    pub report: BacktestReport,
    pub forecasts: Vec<ForecastRecord>,
    pub actuals: Vec<HierarchyVector>,
    pub diagnostics: Vec<DayDiagnostics>,
}

enum Fitted {
    Arx(ArxModel),
    Narx(NarxModel),
}

impl Fitted {
    fn predict(&self, x: &[f64], target: &TransformParams) -> f64 {
        match self {
            Fitted::Arx(m) => predict_arx(m, x, target),
            Fitted::Narx(m) => predict_narx(m, x, target),
        }
    }
}

/// Base forecasting for one panel and configuration.
pub struct Engine<'a> {
    data: &'a PanelData,
    config: &'a BacktestConfig,
    hierarchy: Hierarchy,
    series: PanelSeries,
    external: Option<ExternalBaseForecasts>,
    start: usize,
    end: usize,
}

impl<'a> Engine<'a> {
    pub fn new(data: &'a PanelData, config: &'a BacktestConfig) -> Result<Self> {
        config.validate()?;
        let (first, last) = match (data.dates.first(), data.dates.last()) {
            (Some(f), Some(l)) => (*f, *l),
            _ => {
                return Err(BacktestError::ShortHistory {
                    available: 0,
                    needed: config.train_window,
                })
            }
        };
        let range_err = || BacktestError::Range {
            start: config.test_start,
            end: config.test_end,
            first,
            last,
        };
        let start = data.index_of(config.test_start).ok_or_else(range_err)?;
        let end = data.index_of(config.test_end).ok_or_else(range_err)?;
        if start < config.train_window {
            return Err(BacktestError::ShortHistory {
                available: start,
                needed: config.train_window,
            });
        }
        let external = match config.model {
            ModelKind::External => {
                let path = config.external_file.as_deref().ok_or(ConfigError::Missing("external_file".into()))?;
                Some(load_external_base_forecasts(path)?)
            }
            _ => None,
        };
        let hierarchy = Hierarchy::daily();
        let series = PanelSeries::new(&data.panel, &hierarchy);
        Ok(Self {
            data,
            config,
            hierarchy,
            series,
            external,
            start,
            end,
        })
    }

    pub fn test_range(&self) -> std::ops::RangeInclusive<usize> {
        self.start..=self.end
    }

    pub fn hierarchy(&self) -> &Hierarchy {
        &self.hierarchy
    }

    pub fn model_name(&self) -> String {
        match &self.external {
            Some(e) => e.model_name.clone(),
            None => self.config.model.to_string(),
        }
    }

    pub fn actual(&self, d: usize) -> HierarchyVector {
        self.hierarchy
            .aggregate(&self.data.panel.day(d).prices)
            .expect("panel days have 24 hours")
    }

    fn block_error(&self, d: usize, row: usize) -> impl Fn(thief_core::Error) -> BacktestError + '_ {
        move |source| BacktestError::Block {
            date: self.data.dates[d],
            block: self.hierarchy.blocks()[row],
            source,
        }
    }

    fn fit(&self, ts: &TrainingSet, d: usize, row: usize) -> thief_core::Result<Fitted> {
        Ok(match self.config.model {
            ModelKind::Narx => {
                let s = seed::derive(self.config.seed, &[d as u64, row as u64]);
                Fitted::Narx(fit_narx(&ts.x, &ts.y, s)?)
            }
            _ => Fitted::Arx(fit_arx(&ts.x, &ts.y)?),
        })
    }

    fn block_forecast(&self, d: usize, row: usize) -> Result<f64> {
        let err = self.block_error(d, row);
        let ts = self
            .series
            .training_set(row, d, self.config.train_window)
            .map_err(&err)?;
        let model = self.fit(&ts, d, row).map_err(&err)?;
        Ok(model.predict(ts.query.as_slice(), &ts.params.price))
    }

    /// The 60 base forecasts for panel day `d`, using data through `d - 1`
    /// plus day `d`'s exogenous inputs.
    pub fn base_forecast(&self, d: usize) -> Result<HierarchyVector> {
        if let Some(ext) = &self.external {
            let date = self.data.dates[d];
            return ext
                .days
                .get(&date)
                .cloned()
                .ok_or(BacktestError::MissingExternal { date });
        }
        let values = (0..self.hierarchy.len())
            .into_par_iter()
            .map(|row| self.block_forecast(d, row))
            .collect::<Result<Vec<f64>>>()?;
        Ok(HierarchyVector(values))
    }

    /// Error history at the start of the test period.
    pub fn bootstrap(&self) -> Result<ErrorHistory> {
        let mut history = ErrorHistory::new(self.hierarchy.len(), self.config.train_window);
        let window_start = self.start - self.config.train_window;
        if let Some(ext) = &self.external {
            for d in window_start..self.start {
                if let Some(f) = ext.days.get(&self.data.dates[d]) {
                    self.push_errors(&mut history, d, f)?;
                }
            }
        } else if self.config.strict_bootstrap {
            let min_rows = match self.config.model {
                ModelKind::Narx => NarxConfig::default().min_rows,
                _ => MIN_ARX_ROWS,
            };
            for d in window_start.max(EARLIEST_DAY + min_rows)..self.start {
                let base = self.base_forecast(d)?;
                self.push_errors(&mut history, d, &base)?;
            }
        } else {
            self.bootstrap_fast(&mut history)?;
        }
        Ok(history)
    }

    fn bootstrap_fast(&self, history: &mut ErrorHistory) -> Result<()> {
        let d = self.start;
        let per_block = (0..self.hierarchy.len())
            .into_par_iter()
            .map(|row| {
                let err = self.block_error(d, row);
                let ts = self
                    .series
                    .training_set(row, d, self.config.train_window)
                    .map_err(&err)?;
                let model = self.fit(&ts, d, row).map_err(&err)?;
                let actual = &self.series.blocks[row].price;
                Ok(ts
                    .target_days
                    .clone()
                    .enumerate()
                    .map(|(i, t)| model.predict(ts.x.row(i), &ts.params.price) - actual[t])
                    .collect::<Vec<f64>>())
            })
            .collect::<Result<Vec<Vec<f64>>>>()?;
        let days = per_block.first().map_or(0, Vec::len);
        let mut row = vec![0.0; self.hierarchy.len()];
        for t in 0..days {
            for (slot, block) in row.iter_mut().zip(&per_block) {
                *slot = block[t];
            }
            history.update_daily(&row).map_err(|source| BacktestError::Day {
                date: self.data.dates[d],
                source,
            })?;
        }
        Ok(())
    }

    fn push_errors(&self, history: &mut ErrorHistory, d: usize, forecast: &[f64]) -> Result<()> {
        let actual = self.actual(d);
        let errors: Vec<f64> = forecast.iter().zip(actual.iter()).map(|(f, a)| f - a).collect();
        history.update_daily(&errors).map_err(|source| BacktestError::Day {
            date: self.data.dates[d],
            source,
        })
    }
}

/// Receives each finished day as it is produced.
pub trait DaySink {
    fn day(&mut self, record: &ForecastRecord, covariance: Option<&ShrunkCovariance>) -> Result<()>;
}

impl DaySink for () {
    fn day(&mut self, _: &ForecastRecord, _: Option<&ShrunkCovariance>) -> Result<()> {
        Ok(())
    }
}

pub fn run(data: &PanelData, config: &BacktestConfig) -> Result<BacktestOutput> {
    run_with(data, config, &[], &mut ())
}

/// Runs the backtest, reusing `resume` (a prefix of an earlier run's
/// forecasts) and streaming each new day to `sink`.
pub fn run_with(
    data: &PanelData,
    config: &BacktestConfig,
    resume: &[ForecastRecord],
    sink: &mut dyn DaySink,
) -> Result<BacktestOutput> {
    let clock = Instant::now();
    let engine = Engine::new(data, config)?;
    let s = SummingMatrix::daily();
    let mut history = if config.reconcile {
        engine.bootstrap()?
    } else {
        ErrorHistory::new(s.nodes(), config.train_window)
    };
    let bootstrap_secs = clock.elapsed().as_secs_f64();
    info!(
        "bootstrap: {} error rows in {bootstrap_secs:.2} s",
        history.len()
    );

    let range = engine.test_range();
    if resume.len() > range.clone().count() {
        return Err(BacktestError::Checkpoint(format!(
            "{} days stored, test span has {}",
            resume.len(),
            range.clone().count()
        )));
    }
    let mut forecasts = Vec::with_capacity(range.clone().count());
    let mut actuals = Vec::with_capacity(forecasts.capacity());
    let mut diagnostics = Vec::with_capacity(forecasts.capacity());
    let mut passthrough = 0;
    let mut day_secs = Vec::with_capacity(forecasts.capacity());

    for (k, d) in range.enumerate() {
        let day_clock = Instant::now();
        let date = data.dates[d];
        let stored = resume.get(k);
        let base = match stored {
            Some(r) if r.date != date => {
                return Err(BacktestError::Checkpoint(format!("expected {date}, found {}", r.date)))
            }
            Some(r) => r.base.clone(),
            None => engine.base_forecast(d)?,
        };

        let mut diag = DayDiagnostics {
            date,
            observations: history.len(),
            lambda: None,
            floored: 0,
            condition: None,
        };
        let mut covariance = None;
        let reconciled = if !config.reconcile {
            None
        } else if history.len() < 2 {
            passthrough += 1;
            Some(base.clone())
        } else {
            let w = history
                .estimate_covariance()
                .map_err(|source| BacktestError::Day { date, source })?;
            let rec = Reconciler::new(&w, &s).map_err(|source| BacktestError::Day { date, source })?;
            diag.lambda = Some(w.lambda);
            diag.floored = w.floored.len();
            diag.condition = Some(rec.condition());
            let out = rec
                .reconcile(&base)
                .map_err(|source| BacktestError::Day { date, source })?;
            covariance = Some(w);
            Some(out)
        };
        if let Some(r) = &reconciled {
            let error = engine.hierarchy().coherence_error(r);
            if !(error <= COHERENCE_TOLERANCE) {
                return Err(BacktestError::Incoherent { date, error });
            }
        }
        let record = match stored {
            Some(r) => {
                if r.reconciled.is_some() != reconciled.is_some() {
                    return Err(BacktestError::Checkpoint(format!(
                        "{date}: reconciliation setting differs from the stored run"
                    )));
                }
                r.clone()
            }
            None => {
                let record = ForecastRecord {
                    date,
                    base,
                    reconciled,
                };
                sink.day(&record, covariance.as_ref())?;
                record
            }
        };

        let actual = engine.actual(d);
        if config.reconcile {
            engine.push_errors(&mut history, d, &record.base)?;
        }
        debug!("{date}: done in {:.3} s", day_clock.elapsed().as_secs_f64());
        day_secs.push(day_clock.elapsed().as_secs_f64());
        forecasts.push(record);
        actuals.push(actual);
        diagnostics.push(diag);
    }

    let base: Vec<HierarchyVector> = forecasts.iter().map(|r| r.base.clone()).collect();
    let reconciled: Option<Vec<HierarchyVector>> = forecasts.iter().map(|r| r.reconciled.clone()).collect();
    let mut report = build_report(
        &engine.model_name(),
        engine.hierarchy(),
        &base,
        reconciled.as_deref(),
        &actuals,
    )
    .map_err(|source| BacktestError::Day {
        date: config.test_end,
        source,
    })?;
    report.passthrough_days = passthrough;
    report.runtime = RuntimeStats {
        bootstrap_secs,
        total_secs: clock.elapsed().as_secs_f64(),
        mean_day_secs: day_secs.iter().sum::<f64>() / day_secs.len().max(1) as f64,
        max_day_secs: day_secs.iter().copied().fold(0.0, f64::max),
    };
    Ok(BacktestOutput {
        report,
        forecasts,
        actuals,
        diagnostics,
    })
}

/// Streams forecasts (and optionally full covariances) into an output
/// directory.
pub struct FileSink {
    forecasts: crate::dataio::ForecastWriter,
    covariance: Option<(PathBuf, BufWriter<File>)>,
}

impl FileSink {
    /// `append` continues an existing `forecasts.csv` instead of replacing it.
    pub fn new(out_dir: &Path, append: bool, dump_covariance: bool) -> Result<Self> {
        let path = out_dir.join("forecasts.csv");
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| BacktestError::Io { path, source }
        };
        let forecasts = if append {
            crate::dataio::ForecastWriter::append(&path)
        } else {
            crate::dataio::ForecastWriter::create(&path)
        }
        .map_err(io(&path))?;
        let covariance = if dump_covariance {
            let path = out_dir.join("covariance.csv");
            let exists = append && path.exists();
            let file = std::fs::OpenOptions::new()
                .create(true)
                .append(append)
                .write(true)
                .truncate(!append)
                .open(&path)
                .map_err(io(&path))?;
            let mut w = BufWriter::new(file);
            if !exists {
                writeln!(w, "date,row,col,value").map_err(io(&path))?;
            }
            Some((path, w))
        } else {
            None
        };
        Ok(Self { forecasts, covariance })
    }
}

impl DaySink for FileSink {
    fn day(&mut self, record: &ForecastRecord, covariance: Option<&ShrunkCovariance>) -> Result<()> {
        self.forecasts.write(record).map_err(|source| BacktestError::Io {
            path: self.forecasts.path().to_path_buf(),
            source,
        })?;
        if let (Some((path, w)), Some(cov)) = (&mut self.covariance, covariance) {
            let date = record.date.format(crate::dataio::DATE_FORMAT);
            let n = cov.w.rows();
            let result = (|| {
                for i in 0..n {
                    for j in 0..n {
                        writeln!(w, "{date},{i},{j},{}", cov.w[(i, j)])?;
                    }
                }
                w.flush()
            })();
            result.map_err(|source| BacktestError::Io {
                path: path.clone(),
                source,
            })?;
        }
        Ok(())
    }
}

/// Writes `lambda.csv` with per-day shrinkage diagnostics.
pub fn write_diagnostics(diagnostics: &[DayDiagnostics], path: &Path) -> std::io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "date,observations,lambda,floored,condition")?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for d in diagnostics {
        writeln!(
            out,
            "{},{},{},{},{}",
            d.date.format(crate::dataio::DATE_FORMAT),
            d.observations,
            opt(d.lambda),
            d.floored,
            opt(d.condition)
        )?;
    }
    out.flush()
}

/// Levels written to `figure_day.csv`.
pub const FIGURE_LEVELS: [usize; 4] = [1, 4, 8, 24];

/// Tidy table of one day's actual, base and reconciled values at four
/// levels, for external plotting.
pub fn write_figure_day(output: &BacktestOutput, date: NaiveDate, path: &Path) -> std::io::Result<bool> {
    let Some(k) = output.forecasts.iter().position(|r| r.date == date) else {
        return Ok(false);
    };
    let record = &output.forecasts[k];
    let actual = &output.actuals[k];
    let hierarchy = Hierarchy::daily();
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "date,level,block_index,hour_start,hour_end,actual,base,reconciled")?;
    for len in FIGURE_LEVELS {
        for row in hierarchy.level_rows(len) {
            let block = hierarchy.blocks()[row];
            let hours = block.hours();
            writeln!(
                out,
                "{},{}H,{},{},{},{},{},{}",
                date.format(crate::dataio::DATE_FORMAT),
                len,
                block.index,
                hours.start,
                hours.end,
                actual[row],
                record.base[row],
                record.reconciled.as_ref().map(|r| r[row].to_string()).unwrap_or_default()
            )?;
        }
    }
    out.flush()?;
    Ok(true)
}

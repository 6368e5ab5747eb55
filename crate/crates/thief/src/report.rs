//! Per-level accuracy summary of a backtest and its `report.csv` layout.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use thief_core::evaluate::{dm_test, level_metrics, pct_gain, DmResult, LevelMetrics, Loss, DM_MIN_DAYS};
use thief_core::{Hierarchy, HierarchyVector, LevelSpec};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelRow {
    pub level: LevelSpec,
    pub base: LevelMetrics,
    pub reconciled: Option<LevelMetrics>,
    pub mae_gain_pct: Option<f64>,
    pub rmse_gain_pct: Option<f64>,
    /// Base versus reconciled; small p-values favour the reconciled set.
    pub dm_l1: Option<DmResult>,
    pub dm_l2: Option<DmResult>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RuntimeStats {
    pub bootstrap_secs: f64,
    pub total_secs: f64,
    pub mean_day_secs: f64,
    pub max_day_secs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestReport {
    pub model: String,
    pub days: usize,
    pub levels: Vec<LevelRow>,
    /// Days on which too little error history existed to reconcile and the
    /// base forecast was passed through.
    pub passthrough_days: usize,
    pub runtime: RuntimeStats,
}

impl BacktestReport {
    pub fn level(&self, block_length: usize) -> Option<&LevelRow> {
        self.levels.iter().find(|r| r.level.block_length == block_length)
    }

    pub fn has_reconciled(&self) -> bool {
        self.levels.iter().any(|r| r.reconciled.is_some())
    }
}

/// Metrics below this are treated as exactly zero when the base is zero.
pub const ZERO_METRIC: f64 = 1e-9;

/// Gain with the perfect-forecast case mapped to 0; `None` when only the
/// base metric is zero.
fn gain(base: f64, reconciled: f64) -> Option<f64> {
    if base == 0.0 && reconciled <= ZERO_METRIC {
        Some(0.0)
    } else {
        pct_gain(base, reconciled).ok()
    }
}

/// Builds the per-level summary. `reconciled`, when given, must align
/// day-for-day with `base`.
pub fn build_report(
    model: &str,
    hierarchy: &Hierarchy,
    base: &[HierarchyVector],
    reconciled: Option<&[HierarchyVector]>,
    actuals: &[HierarchyVector],
) -> thief_core::Result<BacktestReport> {
    let mut levels = Vec::with_capacity(hierarchy.levels().len());
    for &level in hierarchy.levels() {
        let b = level_metrics(hierarchy, base, actuals, level)?;
        let mut row = LevelRow {
            level,
            base: b,
            reconciled: None,
            mae_gain_pct: None,
            rmse_gain_pct: None,
            dm_l1: None,
            dm_l2: None,
        };
        if let Some(rec) = reconciled {
            let r = level_metrics(hierarchy, rec, actuals, level)?;
            row.reconciled = Some(r);
            row.mae_gain_pct = gain(b.mae, r.mae);
            row.rmse_gain_pct = gain(b.rmse, r.rmse);
            if base.len() >= DM_MIN_DAYS {
                let rows = hierarchy.level_rows(level.block_length);
                let errors = |f: &[HierarchyVector]| -> Vec<Vec<f64>> {
                    f.iter()
                        .zip(actuals)
                        .map(|(f, a)| rows.clone().map(|i| f[i] - a[i]).collect())
                        .collect()
                };
                let (eb, er) = (errors(base), errors(rec));
                row.dm_l1 = dm_test(&eb, &er, Loss::L1).ok();
                row.dm_l2 = dm_test(&eb, &er, Loss::L2).ok();
            }
        }
        levels.push(row);
    }
    Ok(BacktestReport {
        model: model.to_string(),
        days: base.len(),
        levels,
        passthrough_days: 0,
        runtime: RuntimeStats::default(),
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes `report.csv`. Without reconciled forecasts only the base columns
/// are emitted.
pub fn write_report_csv(reports: &[BacktestReport], path: &Path) -> std::io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    let full = reports.iter().any(BacktestReport::has_reconciled);
    if full {
        writeln!(
            out,
            "model,level,mae_base,mae_recon,mae_gain_pct,rmse_base,rmse_recon,rmse_gain_pct,dm_p_l1,dm_p_l2"
        )?;
    } else {
        writeln!(out, "model,level,mae_base,rmse_base")?;
    }
    for report in reports {
        for row in &report.levels {
            let label = row.level.label();
            if full {
                writeln!(
                    out,
                    "{},{label},{},{},{},{},{},{},{},{}",
                    report.model,
                    row.base.mae,
                    opt(row.reconciled.map(|r| r.mae)),
                    opt(row.mae_gain_pct),
                    row.base.rmse,
                    opt(row.reconciled.map(|r| r.rmse)),
                    opt(row.rmse_gain_pct),
                    opt(row.dm_l1.map(|d| d.p_value)),
                    opt(row.dm_l2.map(|d| d.p_value)),
                )?;
            } else {
                writeln!(out, "{},{label},{},{}", report.model, row.base.mae, row.base.rmse)?;
            }
        }
    }
    out.flush()
}

impl fmt::Display for BacktestReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} over {} days", self.model, self.days)?;
        writeln!(
            f,
            "{:>5} {:>9} {:>9} {:>7} {:>9} {:>9} {:>7} {:>7} {:>7}",
            "level", "MAE", "MAE rec", "gain%", "RMSE", "RMSE rec", "gain%", "p L1", "p L2"
        )?;
        let num = |v: Option<f64>, prec: usize| v.map_or("-".to_string(), |x| format!("{x:.prec$}"));
        for row in &self.levels {
            writeln!(
                f,
                "{:>5} {:>9.2} {:>9} {:>7} {:>9.2} {:>9} {:>7} {:>7} {:>7}",
                row.level.label(),
                row.base.mae,
                num(row.reconciled.map(|r| r.mae), 2),
                num(row.mae_gain_pct, 2),
                row.base.rmse,
                num(row.reconciled.map(|r| r.rmse), 2),
                num(row.rmse_gain_pct, 2),
                num(row.dm_l1.map(|d| d.p_value), 3),
                num(row.dm_l2.map(|d| d.p_value), 3),
            )?;
        }
        if self.passthrough_days > 0 {
            writeln!(f, "{} days passed through unreconciled", self.passthrough_days)?;
        }
        write!(
            f,
            "runtime {:.1} s (bootstrap {:.1} s, {:.3} s/day)",
            self.runtime.total_secs, self.runtime.bootstrap_secs, self.runtime.mean_day_secs
        )
    }
}

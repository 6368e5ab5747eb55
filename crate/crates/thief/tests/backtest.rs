mod common;

use common::{fixture, short_config};
use thief::backtest::{run, run_with, BacktestError, DaySink, Engine, COHERENCE_TOLERANCE};
use thief::config::ModelKind;
use thief::dataio::{write_block_values, ForecastRecord, PanelData};
use thief_core::{DayRecord, Hierarchy, Panel, ShrunkCovariance};

#[test]
fn smoke_run_on_sixty_days() {
    let f = fixture(3, 60);
    let cfg = short_config(&f.data, 40, 10, ModelKind::Arx);
    let out = run(&f.data, &cfg).unwrap();
    assert_eq!(out.report.days, 10);
    assert_eq!(out.forecasts.len(), 10);
    assert_eq!(out.report.levels.len(), 8);
    let h = Hierarchy::daily();
    for (rec, actual) in out.forecasts.iter().zip(&out.actuals) {
        let r = rec.reconciled.as_ref().unwrap();
        assert!(h.coherence_error(r) <= COHERENCE_TOLERANCE);
        assert!(h.coherence_error(actual) <= 1e-9);
        assert!(rec.base.iter().all(|v| v.is_finite()));
    }
    for row in &out.report.levels {
        assert!(row.base.mae > 0.0 && row.base.rmse >= row.base.mae);
        assert_eq!(row.base.n_days, 10);
        assert!(row.reconciled.is_some() && row.mae_gain_pct.is_some());
        // fewer than 30 days: no DM test
        assert!(row.dm_l1.is_none());
    }
    let dates: Vec<_> = out.forecasts.iter().map(|r| r.date).collect();
    assert_eq!(dates, f.data.dates[50..].to_vec());
}

#[test]
fn disabling_reconciliation_leaves_base_untouched() {
    let f = fixture(4, 80);
    let mut cfg = short_config(&f.data, 50, 12, ModelKind::Arx);
    let on = run(&f.data, &cfg).unwrap();
    cfg.reconcile = false;
    let off = run(&f.data, &cfg).unwrap();
    assert!(!off.report.has_reconciled());
    for (a, b) in on.forecasts.iter().zip(&off.forecasts) {
        assert_eq!(a.base, b.base);
        assert!(b.reconciled.is_none());
    }
    for (a, b) in on.report.levels.iter().zip(&off.report.levels) {
        assert_eq!(a.base, b.base);
        assert!(b.reconciled.is_none() && b.mae_gain_pct.is_none());
    }
}

fn actual_vectors(data: &PanelData, range: std::ops::Range<usize>) -> Vec<(chrono::NaiveDate, Vec<f64>)> {
    let h = Hierarchy::daily();
    range
        .map(|d| (data.dates[d], h.aggregate(&data.panel.day(d).prices).unwrap().into_inner()))
        .collect()
}

#[test]
fn perfect_external_forecasts_score_zero() {
    let f = fixture(5, 120);
    let path = f.path("perfect.csv");
    let rows = actual_vectors(&f.data, 0..120);
    write_block_values(rows.iter().map(|(d, v)| (*d, v.as_slice())), &path).unwrap();
    let mut cfg = short_config(&f.data, 60, 40, ModelKind::External);
    cfg.external_file = Some(path);
    let out = run(&f.data, &cfg).unwrap();
    assert_eq!(out.report.model, "perfect");
    for row in &out.report.levels {
        let r = row.reconciled.unwrap();
        assert!(row.base.mae == 0.0 && row.base.rmse == 0.0);
        assert!(r.mae <= 1e-9 && r.rmse <= 1e-9, "{r:?}");
        assert_eq!(row.mae_gain_pct.map(|g| g.abs() < 1e-6), Some(true));
    }
    // all-zero error history: every variance hits the floor
    assert!(out.diagnostics.iter().all(|d| d.floored == 60));
}

#[test]
fn external_model_requires_every_test_day() {
    let f = fixture(5, 100);
    let path = f.path("partial.csv");
    let rows = actual_vectors(&f.data, 0..95);
    write_block_values(rows.iter().map(|(d, v)| (*d, v.as_slice())), &path).unwrap();
    let mut cfg = short_config(&f.data, 60, 10, ModelKind::External);
    cfg.external_file = Some(path);
    match run(&f.data, &cfg) {
        Err(BacktestError::MissingExternal { date }) => assert_eq!(date, f.data.dates[95]),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn runs_are_deterministic() {
    let f = fixture(6, 90);
    let cfg = short_config(&f.data, 60, 15, ModelKind::Arx);
    let a = run(&f.data, &cfg).unwrap();
    let b = run(&f.data, &cfg).unwrap();
    assert_eq!(a.forecasts, b.forecasts);
    assert_eq!(a.report.levels, b.report.levels);
}

#[test]
fn narx_runs_are_deterministic_per_seed() {
    let f = fixture(7, 150);
    let mut cfg = short_config(&f.data, 120, 2, ModelKind::Narx);
    cfg.seed = 11;
    let a = run(&f.data, &cfg).unwrap();
    let b = run(&f.data, &cfg).unwrap();
    assert_eq!(a.forecasts, b.forecasts);
    cfg.seed = 12;
    let c = run(&f.data, &cfg).unwrap();
    assert_ne!(a.forecasts[0].base, c.forecasts[0].base);
}

#[test]
fn configuration_errors_are_reported() {
    let f = fixture(8, 60);
    let mut cfg = short_config(&f.data, 55, 10, ModelKind::Arx);
    assert!(matches!(run(&f.data, &cfg), Err(BacktestError::ShortHistory { available: 50, needed: 55 })));
    cfg.allow_short_window = false;
    cfg.train_window = 40;
    assert!(matches!(run(&f.data, &cfg), Err(BacktestError::Config(_))));
    let mut cfg = short_config(&f.data, 40, 10, ModelKind::Arx);
    cfg.test_end = cfg.test_end + chrono::Days::new(1);
    assert!(matches!(run(&f.data, &cfg), Err(BacktestError::Range { .. })));
}

#[test]
fn failing_block_is_identified() {
    // constant load makes the load feature column identically zero
    let f = fixture(9, 70);
    let days: Vec<DayRecord> = f
        .data
        .panel
        .days()
        .iter()
        .map(|d| DayRecord { load: [1.0; 24], ..d.clone() })
        .collect();
    let data = PanelData {
        panel: Panel::new(days).unwrap(),
        ..f.data.clone()
    };
    let cfg = short_config(&data, 50, 5, ModelKind::Arx);
    let err = run(&data, &cfg).unwrap_err();
    match &err {
        BacktestError::Block { date, .. } => assert_eq!(*date, data.dates[65]),
        other => panic!("unexpected {other:?}"),
    }
    assert!(err.to_string().contains("(24H, 0)"), "{err}");
}

struct Collect(Vec<ForecastRecord>);

impl DaySink for Collect {
    fn day(&mut self, r: &ForecastRecord, _: Option<&ShrunkCovariance>) -> thief::backtest::Result<()> {
        self.0.push(r.clone());
        Ok(())
    }
}

#[test]
fn resuming_from_a_checkpoint_matches_a_full_run() {
    let f = fixture(10, 90);
    let cfg = short_config(&f.data, 60, 20, ModelKind::Arx);
    let mut sink = Collect(Vec::new());
    let full = run_with(&f.data, &cfg, &[], &mut sink).unwrap();
    assert_eq!(sink.0, full.forecasts);

    let mut rest = Collect(Vec::new());
    let resumed = run_with(&f.data, &cfg, &full.forecasts[..8], &mut rest).unwrap();
    assert_eq!(rest.0.len(), 12);
    assert_eq!(resumed.forecasts, full.forecasts);
    assert_eq!(resumed.report.levels, full.report.levels);

    let mut shifted = full.forecasts[1..4].to_vec();
    shifted[0].date = full.forecasts[0].date;
    shifted[1].date = full.forecasts[0].date;
    assert!(matches!(
        run_with(&f.data, &cfg, &shifted, &mut ()),
        Err(BacktestError::Checkpoint(_))
    ));
}

#[test]
fn bootstrap_modes_differ_but_stay_positive_definite() {
    let f = fixture(11, 120);
    let mut cfg = short_config(&f.data, 80, 5, ModelKind::Arx);
    let fast = Engine::new(&f.data, &cfg).unwrap().bootstrap().unwrap();
    cfg.strict_bootstrap = true;
    let strict = Engine::new(&f.data, &cfg).unwrap().bootstrap().unwrap();
    // fast mode: one row per training target day
    assert_eq!(fast.len(), 80);
    // strict mode: only days with at least 40 prior training rows
    assert_eq!(strict.len(), 115 - (7 + 40));
    let (wf, ws) = (fast.estimate_covariance().unwrap(), strict.estimate_covariance().unwrap());
    assert!(wf.is_positive_definite() && ws.is_positive_definite());
    assert_ne!(wf.w, ws.w);
    // out-of-sample errors are larger than in-sample residuals
    let trace = |w: &ShrunkCovariance| (0..60).map(|i| w.w[(i, i)]).sum::<f64>();
    assert!(trace(&ws) > trace(&wf));
}

#[test]
fn full_window_bootstrap_fills_capacity() {
    let f = fixture(12, 1200);
    let mut cfg = short_config(&f.data, 1092, 3, ModelKind::Arx);
    cfg.allow_short_window = false;
    let h = Engine::new(&f.data, &cfg).unwrap().bootstrap().unwrap();
    assert_eq!(h.len(), 1092);
    assert_eq!(h.capacity(), 1092);
}

fn shift_after(data: &PanelData, d: usize, by: f64) -> PanelData {
    let days = data
        .panel
        .days()
        .iter()
        .enumerate()
        .map(|(t, r)| {
            if t <= d {
                return r.clone();
            }
            let mut r = r.clone();
            r.prices.iter_mut().for_each(|p| *p += by);
            r.load.iter_mut().for_each(|p| *p += by);
            r.wind.iter_mut().for_each(|p| *p += by);
            r.api2 += by;
            r.ttf += by;
            r
        })
        .collect();
    PanelData {
        panel: Panel::new(days).unwrap(),
        ..data.clone()
    }
}

#[test]
fn future_data_does_not_leak_into_forecasts() {
    let f = fixture(13, 100);
    let cfg = short_config(&f.data, 60, 30, ModelKind::Arx);
    let base = run(&f.data, &cfg).unwrap();
    for cut in [72, 85, 98] {
        // A large shift can make later covariances singular and abort the
        // run; the days streamed before that point are what matter.
        let mut sink = Collect(Vec::new());
        let _ = run_with(&shift_after(&f.data, cut, 1e4), &cfg, &[], &mut sink);
        let kept = cut + 1 - 70;
        assert!(sink.0.len() >= kept, "only {} days produced", sink.0.len());
        assert_eq!(&sink.0[..kept], &base.forecasts[..kept], "shift after day {cut}");
        if let Some(next) = sink.0.get(kept) {
            // the following day sees its own shifted exogenous inputs
            assert_ne!(next.base, base.forecasts[kept].base);
        }
    }
}

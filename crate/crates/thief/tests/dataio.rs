mod common;

use std::fs;
use std::path::Path;

use chrono::NaiveDate;
use thief::dataio::{
    load_external_base_forecasts, load_forecasts, load_panel, read_hourly, read_narx_weights,
    write_block_values, write_forecasts, write_narx_weights, ForecastRecord, Imputation, IngestError,
};
use thief::synth;
use thief_core::forecast::{Network, NarxModel};
use thief_core::{Hierarchy, HierarchyVector};

fn date(s: &str) -> NaiveDate {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
}

fn header() -> String {
    let hours: Vec<String> = (1..=24).map(|h| format!("h{h}")).collect();
    format!("date,{}\n", hours.join(","))
}

fn row(d: &str, values: &[String]) -> String {
    format!("{d},{}\n", values.join(","))
}

fn hours(f: impl Fn(usize) -> f64, n: usize) -> Vec<String> {
    (0..n).map(|h| f(h).to_string()).collect()
}

fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

#[test]
fn spring_day_gets_third_hour_interpolated() {
    let dir = tempfile::tempdir().unwrap();
    let mut body = header();
    body += &row("2021-03-27", &hours(|h| h as f64, 24));
    // 23 readings: hour 3 is skipped
    let short: Vec<String> = (0..24).filter(|&h| h != 2).map(|h| (10.0 * h as f64).to_string()).collect();
    body += &row("2021-03-28", &short);
    let p = write(dir.path(), "prices.csv", &body);
    let mut log = Vec::new();
    let rows = read_hourly(&p, &mut log).unwrap();
    assert_eq!(rows[1].1[1], 10.0);
    assert_eq!(rows[1].1[2], 20.0);
    assert_eq!(rows[1].1[3], 30.0);
    assert_eq!(log.len(), 1);
    assert_eq!(log[0].kind, Imputation::DstInserted);
    assert_eq!(log[0].date, date("2021-03-28"));
    assert_eq!(log[0].column, "h3");
}

#[test]
fn fall_day_averages_repeated_hour() {
    let dir = tempfile::tempdir().unwrap();
    let mut long = hours(|h| h as f64, 25);
    long[2] = "4".into();
    long[3] = "6".into();
    let body = header() + &row("2021-10-31", &long);
    let p = write(dir.path(), "prices.csv", &body);
    let mut log = Vec::new();
    let rows = read_hourly(&p, &mut log).unwrap();
    assert_eq!(rows[0].1[2], 5.0);
    // later hours shift back into place
    assert_eq!(rows[0].1[3], 4.0);
    assert_eq!(rows[0].1[23], 24.0);
    assert_eq!(log[0].kind, Imputation::DstAveraged);
}

#[test]
fn short_gaps_are_interpolated_and_edges_copied() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = hours(|h| 2.0 * h as f64, 24);
    v[5] = String::new();
    v[6] = String::new();
    v[0] = String::new();
    let body = header() + &row("2021-01-01", &v);
    let p = write(dir.path(), "prices.csv", &body);
    let mut log = Vec::new();
    let rows = read_hourly(&p, &mut log).unwrap();
    let h = rows[0].1;
    assert_eq!(h[0], 2.0);
    assert!((h[5] - 10.0).abs() < 1e-12 && (h[6] - 12.0).abs() < 1e-12);
    assert_eq!(log.len(), 3);
    assert!(log.iter().all(|e| e.kind == Imputation::Interpolated));
}

#[test]
fn long_gap_is_rejected_with_its_date() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = hours(|h| h as f64, 24);
    for h in 10..13 {
        v[h] = String::new();
    }
    let body = header() + &row("2021-01-01", &hours(|h| h as f64, 24)) + &row("2021-01-02", &v);
    let p = write(dir.path(), "prices.csv", &body);
    let err = read_hourly(&p, &mut Vec::new()).unwrap_err();
    match &err {
        IngestError::MissingHours { date: d, run, first_hour, .. } => {
            assert_eq!(*d, date("2021-01-02"));
            assert_eq!((*run, *first_hour), (3, 11));
        }
        other => panic!("unexpected {other:?}"),
    }
    assert!(err.to_string().contains("2021-01-02"));
}

#[test]
fn calendar_gaps_and_bad_rows_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let v = hours(|h| h as f64, 24);
    let gap = header() + &row("2021-01-01", &v) + &row("2021-01-03", &v);
    let err = read_hourly(&write(dir.path(), "a.csv", &gap), &mut Vec::new()).unwrap_err();
    assert!(matches!(err, IngestError::MissingDay { date: d, .. } if d == date("2021-01-02")));

    let back = header() + &row("2021-01-02", &v) + &row("2021-01-01", &v);
    assert!(read_hourly(&write(dir.path(), "b.csv", &back), &mut Vec::new()).is_err());

    let mut bad = v.clone();
    bad[4] = "abc".into();
    let body = header() + &row("2021-01-01", &bad);
    assert!(matches!(
        read_hourly(&write(dir.path(), "c.csv", &body), &mut Vec::new()),
        Err(IngestError::Malformed { .. })
    ));

    let body = header() + &row("2021-01-01", &hours(|h| h as f64, 22));
    assert!(read_hourly(&write(dir.path(), "d.csv", &body), &mut Vec::new()).is_err());

    let body = "day,h1\n2021-01-01,1\n";
    assert!(read_hourly(&write(dir.path(), "e.csv", body), &mut Vec::new()).is_err());
}

fn hourly_file(dir: &Path, name: &str, days: &[&str], f: impl Fn(usize, usize) -> f64) -> std::path::PathBuf {
    let mut body = header();
    for (d, day) in days.iter().enumerate() {
        body += &row(day, &hours(|h| f(d, h), 24));
    }
    write(dir, name, &body)
}

#[test]
fn panel_forward_fills_fuels_and_aligns_files() {
    let dir = tempfile::tempdir().unwrap();
    let days = ["2021-01-01", "2021-01-02", "2021-01-03", "2021-01-04"];
    let prices = hourly_file(dir.path(), "prices.csv", &days, |d, h| (d * 24 + h) as f64);
    let load = hourly_file(dir.path(), "load.csv", &days, |_, _| 50_000.0);
    // wind covers an extra earlier day, which is ignored
    let wind_days = ["2020-12-31", "2021-01-01", "2021-01-02", "2021-01-03", "2021-01-04"];
    let wind = hourly_file(dir.path(), "wind.csv", &wind_days, |d, _| 1000.0 * d as f64);
    let fuels = write(
        dir.path(),
        "fuels.csv",
        "date,api2_close,ttf_close\n2020-12-31,60,18\n2021-01-01,61,\n2021-01-04,64,20\n",
    );
    let data = load_panel(&prices, &load, &wind, &fuels).unwrap();
    assert_eq!(data.len(), 4);
    let p = &data.panel;
    assert_eq!(p.day(0).weekday, 5, "2021-01-01 is a Friday");
    assert_eq!((p.day(0).api2, p.day(0).ttf), (61.0, 18.0));
    assert_eq!((p.day(2).api2, p.day(2).ttf), (61.0, 18.0));
    assert_eq!((p.day(3).api2, p.day(3).ttf), (64.0, 20.0));
    assert_eq!(p.day(0).wind[0], 1000.0);
    let filled = data.log.iter().filter(|e| e.kind == Imputation::ForwardFilled).count();
    assert_eq!(filled, 1 + 2 + 2);
    assert_eq!(data.index_of(date("2021-01-03")), Some(2));
    assert_eq!(data.index_of(date("2021-02-03")), None);

    let short_load = hourly_file(dir.path(), "load2.csv", &days[..3], |_, _| 1.0);
    let err = load_panel(&prices, &short_load, &wind, &fuels).unwrap_err();
    assert!(matches!(err, IngestError::MissingDay { date: d, .. } if d == date("2021-01-04")));

    let late = write(dir.path(), "fuels2.csv", "date,api2_close,ttf_close\n2021-01-02,1,2\n");
    let err = load_panel(&prices, &load, &wind, &late).unwrap_err();
    assert!(matches!(err, IngestError::NoFuelHistory { date: d, .. } if d == date("2021-01-01")));
}

fn block_file(dir: &Path, name: &str, rows: &[(&str, usize, usize, f64)]) -> std::path::PathBuf {
    let mut body = "date,block_length,block_index,value\n".to_string();
    for (d, l, i, v) in rows {
        body += &format!("{d},{l},{i},{v}\n");
    }
    write(dir, name, &body)
}

#[test]
fn external_forecasts_are_validated() {
    let dir = tempfile::tempdir().unwrap();
    let h = Hierarchy::daily();
    let full: Vec<(&str, usize, usize, f64)> = h
        .blocks()
        .iter()
        .enumerate()
        .map(|(r, b)| ("2021-05-01", b.block_length, b.index, r as f64))
        .collect();
    let p = block_file(dir.path(), "xgb.csv", &full);
    let ext = load_external_base_forecasts(&p).unwrap();
    assert_eq!(ext.model_name, "xgb");
    assert_eq!(ext.days[&date("2021-05-01")].0, (0..60).map(|r| r as f64).collect::<Vec<_>>());

    let missing = block_file(dir.path(), "m.csv", &full[..59]);
    let err = load_external_base_forecasts(&missing).unwrap_err();
    assert!(matches!(err, IngestError::MissingBlock { .. }));
    assert!(err.to_string().contains("(1H, 23)"), "{err}");

    let mut dup = full.clone();
    dup.push(full[3]);
    assert!(matches!(
        load_external_base_forecasts(&block_file(dir.path(), "d.csv", &dup)),
        Err(IngestError::DuplicateBlock { .. })
    ));

    let mut unknown = full.clone();
    unknown[0] = ("2021-05-01", 5, 0, 1.0);
    assert!(matches!(
        load_external_base_forecasts(&block_file(dir.path(), "u.csv", &unknown)),
        Err(IngestError::UnknownBlock { .. })
    ));
    let mut out_of_range = full.clone();
    out_of_range[0] = ("2021-05-01", 4, 6, 1.0);
    assert!(load_external_base_forecasts(&block_file(dir.path(), "r.csv", &out_of_range)).is_err());
}

#[test]
fn forecasts_round_trip_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let mut state = 0x1234_5678_u64;
    let mut next = || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        f64::from_bits((state >> 12) | 0x4000_0000_0000_0000) - 3.0 + (state % 7) as f64 * 1e-17
    };
    let records: Vec<ForecastRecord> = (0..5)
        .map(|d| ForecastRecord {
            date: date("2022-02-27") + chrono::Days::new(d),
            base: HierarchyVector((0..60).map(|_| next() * 1e3).collect()),
            reconciled: (d % 2 == 0).then(|| HierarchyVector((0..60).map(|_| -next() / 7.0).collect())),
        })
        .collect();
    let p = dir.path().join("forecasts.csv");
    write_forecasts(&records, &p).unwrap();
    let back = load_forecasts(&p).unwrap();
    assert_eq!(back.len(), records.len());
    for (a, b) in records.iter().zip(&back) {
        assert_eq!(a.date, b.date);
        let bits = |v: &HierarchyVector| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.base), bits(&b.base));
        assert_eq!(a.reconciled.as_ref().map(bits), b.reconciled.as_ref().map(bits));
    }

    let p2 = dir.path().join("values.csv");
    write_block_values(records.iter().map(|r| (r.date, r.base.as_ref())), &p2).unwrap();
    let ext = load_external_base_forecasts(&p2).unwrap();
    assert_eq!(ext.days[&records[2].date], records[2].base);
}

#[test]
fn network_weights_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = Network::param_count(20, 5);
    let members = (0..3)
        .map(|m| Network::from_params(20, 5, (0..p).map(|i| (m * p + i) as f64 / 97.0 - 0.4).collect()).unwrap())
        .collect();
    let model = NarxModel { members };
    let path = dir.path().join("weights.csv");
    write_narx_weights(&model, &path).unwrap();
    assert_eq!(read_narx_weights(&path, 20, 5).unwrap(), model);
    assert!(read_narx_weights(&path, 20, 4).is_err());
}

#[test]
fn synthetic_files_load_and_are_deterministic() {
    let a = common::fixture(1, 365);
    assert_eq!(a.data.len(), 365);
    assert_eq!(a.data.dates[0], synth::default_start());
    // hourly files are complete; only weekend fuel closes are filled
    assert!(a.data.log.iter().all(|e| e.kind == Imputation::ForwardFilled));
    let b = common::fixture(1, 365);
    assert_eq!(a.data.panel, b.data.panel);
    for name in ["prices.csv", "load.csv", "wind.csv", "fuels.csv"] {
        assert_eq!(fs::read(a.path(name)).unwrap(), fs::read(b.path(name)).unwrap());
    }
    let c = common::fixture(2, 365);
    assert_ne!(a.data.panel, c.data.panel);
}

#[test]
fn synthetic_prices_include_negative_spikes() {
    for seed in 1..=3 {
        let m = synth::generate(seed, 1000, synth::default_start());
        let min = m.prices.iter().flatten().copied().fold(f64::INFINITY, f64::min);
        assert!(min < -100.0, "seed {seed}: min price {min}");
    }
}

#[test]
fn synthetic_prices_respond_to_wind() {
    // windier days are cheaper on average
    let m = synth::generate(5, 1000, synth::default_start());
    let daily = |v: &[[f64; 24]]| v.iter().map(|d| d.iter().sum::<f64>() / 24.0).collect::<Vec<f64>>();
    let (p, w) = (daily(&m.prices), daily(&m.wind));
    let n = p.len() as f64;
    let (mp, mw) = (p.iter().sum::<f64>() / n, w.iter().sum::<f64>() / n);
    let cov: f64 = p.iter().zip(&w).map(|(a, b)| (a - mp) * (b - mw)).sum();
    assert!(cov < 0.0);
}

//! CSV ingestion and output.
//!
//! Hourly files (`prices.csv`, `load.csv`, `wind.csv`) use the header
//! `date,h1,...,h24`. A row with 23 values is a spring-forward day (the
//! third hour is missing and gets interpolated); a row with 25 values is a
//! fall-back day (the two readings of the third hour are averaged). Empty
//! cells are missing values: runs of one or two are interpolated linearly
//! within the day, longer runs are rejected.
//!
//! `fuels.csv` has `date,api2_close,ttf_close`; non-trading days may be
//! absent or empty and are forward-filled from the last close.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{Datelike, NaiveDate};
use log::warn;
use thief_core::{BlockId, DayRecord, Hierarchy, HierarchyVector, Panel, HOURS};

pub const DATE_FORMAT: &str = "%Y-%m-%d";

/// Longest run of missing hourly values that is still interpolated.
pub const MAX_INTERPOLATED_RUN: usize = 2;

/// The hour slot (0-based) that is skipped or doubled on DST switch days.
const DST_SLOT: usize = 2;

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: line {line}: {message}")]
    Malformed {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("{path}: file contains no data rows")]
    Empty { path: PathBuf },
    #[error("{path}: missing day {date}")]
    MissingDay { path: PathBuf, date: NaiveDate },
    #[error("{path}: {date}: {run} consecutive missing hourly values starting at h{first_hour}")]
    MissingHours {
        path: PathBuf,
        date: NaiveDate,
        first_hour: usize,
        run: usize,
    },
    #[error("{path}: {date}: no fuel close on or before this day to forward-fill from")]
    NoFuelHistory { path: PathBuf, date: NaiveDate },
    #[error("{path}: {date}: missing block {block}")]
    MissingBlock {
        path: PathBuf,
        date: NaiveDate,
        block: BlockId,
    },
    #[error("{path}: {date}: duplicate block {block}")]
    DuplicateBlock {
        path: PathBuf,
        date: NaiveDate,
        block: BlockId,
    },
    #[error("{path}: line {line}: block {block} is not part of the hierarchy")]
    UnknownBlock {
        path: PathBuf,
        line: u64,
        block: BlockId,
    },
    #[error("{path}: {source}")]
    Panel {
        path: PathBuf,
        source: thief_core::Error,
    },
}

type Result<T> = std::result::Result<T, IngestError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Imputation {
    Interpolated,
    DstInserted,
    DstAveraged,
    ForwardFilled,
}

/// One imputed cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IngestionEvent {
    pub file: PathBuf,
    pub date: NaiveDate,
    pub column: String,
    pub kind: Imputation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PanelData {
    pub dates: Vec<NaiveDate>,
    pub panel: Panel,
    pub log: Vec<IngestionEvent>,
}

impl PanelData {
    pub fn index_of(&self, date: NaiveDate) -> Option<usize> {
        let first = *self.dates.first()?;
        let offset = usize::try_from((date - first).num_days()).ok()?;
        (offset < self.dates.len()).then_some(offset)
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }
}

fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn parse_date(path: &Path, line: u64, s: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s, DATE_FORMAT).map_err(|e| IngestError::Malformed {
        path: path.to_path_buf(),
        line,
        message: format!("bad date `{s}`: {e}"),
    })
}

fn parse_cell(path: &Path, line: u64, s: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        return Ok(None);
    }
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        _ => Err(IngestError::Malformed {
            path: path.to_path_buf(),
            line,
            message: format!("bad number `{s}`"),
        }),
    }
}

/// Hourly file as (date, 24 values) rows, with DST days normalized and short
/// gaps filled. Dates must be strictly increasing and contiguous.
pub fn read_hourly(path: &Path, log: &mut Vec<IngestionEvent>) -> Result<Vec<(NaiveDate, [f64; HOURS])>> {
    let mut reader = csv_reader(path)?;
    let headers = reader.headers().map_err(|source| IngestError::Csv {
        path: path.to_path_buf(),
        source,
    })?;
    let expected: Vec<String> = std::iter::once("date".to_string())
        .chain((1..=HOURS).map(|h| format!("h{h}")))
        .collect();
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(IngestError::Malformed {
            path: path.to_path_buf(),
            line: 1,
            message: format!("expected header `{}`", expected.join(",")),
        });
    }
    let mut out: Vec<(NaiveDate, [f64; HOURS])> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|source| IngestError::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let date = parse_date(path, line, record.get(0).unwrap_or(""))?;
        if let Some((prev, _)) = out.last() {
            if date <= *prev {
                return Err(IngestError::Malformed {
                    path: path.to_path_buf(),
                    line,
                    message: format!("date {date} does not follow {prev}"),
                });
            }
            let mut expected_next = prev.succ_opt().expect("date in range");
            if date != expected_next {
                // report the first missing day
                expected_next = expected_next.min(date);
                return Err(IngestError::MissingDay {
                    path: path.to_path_buf(),
                    date: expected_next,
                });
            }
        }
        let raw: Vec<Option<f64>> = record
            .iter()
            .skip(1)
            .map(|c| parse_cell(path, line, c))
            .collect::<Result<_>>()?;
        let hours = normalize_day(path, date, line, raw, log)?;
        out.push((date, hours));
    }
    if out.is_empty() {
        return Err(IngestError::Empty {
            path: path.to_path_buf(),
        });
    }
    Ok(out)
}

fn normalize_day(
    path: &Path,
    date: NaiveDate,
    line: u64,
    mut raw: Vec<Option<f64>>,
    log: &mut Vec<IngestionEvent>,
) -> Result<[f64; HOURS]> {
    let mut event = |column: String, kind| {
        warn!("{}: {date}: {column} {kind:?}", path.display());
        log.push(IngestionEvent {
            file: path.to_path_buf(),
            date,
            column,
            kind,
        });
    };
    let mut inserted = false;
    match raw.len() {
        HOURS => {}
        n if n == HOURS - 1 => {
            raw.insert(DST_SLOT, None);
            inserted = true;
        }
        n if n == HOURS + 1 => {
            let merged = match (raw[DST_SLOT], raw[DST_SLOT + 1]) {
                (Some(a), Some(b)) => Some(0.5 * (a + b)),
                (a, b) => a.or(b),
            };
            raw.remove(DST_SLOT + 1);
            raw[DST_SLOT] = merged;
            event(format!("h{}", DST_SLOT + 1), Imputation::DstAveraged);
        }
        n => {
            return Err(IngestError::Malformed {
                path: path.to_path_buf(),
                line,
                message: format!("expected 23 to 25 hourly values, found {n}"),
            })
        }
    }

    let mut hours = [0.0; HOURS];
    let mut h = 0;
    while h < HOURS {
        if let Some(v) = raw[h] {
            hours[h] = v;
            h += 1;
            continue;
        }
        let start = h;
        while h < HOURS && raw[h].is_none() {
            h += 1;
        }
        let run = h - start;
        if run > MAX_INTERPOLATED_RUN {
            return Err(IngestError::MissingHours {
                path: path.to_path_buf(),
                date,
                first_hour: start + 1,
                run,
            });
        }
        let left = start.checked_sub(1).and_then(|i| raw[i]);
        let right = raw.get(h).copied().flatten();
        for k in start..h {
            hours[k] = match (left, right) {
                (Some(a), Some(b)) => {
                    let t = (k + 1 - start) as f64 / (run + 1) as f64;
                    a + t * (b - a)
                }
                (Some(a), None) => a,
                (None, Some(b)) => b,
                (None, None) => unreachable!("a day has at most two missing hours here"),
            };
            let kind = if inserted && k == DST_SLOT {
                Imputation::DstInserted
            } else {
                Imputation::Interpolated
            };
            event(format!("h{}", k + 1), kind);
        }
    }
    Ok(hours)
}

/// Fuel closes aligned to `dates` with forward-fill.
fn read_fuels(
    path: &Path,
    dates: &[NaiveDate],
    log: &mut Vec<IngestionEvent>,
) -> Result<Vec<(f64, f64)>> {
    let mut reader = csv_reader(path)?;
    let headers = reader.headers().map_err(|source| IngestError::Csv {
        path: path.to_path_buf(),
        source,
    })?;
    if headers.iter().collect::<Vec<_>>() != ["date", "api2_close", "ttf_close"] {
        return Err(IngestError::Malformed {
            path: path.to_path_buf(),
            line: 1,
            message: "expected header `date,api2_close,ttf_close`".into(),
        });
    }
    let mut quotes: BTreeMap<NaiveDate, (Option<f64>, Option<f64>)> = BTreeMap::new();
    for record in reader.records() {
        let record = record.map_err(|source| IngestError::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 3 {
            return Err(IngestError::Malformed {
                path: path.to_path_buf(),
                line,
                message: format!("expected 3 fields, found {}", record.len()),
            });
        }
        let date = parse_date(path, line, &record[0])?;
        let api2 = parse_cell(path, line, &record[1])?;
        let ttf = parse_cell(path, line, &record[2])?;
        if quotes.insert(date, (api2, ttf)).is_some() {
            return Err(IngestError::Malformed {
                path: path.to_path_buf(),
                line,
                message: format!("duplicate date {date}"),
            });
        }
    }
    if quotes.is_empty() {
        return Err(IngestError::Empty {
            path: path.to_path_buf(),
        });
    }

    let mut last: (Option<f64>, Option<f64>) = (None, None);
    // closes published before the first panel day seed the forward-fill
    if let Some(first) = dates.first() {
        for (_, (a, t)) in quotes.range(..*first) {
            last = (a.or(last.0), t.or(last.1));
        }
    }
    let mut out = Vec::with_capacity(dates.len());
    for &date in dates {
        let (a, t) = quotes.get(&date).copied().unwrap_or((None, None));
        for (value, column, slot) in [(a, "api2_close", &mut last.0), (t, "ttf_close", &mut last.1)] {
            match value {
                Some(v) => *slot = Some(v),
                None => {
                    if slot.is_none() {
                        return Err(IngestError::NoFuelHistory {
                            path: path.to_path_buf(),
                            date,
                        });
                    }
                    log.push(IngestionEvent {
                        file: path.to_path_buf(),
                        date,
                        column: column.into(),
                        kind: Imputation::ForwardFilled,
                    });
                }
            }
        }
        out.push((last.0.expect("filled"), last.1.expect("filled")));
    }
    Ok(out)
}

fn align(
    path: &Path,
    dates: &[NaiveDate],
    rows: Vec<(NaiveDate, [f64; HOURS])>,
) -> Result<Vec<[f64; HOURS]>> {
    let by_date: BTreeMap<NaiveDate, [f64; HOURS]> = rows.into_iter().collect();
    dates
        .iter()
        .map(|d| {
            by_date.get(d).copied().ok_or(IngestError::MissingDay {
                path: path.to_path_buf(),
                date: *d,
            })
        })
        .collect()
}

/// Loads and validates the four input files. The price file defines the
/// calendar; the other files must cover every price day.
pub fn load_panel(price_file: &Path, load_file: &Path, wind_file: &Path, fuel_file: &Path) -> Result<PanelData> {
    let mut log = Vec::new();
    let prices = read_hourly(price_file, &mut log)?;
    let dates: Vec<NaiveDate> = prices.iter().map(|(d, _)| *d).collect();
    let load = align(load_file, &dates, read_hourly(load_file, &mut log)?)?;
    let wind = align(wind_file, &dates, read_hourly(wind_file, &mut log)?)?;
    let fuels = read_fuels(fuel_file, &dates, &mut log)?;
    let days = prices
        .into_iter()
        .zip(load)
        .zip(wind)
        .zip(fuels)
        .map(|((((date, prices), load), wind), (api2, ttf))| DayRecord {
            weekday: date.weekday().number_from_monday() as u8,
            prices,
            load,
            wind,
            api2,
            ttf,
        })
        .collect();
    let panel = Panel::new(days).map_err(|source| IngestError::Panel {
        path: price_file.to_path_buf(),
        source,
    })?;
    Ok(PanelData { dates, panel, log })
}

/// Forecasts produced outside this repository, one 60-entry vector per day.
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalBaseForecasts {
    pub model_name: String,
    pub days: BTreeMap<NaiveDate, HierarchyVector>,
}

/// Reads `date,block_length,block_index,value` rows. Also used for error
/// histories, which share the layout.
pub fn load_external_base_forecasts(path: &Path) -> Result<ExternalBaseForecasts> {
    let hierarchy = Hierarchy::daily();
    let mut reader = csv_reader(path)?;
    let headers = reader.headers().map_err(|source| IngestError::Csv {
        path: path.to_path_buf(),
        source,
    })?;
    if headers.iter().collect::<Vec<_>>() != ["date", "block_length", "block_index", "value"] {
        return Err(IngestError::Malformed {
            path: path.to_path_buf(),
            line: 1,
            message: "expected header `date,block_length,block_index,value`".into(),
        });
    }
    let mut days: BTreeMap<NaiveDate, Vec<Option<f64>>> = BTreeMap::new();
    for record in reader.records() {
        let record = record.map_err(|source| IngestError::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 4 {
            return Err(IngestError::Malformed {
                path: path.to_path_buf(),
                line,
                message: format!("expected 4 fields, found {}", record.len()),
            });
        }
        let date = parse_date(path, line, &record[0])?;
        let int = |s: &str| {
            s.parse::<usize>().map_err(|_| IngestError::Malformed {
                path: path.to_path_buf(),
                line,
                message: format!("bad integer `{s}`"),
            })
        };
        let block = BlockId::new(int(&record[1])?, int(&record[2])?);
        let row = hierarchy
            .position(block)
            .map_err(|_| IngestError::UnknownBlock {
                path: path.to_path_buf(),
                line,
                block,
            })?;
        let value = parse_cell(path, line, &record[3])?.ok_or_else(|| IngestError::Malformed {
            path: path.to_path_buf(),
            line,
            message: "empty value".into(),
        })?;
        let slots = days.entry(date).or_insert_with(|| vec![None; hierarchy.len()]);
        if slots[row].replace(value).is_some() {
            return Err(IngestError::DuplicateBlock {
                path: path.to_path_buf(),
                date,
                block,
            });
        }
    }
    let mut out = BTreeMap::new();
    for (date, slots) in days {
        let mut values = Vec::with_capacity(slots.len());
        for (row, v) in slots.into_iter().enumerate() {
            values.push(v.ok_or(IngestError::MissingBlock {
                path: path.to_path_buf(),
                date,
                block: hierarchy.blocks()[row],
            })?);
        }
        out.insert(date, HierarchyVector(values));
    }
    let model_name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "external".into());
    Ok(ExternalBaseForecasts {
        model_name,
        days: out,
    })
}

/// Base and (optionally) reconciled forecasts for one delivery day.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastRecord {
    pub date: NaiveDate,
    pub base: HierarchyVector,
    pub reconciled: Option<HierarchyVector>,
}

pub const FORECAST_HEADER: &str = "date,block_length,block_index,base,reconciled";

/// Streams forecast rows to disk, flushing after each day.
pub struct ForecastWriter {
    out: BufWriter<File>,
    path: PathBuf,
    blocks: Vec<BlockId>,
}

impl ForecastWriter {
    pub fn create(path: &Path) -> std::io::Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "{FORECAST_HEADER}")?;
        out.flush()?;
        Ok(Self::wrap(out, path))
    }

    /// Opens an existing file for appending; the header must already exist.
    pub fn append(path: &Path) -> std::io::Result<Self> {
        let file = std::fs::OpenOptions::new().append(true).open(path)?;
        Ok(Self::wrap(BufWriter::new(file), path))
    }

    fn wrap(out: BufWriter<File>, path: &Path) -> Self {
        Self {
            out,
            path: path.to_path_buf(),
            blocks: Hierarchy::daily().blocks().to_vec(),
        }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn write(&mut self, record: &ForecastRecord) -> std::io::Result<()> {
        let date = record.date.format(DATE_FORMAT);
        for (row, block) in self.blocks.iter().enumerate() {
            write!(
                self.out,
                "{date},{},{},{}",
                block.block_length, block.index, record.base[row]
            )?;
            match &record.reconciled {
                Some(r) => writeln!(self.out, ",{}", r[row])?,
                None => writeln!(self.out, ",")?,
            }
        }
        self.out.flush()
    }
}

pub fn write_forecasts(records: &[ForecastRecord], path: &Path) -> std::io::Result<()> {
    let mut w = ForecastWriter::create(path)?;
    for r in records {
        w.write(r)?;
    }
    Ok(())
}

/// Reads a file written by [`write_forecasts`]. Days must be complete.
pub fn load_forecasts(path: &Path) -> Result<Vec<ForecastRecord>> {
    let hierarchy = Hierarchy::daily();
    let mut reader = csv_reader(path)?;
    let headers = reader.headers().map_err(|source| IngestError::Csv {
        path: path.to_path_buf(),
        source,
    })?;
    if headers.iter().collect::<Vec<_>>().join(",") != FORECAST_HEADER {
        return Err(IngestError::Malformed {
            path: path.to_path_buf(),
            line: 1,
            message: format!("expected header `{FORECAST_HEADER}`"),
        });
    }
    type Slots = (Vec<Option<f64>>, Vec<Option<f64>>);
    let mut days: BTreeMap<NaiveDate, Slots> = BTreeMap::new();
    for record in reader.records() {
        let record = record.map_err(|source| IngestError::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let malformed = |message: String| IngestError::Malformed {
            path: path.to_path_buf(),
            line,
            message,
        };
        if record.len() != 5 {
            return Err(malformed(format!("expected 5 fields, found {}", record.len())));
        }
        let date = parse_date(path, line, &record[0])?;
        let len: usize = record[1].parse().map_err(|_| malformed("bad block length".into()))?;
        let idx: usize = record[2].parse().map_err(|_| malformed("bad block index".into()))?;
        let block = BlockId::new(len, idx);
        let row = hierarchy.position(block).map_err(|_| IngestError::UnknownBlock {
            path: path.to_path_buf(),
            line,
            block,
        })?;
        let base = parse_cell(path, line, &record[3])?.ok_or_else(|| malformed("empty base".into()))?;
        let rec = parse_cell(path, line, &record[4])?;
        let slots = days
            .entry(date)
            .or_insert_with(|| (vec![None; hierarchy.len()], vec![None; hierarchy.len()]));
        if slots.0[row].replace(base).is_some() {
            return Err(IngestError::DuplicateBlock {
                path: path.to_path_buf(),
                date,
                block,
            });
        }
        slots.1[row] = rec;
    }
    days.into_iter()
        .map(|(date, (base, rec))| {
            let missing = |row: usize| IngestError::MissingBlock {
                path: path.to_path_buf(),
                date,
                block: hierarchy.blocks()[row],
            };
            let base: Vec<f64> = base
                .into_iter()
                .enumerate()
                .map(|(row, v)| v.ok_or_else(|| missing(row)))
                .collect::<Result<_>>()?;
            let reconciled = if rec.iter().all(Option::is_none) {
                None
            } else {
                Some(HierarchyVector(
                    rec.into_iter()
                        .enumerate()
                        .map(|(row, v)| v.ok_or_else(|| missing(row)))
                        .collect::<Result<_>>()?,
                ))
            };
            Ok(ForecastRecord {
                date,
                base: HierarchyVector(base),
                reconciled,
            })
        })
        .collect()
}

/// Writes per-day vectors in the `date,block_length,block_index,value` layout.
pub fn write_block_values<'a>(
    rows: impl IntoIterator<Item = (NaiveDate, &'a [f64])>,
    path: &Path,
) -> std::io::Result<()> {
    let blocks = Hierarchy::daily().blocks().to_vec();
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "date,block_length,block_index,value")?;
    for (date, values) in rows {
        let date = date.format(DATE_FORMAT);
        for (block, v) in blocks.iter().zip(values) {
            writeln!(out, "{date},{},{},{v}", block.block_length, block.index)?;
        }
    }
    out.flush()
}

pub fn write_hourly(rows: &[(NaiveDate, [f64; HOURS])], path: &Path) -> std::io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write!(out, "date")?;
    for h in 1..=HOURS {
        write!(out, ",h{h}")?;
    }
    writeln!(out)?;
    for (date, values) in rows {
        write!(out, "{}", date.format(DATE_FORMAT))?;
        for v in values {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    out.flush()
}

/// Network weights as `member,param_index,value` rows. Parameter order per
/// member: input weights (hidden x inputs, row-major), hidden biases,
/// output weights, output bias.
pub fn write_narx_weights(model: &thief_core::forecast::NarxModel, path: &Path) -> std::io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "member,param_index,value")?;
    for (m, net) in model.members.iter().enumerate() {
        for (i, v) in net.params.iter().enumerate() {
            writeln!(out, "{m},{i},{v}")?;
        }
    }
    out.flush()
}

pub fn read_narx_weights(path: &Path, inputs: usize, hidden: usize) -> Result<thief_core::forecast::NarxModel> {
    let mut reader = csv_reader(path)?;
    let mut flat = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|source| IngestError::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let expected = flat.len();
        let p = thief_core::forecast::Network::param_count(inputs, hidden);
        let ok = record.len() == 3
            && record[0].parse::<usize>().ok() == Some(expected / p)
            && record[1].parse::<usize>().ok() == Some(expected % p);
        if !ok {
            return Err(IngestError::Malformed {
                path: path.to_path_buf(),
                line,
                message: "weights must be listed member by member in parameter order".into(),
            });
        }
        flat.push(parse_cell(path, line, &record[2])?.unwrap_or(f64::NAN));
    }
    thief_core::forecast::NarxModel::from_flat(inputs, hidden, &flat).map_err(|source| IngestError::Panel {
        path: path.to_path_buf(),
        source,
    })
}

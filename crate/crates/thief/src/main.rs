use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use chrono::NaiveDate;
use clap::{CommandFactory, Parser, Subcommand, ValueEnum};
use thief::backtest::{run_with, write_diagnostics, write_figure_day, FileSink};
use thief::config::{self, ModelKind};
use thief::dataio::{self, load_external_base_forecasts, load_forecasts, read_hourly, ForecastRecord};
use thief::report::{build_report, write_report_csv};
use thief::synth;
use thief_core::{ErrorHistory, Hierarchy, HierarchyVector, Reconciler, SummingMatrix};

/// Temporal hierarchy forecasting of day-ahead electricity prices.
///
/// Exit codes: 0 success, 1 validation or runtime error, 2 usage error.
/// The worker thread count can be set with THIEF_THREADS.
#[derive(Parser)]
#[command(name = "thief", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Arx,
    Narx,
    External,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Arx => ModelKind::Arx,
            ModelArg::Narx => ModelKind::Narx,
            ModelArg::External => ModelKind::External,
        }
    }
}

#[derive(clap::Args)]
struct InputFiles {
    #[arg(long, required_unless_present = "config")]
    prices: Option<PathBuf>,
    #[arg(long, required_unless_present = "config")]
    load: Option<PathBuf>,
    #[arg(long, required_unless_present = "config")]
    wind: Option<PathBuf>,
    #[arg(long, required_unless_present = "config")]
    fuels: Option<PathBuf>,
    /// Take the input paths from a backtest config file.
    #[arg(long, conflicts_with_all = ["prices", "load", "wind", "fuels"])]
    config: Option<PathBuf>,
    /// Print every imputed cell.
    #[arg(long)]
    verbose: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Check the input files and print what was imputed.
    Validate(InputFiles),
    /// Run a rolling backtest described by a config file.
    Backtest {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        model: Option<ModelArg>,
        #[arg(long)]
        external_file: Option<PathBuf>,
        #[arg(long)]
        no_reconcile: bool,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        strict_bootstrap: bool,
        /// Continue from the forecasts.csv already in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Reconcile base forecasts with a covariance estimated from past errors.
    Reconcile {
        /// `date,block_length,block_index,value` base forecasts.
        #[arg(long)]
        base_forecasts: PathBuf,
        /// Past base errors (forecast minus actual) in the same layout.
        #[arg(long)]
        error_history: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Most recent error days to use.
        #[arg(long, default_value_t = thief_core::reconcile::DEFAULT_CAPACITY)]
        capacity: usize,
    },
    /// Score a forecasts.csv against realized prices.
    Evaluate {
        #[arg(long)]
        forecasts: PathBuf,
        #[arg(long)]
        prices: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value = "model")]
        model_name: String,
    },
    /// Write a synthetic input file set.
    Synth {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 1826)]
        days: usize,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = synth::default_start())]
        start: NaiveDate,
    },
}

fn usage_error(message: &str) -> ! {
    Cli::command()
        .error(clap::error::ErrorKind::ArgumentConflict, message)
        .exit()
}

fn init_threads(config_threads: Option<usize>) -> Result<()> {
    let n = match std::env::var("THIEF_THREADS") {
        Ok(v) => Some(v.parse::<usize>().context("THIEF_THREADS must be a positive integer")?),
        Err(_) => config_threads,
    };
    if let Some(n) = n.filter(|&n| n > 0) {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring worker threads")?;
    }
    Ok(())
}

fn validate(files: InputFiles) -> Result<()> {
    let (prices, load, wind, fuels) = match files.config {
        Some(path) => {
            let c = read_config(&path)?;
            (c.prices, c.load, c.wind, c.fuels)
        }
        None => (
            files.prices.expect("required"),
            files.load.expect("required"),
            files.wind.expect("required"),
            files.fuels.expect("required"),
        ),
    };
    let data = dataio::load_panel(&prices, &load, &wind, &fuels)?;
    let mut per_file: BTreeMap<&Path, usize> = BTreeMap::new();
    for e in &data.log {
        *per_file.entry(e.file.as_path()).or_default() += 1;
    }
    println!(
        "{} days, {} to {}",
        data.len(),
        data.dates[0],
        data.dates[data.len() - 1]
    );
    for path in [&prices, &load, &wind, &fuels] {
        println!(
            "{}: ok, {} imputed cells",
            path.display(),
            per_file.get(path.as_path()).copied().unwrap_or(0)
        );
    }
    if files.verbose {
        for e in &data.log {
            println!("  {} {} {} {:?}", e.file.display(), e.date, e.column, e.kind);
        }
    }
    Ok(())
}

fn read_config(path: &Path) -> Result<config::RunConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    config::parse_config(&text, base).with_context(|| format!("{}", path.display()))
}

#[allow(clippy::too_many_arguments)]
fn backtest(
    config_path: &Path,
    model: Option<ModelArg>,
    external_file: Option<PathBuf>,
    no_reconcile: bool,
    out_dir: Option<PathBuf>,
    seed: Option<u64>,
    strict_bootstrap: bool,
    resume: bool,
) -> Result<()> {
    let mut run = read_config(config_path)?;
    let text = fs::read_to_string(config_path)?;
    init_threads(config::threads(&text)?)?;
    let bt = &mut run.backtest;
    if let Some(m) = model {
        bt.model = m.into();
    }
    if let Some(f) = external_file {
        if bt.model != ModelKind::External {
            usage_error("--external-file requires --model external");
        }
        bt.external_file = Some(f);
    }
    if no_reconcile {
        bt.reconcile = false;
    }
    if let Some(s) = seed {
        bt.seed = s;
    }
    bt.strict_bootstrap |= strict_bootstrap;
    if let Some(o) = out_dir {
        run.out_dir = o;
    }
    bt.validate()?;

    let data = dataio::load_panel(&run.prices, &run.load, &run.wind, &run.fuels)?;
    fs::create_dir_all(&run.out_dir).with_context(|| format!("creating {}", run.out_dir.display()))?;
    let checkpoint = run.out_dir.join("forecasts.csv");
    let stored = if resume && checkpoint.exists() {
        load_forecasts(&checkpoint)?
    } else {
        Vec::new()
    };
    let mut sink = FileSink::new(&run.out_dir, !stored.is_empty(), run.backtest.dump_covariance)?;
    let output = run_with(&data, &run.backtest, &stored, &mut sink)?;

    write_report_csv(std::slice::from_ref(&output.report), &run.out_dir.join("report.csv"))?;
    write_diagnostics(&output.diagnostics, &run.out_dir.join("lambda.csv"))?;
    if let Some(day) = run.backtest.plot_day {
        if !write_figure_day(&output, day, &run.out_dir.join("figure_day.csv"))? {
            bail!("plot_day {day} is outside the test range");
        }
    }
    println!("{}", output.report);
    Ok(())
}

fn reconcile_cmd(base_path: &Path, history_path: &Path, out_dir: &Path, capacity: usize) -> Result<()> {
    let base = load_external_base_forecasts(base_path)?;
    let errors = load_external_base_forecasts(history_path)?;
    let s = SummingMatrix::daily();
    let mut history = ErrorHistory::new(s.nodes(), capacity);
    for row in errors.days.values() {
        history.update_daily(row)?;
    }
    let w = history
        .estimate_covariance()
        .with_context(|| format!("{}: estimating covariance", history_path.display()))?;
    let reconciler = Reconciler::new(&w, &s)?;
    let records = base
        .days
        .iter()
        .map(|(date, b)| {
            Ok(ForecastRecord {
                date: *date,
                base: b.clone(),
                reconciled: Some(
                    reconciler
                        .reconcile(b)
                        .with_context(|| format!("{date}: reconciling"))?,
                ),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    fs::create_dir_all(out_dir)?;
    dataio::write_forecasts(&records, &out_dir.join("forecasts.csv"))?;
    println!(
        "reconciled {} days with {} error rows (lambda {:.4})",
        records.len(),
        w.observations,
        w.lambda
    );
    Ok(())
}

fn evaluate_cmd(forecasts: &Path, prices: &Path, out_dir: &Path, model: &str) -> Result<()> {
    let records = load_forecasts(forecasts)?;
    let mut log = Vec::new();
    let prices: BTreeMap<NaiveDate, _> = read_hourly(prices, &mut log)?.into_iter().collect();
    let hierarchy = Hierarchy::daily();
    let mut actuals = Vec::with_capacity(records.len());
    for r in &records {
        let p = prices
            .get(&r.date)
            .with_context(|| format!("no realized prices for {}", r.date))?;
        actuals.push(hierarchy.aggregate(p)?);
    }
    let base: Vec<HierarchyVector> = records.iter().map(|r| r.base.clone()).collect();
    let reconciled: Option<Vec<HierarchyVector>> = records.iter().map(|r| r.reconciled.clone()).collect();
    let report = build_report(model, &hierarchy, &base, reconciled.as_deref(), &actuals)?;
    fs::create_dir_all(out_dir)?;
    write_report_csv(std::slice::from_ref(&report), &out_dir.join("report.csv"))?;
    println!("{report}");
    Ok(())
}

fn synth_cmd(seed: u64, days: usize, out_dir: &Path, start: NaiveDate) -> Result<()> {
    if days < synth::MIN_DAYS {
        bail!("--days must be at least {}", synth::MIN_DAYS);
    }
    synth::generate(seed, days, start).write(out_dir)?;
    println!("wrote {days} days from {start} to {}", out_dir.display());
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Validate(files) => validate(files),
        Command::Backtest {
            config,
            model,
            external_file,
            no_reconcile,
            out_dir,
            seed,
            strict_bootstrap,
            resume,
        } => backtest(
            &config,
            model,
            external_file,
            no_reconcile,
            out_dir,
            seed,
            strict_bootstrap,
            resume,
        ),
        Command::Reconcile {
            base_forecasts,
            error_history,
            out_dir,
            capacity,
        } => {
            init_threads(None)?;
            reconcile_cmd(&base_forecasts, &error_history, &out_dir, capacity)
        }
        Command::Evaluate {
            forecasts,
            prices,
            out_dir,
            model_name,
        } => evaluate_cmd(&forecasts, &prices, &out_dir, &model_name),
        Command::Synth {
            seed,
            days,
            out_dir,
            start,
        } => synth_cmd(seed, days, &out_dir, start),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

#![allow(dead_code)]

use std::path::{Path, PathBuf};

use thief::config::{BacktestConfig, ModelKind};
use thief::dataio::{load_panel, PanelData};
use thief::synth;

pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub data: PanelData,
}

impl Fixture {
    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

pub fn load_dir(dir: &Path) -> PanelData {
    load_panel(
        &dir.join("prices.csv"),
        &dir.join("load.csv"),
        &dir.join("wind.csv"),
        &dir.join("fuels.csv"),
    )
    .unwrap()
}

/// Synthetic panel written to and read back from a temporary directory.
pub fn fixture(seed: u64, days: usize) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    synth::generate(seed, days, synth::default_start())
        .write(dir.path())
        .unwrap();
    let data = load_dir(dir.path());
    Fixture { dir, data }
}

/// Backtest over the last `test_days` days with a short training window.
pub fn short_config(data: &PanelData, window: usize, test_days: usize, model: ModelKind) -> BacktestConfig {
    let n = data.len();
    let mut c = BacktestConfig::new(data.dates[n - test_days], data.dates[n - 1], model);
    c.train_window = window;
    c.allow_short_window = true;
    c
}

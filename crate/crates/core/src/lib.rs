//! Temporal hierarchy forecasting for day-ahead electricity prices.
//!
//! The crate builds the mean-based hierarchy over the 24 hourly prices of a
//! delivery day (hourly products, 2H to 12H blocks and baseload), computes
//! base forecasts per block with an ARX regression or a small NARX network
//! ensemble, and reconciles base forecasts through a covariance-weighted
//! projection onto the coherent subspace.
//!
//! Everything here is pure computation over in-memory data. File formats,
//! the rolling backtest driver and the command-line interface live in the
//! `thief` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod error;
pub mod evaluate;
pub mod features;
pub mod forecast;
pub mod hierarchy;
pub mod linalg;
pub mod panel;
pub mod reconcile;
pub mod seed;
pub mod transform;

pub use error::{Error, Result};
pub use hierarchy::{BlockId, Hierarchy, HierarchyVector, LevelSpec, SummingMatrix};
pub use panel::{DayRecord, Panel, HOURS};
pub use reconcile::{ErrorHistory, Reconciler, ShrunkCovariance};
pub use transform::TransformParams;

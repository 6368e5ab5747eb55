//! In-repo base forecasters. Both operate on one block at a time and
//! predict the asinh-transformed block price; predictions are mapped back
//! to EUR/MWh with the target's transform parameters.

mod arx;
mod narx;

pub use arx::{fit_arx, predict_arx, ArxModel};
pub use narx::{fit_narx, fit_narx_with, predict_narx, Network, NarxConfig, NarxModel, CLIP};

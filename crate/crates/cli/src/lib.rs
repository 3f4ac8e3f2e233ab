//! Run orchestration for the wave-map solver: configuration, the scenario
//! library, output emission, and parameter sweeps. The binary in `main.rs`
//! is a thin argument parser over this crate.

pub mod config;
pub mod error;
pub mod plotdata;
pub mod runner;
pub mod scenarios;
pub mod sweep;

pub use error::{CliError, Result};

/// Build identifier printed by `--version` and stamped into every run.json.
pub fn build_identifier() -> &'static str {
    concat!("wavemap ", env!("CARGO_PKG_VERSION"))
}

/// 17-significant-digit float formatting, shared by every CSV this crate
/// writes so that read-backs are bit-exact and reruns byte-identical.
pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

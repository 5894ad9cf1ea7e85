//! Experiment driver for the polaron lab: configuration, subcommands and output.

pub mod commands;
pub mod config;
pub mod output;

use anyhow::{bail, Result};
use polaron_lab::stats::{linear_fit, LinearFit};

pub use commands::{run, Command};
pub use config::ExperimentConfig;
pub use output::{Check, Manifest, Report};

/// Least-squares fit of `log y` against `log x`.
pub fn fit_loglog(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    if xs.len() != ys.len() {
        bail!("fit_loglog: {} abscissae but {} ordinates", xs.len(), ys.len());
    }
    if xs.len() < 2 {
        bail!("fit_loglog needs at least two points, got {}", xs.len());
    }
    if xs.iter().chain(ys).any(|v| !(*v > 0.0) || !v.is_finite()) {
        bail!("fit_loglog needs finite positive data");
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    Ok(linear_fit(&lx, &ly)?)
}

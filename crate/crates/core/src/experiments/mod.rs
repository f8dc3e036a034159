//! Config-driven experiment runners behind the `qcert` CLI: TV scans,
//! distinguisher scans, martingale and Doob diagnostics, the kappa
//! separation demo and the bound calculator.
//!
//! Identical configs produce byte-identical outputs: all randomness is
//! derived from (seed, stream) pairs, trials reduce in index order, and
//! the single-thread flag changes scheduling only.

mod config;
mod runners;
mod tv;

pub use config::{fmt_f64, ExperimentConfig, FamilySpec, OutputFormat, StrategySpec, Table};
pub use runners::{cmd_bound_calc, cmd_doob, cmd_kappa_demo, cmd_martingale};
pub use tv::{
    build_diagonal_task, cmd_distinguisher_scan, cmd_tv_scan, exhaustive_tv, DiagonalTask,
    ExhaustiveResult, ScanPoint, ScanResult,
};

use crate::error::Result;

/// Dispatches a command by name; the CLI's entry point.
pub fn run_command(name: &str, config: &ExperimentConfig) -> Result<String> {
    match name {
        "tv-scan" => Ok(cmd_tv_scan(config)?.render(config.format)),
        "distinguisher-scan" => {
            let (table, _) = cmd_distinguisher_scan(config)?;
            Ok(table.render(config.format))
        }
        "martingale" => Ok(cmd_martingale(config)?.render(config.format)),
        "doob" => Ok(cmd_doob(config)?.render(config.format)),
        "kappa-demo" => Ok(cmd_kappa_demo(config)?.render(config.format)),
        "bound-calc" => cmd_bound_calc(config),
        other => Err(crate::error::Error::InvalidParameter {
            name: "command",
            message: format!("unknown command `{other}`"),
        }),
    }
}

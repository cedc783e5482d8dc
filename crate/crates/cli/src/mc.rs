//! Monte Carlo runs driven by a config file.

use std::path::PathBuf;

use thiserror::Error;
use uwcrb::montecarlo::{validate_bound, BoundValidationReport, MonteCarloError, Truth};
use uwcrb::ray::solve_k0_from_h;

use crate::config::SweepConfig;
use crate::sweep::{write_file, SweepError};

#[derive(Debug, Error)]
pub enum McError {
    #[error("config has no `monte_carlo` destination")]
    MissingDestination,
    #[error("destination is not reachable by a single-crossing ray: {0}")]
    InfeasibleDestination(String),
    #[error(transparent)]
    MonteCarlo(#[from] MonteCarloError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl From<SweepError> for McError {
    fn from(e: SweepError) -> Self {
        match e {
            SweepError::Io { path, source } => Self::Io { path, source },
            other => Self::InfeasibleDestination(other.to_string()),
        }
    }
}

/// Ground truth at the configured destination.
pub fn truth_from_config(config: &SweepConfig) -> Result<Truth, McError> {
    let (h, z_d) = config.monte_carlo.ok_or(McError::MissingDestination)?;
    let k0 = solve_k0_from_h(&config.profile, config.source_depth, z_d, h, &Default::default())
        .map_err(|e| McError::InfeasibleDestination(e.to_string()))?;
    Ok(Truth {
        profile: config.profile.clone(),
        z_s: config.source_depth,
        z_d,
        k0,
    })
}

pub fn run_monte_carlo(config: &SweepConfig, trials: usize, seed: u64) -> Result<BoundValidationReport, McError> {
    let truth = truth_from_config(config)?;
    Ok(validate_bound(&truth, &config.noise, trials, seed)?)
}

pub fn report_csv(report: &BoundValidationReport) -> String {
    format!("{}\n{}\n", BoundValidationReport::csv_header(), report.csv_row())
}

pub fn report_json(report: &BoundValidationReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

/// Writes the report to the configured CSV and JSON paths.
pub fn write_report(config: &SweepConfig, report: &BoundValidationReport) -> Result<(), McError> {
    write_file(&config.output.mc_csv, &report_csv(report))?;
    write_file(&config.output.mc_json, &report_json(report))?;
    Ok(())
}

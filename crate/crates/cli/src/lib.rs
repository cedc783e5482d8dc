//! Library side of the `uwcrb` command line tool: configuration files,
//! grid sweeps, point queries, Monte Carlo runs and heatmap rendering.

pub mod config;
pub mod heatmap;
pub mod mc;
pub mod sweep;

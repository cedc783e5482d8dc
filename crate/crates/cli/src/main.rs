use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use uwcrb::montecarlo::MonteCarloError;
use uwcrb_cli::config::{load_config, ConfigError};
use uwcrb_cli::heatmap::{render_heatmap, HeatmapError};
use uwcrb_cli::mc::{run_monte_carlo, write_report, McError};
use uwcrb_cli::sweep::{describe_point, query_point, run_sweep, write_file, SweepError};

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_IO: u8 = 4;

/// Range-estimation error bounds for underwater acoustic links.
#[derive(Parser)]
#[command(name = "uwcrb", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the bound over the destination grid and write the CSV.
    Sweep { config: PathBuf },
    /// Full report for one destination.
    Point {
        config: PathBuf,
        /// Horizontal distance to the destination, m.
        #[arg(long)]
        h: f64,
        /// Destination depth, m.
        #[arg(long)]
        zd: f64,
    },
    /// Compare estimator spread with the bound by simulation.
    Mc {
        config: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Render one column of a sweep CSV as a PPM image.
    Render {
        csv: PathBuf,
        #[arg(long)]
        column: String,
        #[arg(long)]
        out: PathBuf,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        let code = match e {
            ConfigError::Io { .. } => EXIT_IO,
            _ => EXIT_CONFIG,
        };
        Self { code, message: e.to_string() }
    }
}

impl From<SweepError> for Failure {
    fn from(e: SweepError) -> Self {
        let code = match e {
            SweepError::Io { .. } | SweepError::MalformedCsv { .. } => EXIT_IO,
            SweepError::OutsideEnvironment { .. } => EXIT_CONFIG,
            SweepError::InfeasibleGeometry { .. } => EXIT_NUMERICAL,
        };
        Self { code, message: e.to_string() }
    }
}

impl From<McError> for Failure {
    fn from(e: McError) -> Self {
        let code = match e {
            McError::Io { .. } => EXIT_IO,
            McError::MissingDestination | McError::MonteCarlo(MonteCarloError::TooFewTrials(_)) => EXIT_CONFIG,
            _ => EXIT_NUMERICAL,
        };
        Self { code, message: e.to_string() }
    }
}

impl From<HeatmapError> for Failure {
    fn from(e: HeatmapError) -> Self {
        let code = match e {
            HeatmapError::UnknownColumn(_) => EXIT_CONFIG,
            HeatmapError::MalformedCsv { .. } | HeatmapError::Io { .. } => EXIT_IO,
        };
        Self { code, message: e.to_string() }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Sweep { config } => {
            let config = load_config(&config)?;
            let grid = run_sweep(&config)?;
            println!(
                "{} of {} cells valid, written to {}",
                grid.valid_cells().count(),
                grid.cells.len(),
                config.output.sweep_csv.display()
            );
        }
        Command::Point { config, h, zd } => {
            let config = load_config(&config)?;
            let record = query_point(&config, h, zd)?;
            print!("{}", describe_point(&record));
            let json = serde_json::to_string_pretty(&record).expect("record serializes") + "\n";
            write_file(&config.output.point_json, &json)?;
        }
        Command::Mc { config, trials, seed } => {
            let config = load_config(&config)?;
            let report = run_monte_carlo(&config, trials, seed)?;
            write_report(&config, &report)?;
            println!(
                "{} trials ({} excluded): variance {:.6e} m^2, bound {:.6e} m^2, efficiency {:.4}, bias {:.3e} m",
                report.trials,
                report.excluded,
                report.empirical_variance,
                report.crb_d,
                report.efficiency_ratio,
                report.empirical_bias
            );
        }
        Command::Render { csv, column, out } => {
            let scale = render_heatmap(&csv, &column, &out)?;
            println!("{column}: {scale}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

//! `tsflip` command-line front end.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

#[derive(Parser)]
#[command(
    name = "tsflip",
    version,
    about = "Phase-only privatization of time series"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Privatize a sensitive series against an attacker's auxiliary series
    Privatize(PrivatizeArgs),
    /// Monte Carlo study on simulated bivariate VAR(1) data
    Simulate(SimulateArgs),
    /// Path and ACF discrepancies between two series
    Metrics(MetricsArgs),
    /// Compare the privatized release with white-noise addition
    CompareNoise(CompareNoiseArgs),
}

#[derive(Args, Clone)]
struct FilterArgs {
    /// Privacy budget, 0 <= delta < 1
    #[arg(long, default_value_t = 0.0, value_parser = parse_delta)]
    delta: f64,
    /// Polynomial trend order removed before filtering (0 = mean only, max 5)
    #[arg(long = "trend-order", default_value_t = 0)]
    trend_order: usize,
    /// Number of cepstral coefficients
    #[arg(long = "K", default_value_t = 25)]
    k: usize,
    /// Filter half-length
    #[arg(long = "M", default_value_t = 45)]
    m: usize,
    /// Frequency grid intervals on [0, pi]
    #[arg(long = "grid-N", default_value_t = 2048)]
    grid_n: usize,
    /// Spectral estimator: var:<p> or flattop
    #[arg(long, default_value = "var:1")]
    estimator: String,
    /// Correlation cutoff for the flat-top bandwidth rule [default: max(1/T, 2 sqrt(log10 T / T))]
    #[arg(long = "threshold-C")]
    threshold_c: Option<f64>,
    /// Seed for every random draw
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Maximum lag for the ACF discrepancy
    #[arg(long = "H", default_value_t = 24)]
    h: usize,
    /// Phase expansion used for the finite filter
    #[arg(long, value_enum, default_value_t = Representation::Unwound)]
    representation: Representation,
    /// Re-add the fitted trend after filtering, or filter trend and residual together
    #[arg(long = "trend-handling", value_enum, default_value_t = TrendMode::Readd)]
    trend_handling: TrendMode,
}

#[derive(Args)]
struct PrivatizeArgs {
    /// CSV holding the sensitive series
    #[arg(long)]
    x: PathBuf,
    /// CSV holding the attacker's series
    #[arg(long)]
    z: PathBuf,
    /// Column of --x to use [default: last column]
    #[arg(long = "x-column")]
    x_column: Option<String>,
    /// Column of --z to use [default: last column]
    #[arg(long = "z-column")]
    z_column: Option<String>,
    /// Output prefix; writes <out>.csv, <out>.report.json, <out>.filter.json and plot CSVs
    #[arg(long)]
    out: PathBuf,
    /// Standardize both series before privatizing and map the output back
    #[arg(long)]
    standardize: bool,
    /// R-function: random two-component Beta mixture or a fixed one, both matched to the trend order
    #[arg(long = "r-function", value_enum, default_value_t = RChoice::Random)]
    r_function: RChoice,
    #[command(flatten)]
    filter: FilterArgs,
}

#[derive(Args)]
struct SimulateArgs {
    /// Contemporaneous correlation of the simulated pair, |rho| <= 0.99
    #[arg(long, value_parser = parse_rho)]
    rho: f64,
    /// Innovation variance
    #[arg(long, default_value_t = 0.5)]
    sigma2: f64,
    /// Series length
    #[arg(long = "T", default_value_t = 200)]
    t: usize,
    /// Monte Carlo replicates
    #[arg(long, default_value_t = 100)]
    reps: usize,
    /// Linear trend "a,b" added to x as a + b t
    #[arg(long = "trend-x", value_parser = parse_pair)]
    trend_x: Option<[f64; 2]>,
    /// Linear trend "a,b" added to z as a + b t
    #[arg(long = "trend-z", value_parser = parse_pair)]
    trend_z: Option<[f64; 2]>,
    /// Output prefix; writes <out>.replicates.csv and <out>.summary.json
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    filter: FilterArgs,
}

#[derive(Args)]
struct MetricsArgs {
    /// CSV with the original series
    #[arg(long)]
    original: PathBuf,
    /// CSV with the privatized series
    #[arg(long)]
    privatized: PathBuf,
    /// Column of --original [default: last column]
    #[arg(long = "original-column")]
    original_column: Option<String>,
    /// Column of --privatized [default: last column]
    #[arg(long = "privatized-column")]
    privatized_column: Option<String>,
    /// Maximum lag for the ACF discrepancy
    #[arg(long = "H", default_value_t = 24)]
    h: usize,
}

#[derive(Args)]
struct CompareNoiseArgs {
    #[arg(long)]
    x: PathBuf,
    #[arg(long)]
    z: PathBuf,
    #[arg(long = "x-column")]
    x_column: Option<String>,
    #[arg(long = "z-column")]
    z_column: Option<String>,
    /// Signal-to-noise ratio of the noise-addition baseline
    #[arg(long, default_value_t = 1.0)]
    snr: f64,
    /// Output prefix; writes <out>.comparison.json and <out>.paths.csv
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    filter: FilterArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum Representation {
    Unwound,
    Direct,
}

#[derive(Clone, Copy, ValueEnum)]
enum TrendMode {
    Readd,
    Direct,
}

#[derive(Clone, Copy, ValueEnum)]
enum RChoice {
    Random,
    Fixed,
}

fn parse_delta(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if (0.0..1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("budget out of range: need 0 <= delta < 1, got {v}"))
    }
}

fn parse_rho(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v.abs() <= 0.99 {
        Ok(v)
    } else {
        Err(format!("rho must satisfy |rho| <= 0.99, got {v}"))
    }
}

fn parse_pair(s: &str) -> Result<[f64; 2], String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err(format!("expected `a,b`, got `{s}`"));
    }
    let a = parts[0]
        .trim()
        .parse()
        .map_err(|_| format!("bad number `{}`", parts[0]))?;
    let b = parts[1]
        .trim()
        .parse()
        .map_err(|_| format!("bad number `{}`", parts[1]))?;
    Ok([a, b])
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Privatize(a) => commands::privatize(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Metrics(a) => commands::metrics(a),
        Command::CompareNoise(a) => commands::compare_noise(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(commands::CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("\nFor more information, try '--help'.");
            ExitCode::from(1)
        }
        Err(commands::CliError::Compute(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

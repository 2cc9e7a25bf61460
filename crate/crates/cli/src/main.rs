//! `mweyl`: batch front end for the m-function toolkit.
//!
//! Exit status is 0 on success, 1 for configuration errors and 2 for
//! numerical failures (non-convergence, failed self-test).

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Numerical(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl From<mweyl_core::Error> for CliError {
    fn from(e: mweyl_core::Error) -> Self {
        match e {
            mweyl_core::Error::InvalidInput(_) | mweyl_core::Error::Json(_) | mweyl_core::Error::SpecViolation { .. } => {
                CliError::Config(e.to_string())
            }
            other => CliError::Numerical(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "mweyl", version, about = "Matrix Weyl m-functions, Siegel distances and reflectionless checks")]
pub struct Cli {
    /// JSON config file; command-line flags override its fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory for CSV and JSON outputs.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Print a human-readable summary to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate M₊, M₋ or M̃₋ at a list of spectral parameters.
    Mfunction(MfunctionArgs),
    /// Reflectionless residual of a whole-line potential over a set A.
    Reflectionless(ReflectionlessArgs),
    /// Value-distribution defect between the two half-line m-functions.
    BpDefect(BpArgs),
    /// ω-limit approximation of a half-line potential.
    Omega(OmegaArgs),
    /// Siegel distance between two points, or a validation battery.
    SiegelDist(SiegelArgs),
    /// Sign-convention and distance validation; nonzero exit on failure.
    Selftest,
}

#[derive(Debug, Args)]
pub struct SpecArg {
    /// Potential spec JSON file.
    #[arg(long)]
    pub spec: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MfunctionArgs {
    #[command(flatten)]
    pub spec: SpecArg,
    /// Spectral parameters, e.g. `0+2i,1+0.5i`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub z: Option<Vec<String>>,
    /// `plus`, `minus` or `tilde-minus`.
    #[arg(long)]
    pub side: Option<String>,
    /// Site for `plus` and `tilde-minus`.
    #[arg(long, allow_hyphen_values = true)]
    pub site: Option<i64>,
    /// Absolute convergence tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ReflectionlessArgs {
    #[command(flatten)]
    pub spec: SpecArg,
    /// Set A as `lo:hi[,lo:hi…]`.
    #[arg(long, allow_hyphen_values = true)]
    pub a: Option<String>,
    /// ε schedule, e.g. `1e-4,1e-5`.
    #[arg(long, value_delimiter = ',')]
    pub eps: Option<Vec<f64>>,
    /// Spacing of the t-grid.
    #[arg(long)]
    pub grid_step: Option<f64>,
}

#[derive(Debug, Args)]
pub struct BpArgs {
    #[command(flatten)]
    pub spec: SpecArg,
    /// Sites N, e.g. `4,16,64,256`.
    #[arg(long, value_delimiter = ',')]
    pub n_list: Option<Vec<i64>>,
    /// Set A as `lo:hi[,lo:hi…]`.
    #[arg(long, allow_hyphen_values = true)]
    pub a: Option<String>,
    /// Set S as `lo:hi[,lo:hi…]`; `inf` allowed.
    #[arg(long, allow_hyphen_values = true)]
    pub s: Option<String>,
    /// Compression vector entries, e.g. `1` or `0.6,0.8i`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub c: Option<Vec<String>>,
    /// Imaginary part of the spectral parameter.
    #[arg(long)]
    pub eps: Option<f64>,
    /// `dirichlet` or `deep`.
    #[arg(long)]
    pub minus_seed: Option<String>,
    /// Quadrature nodes per unit length of A.
    #[arg(long)]
    pub points_per_unit: Option<usize>,
}

#[derive(Debug, Args)]
pub struct OmegaArgs {
    #[command(flatten)]
    pub spec: SpecArg,
    /// Largest shift examined.
    #[arg(long)]
    pub n_max: Option<i64>,
    /// Clustering radius in the potential metric.
    #[arg(long)]
    pub cluster_tol: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SiegelArgs {
    /// First point: a complex scalar or `{"re": [[…]], "im": [[…]]}`.
    #[arg(long, allow_hyphen_values = true)]
    pub z1: Option<String>,
    /// Second point, same format.
    #[arg(long, allow_hyphen_values = true)]
    pub z2: Option<String>,
    /// Run the validation battery on this many random samples instead.
    #[arg(long)]
    pub trials: Option<usize>,
    /// RNG seed for the battery.
    #[arg(long)]
    pub seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.jobs {
        if n == 0 {
            eprintln!("config error: --jobs must be positive");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("config error: {e}");
            return ExitCode::from(1);
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.code())
        }
    }
}

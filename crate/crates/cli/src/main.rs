//! `sae`: denoise matrices, run regularized correspondence analysis,
//! cross-validate `δ` and run the simulation studies.

mod commands;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "sae", version, about = "Stable autoencoders for low-rank matrix estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate the low-rank mean of a matrix.
    Denoise(DenoiseArgs),
    /// Correspondence analysis of a count table, optionally regularized.
    Ca(CaArgs),
    /// Run a simulation study from a JSON config.
    Simulate(SimulateArgs),
    /// Choose the bootstrap parameter by cell-wise cross-validation.
    Cv(CvArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Sa,
    Isa,
    TsvdK,
    TsvdTau,
    Asymp,
    Ln,
    Svst,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum NoiseArg {
    Gaussian,
    Poisson,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum LnScaleArg {
    Sigma2,
    NSigma2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Regularize {
    None,
    Sa,
    Isa,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CvEstimatorArg {
    Sa,
    Isa,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ReportFormat {
    Csv,
    Table,
}

#[derive(Debug, Args)]
struct InputArgs {
    /// Input matrix: CSV, or MatrixMarket (`.mtx` or a `%%MatrixMarket` banner).
    #[arg(long = "in", value_name = "FILE")]
    input: PathBuf,
    /// The first CSV row holds column names.
    #[arg(long)]
    header: bool,
    /// The first CSV column holds row names.
    #[arg(long)]
    labels: bool,
}

#[derive(Debug, Args)]
struct IsaArgs {
    /// Maximum ISA iterations.
    #[arg(long, default_value_t = 500)]
    max_iter: usize,
    /// ISA stopping tolerance on the relative step size.
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    /// Relative singular-value cutoff for the effective rank.
    #[arg(long, default_value_t = 1e-7)]
    rank_tol: f64,
}

#[derive(Debug, Args)]
struct DenoiseArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, value_enum)]
    method: MethodArg,
    #[arg(long, value_enum, default_value_t = NoiseArg::Gaussian)]
    noise: NoiseArg,
    /// Bootstrap parameter δ in (0, 1).
    #[arg(long, default_value_t = 0.5)]
    delta: f64,
    /// Gaussian noise variance; the shrinkers estimate it when absent.
    #[arg(long)]
    sigma2: Option<f64>,
    /// Target rank (sa, tsvd-k, ln).
    #[arg(long)]
    rank: Option<usize>,
    /// Noise scale inside the low-noise shrinker.
    #[arg(long, value_enum, default_value_t = LnScaleArg::Sigma2)]
    ln_scale: LnScaleArg,
    #[command(flatten)]
    isa: IsaArgs,
    /// Output CSV for the estimate; diagnostics go to `<stem>.diag.json`.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CaArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, value_enum, default_value_t = Regularize::None)]
    regularize: Regularize,
    #[arg(long, default_value_t = 0.5)]
    delta: f64,
    /// Number of axes; required unless `--regularize isa`, which defaults
    /// to the effective rank.
    #[arg(long)]
    rank: Option<usize>,
    /// Remove empty rows and columns before the analysis.
    #[arg(long)]
    drop_empty: bool,
    #[command(flatten)]
    isa: IsaArgs,
    /// Output prefix: writes `.mu.csv`, `.m.csv`, `.rows.csv`, `.cols.csv`
    /// and `.json`.
    #[arg(long, value_name = "PREFIX")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Study config file, or the name of a bundled config
    /// (table1_desk, poisson_desk, subsample_desk).
    #[arg(long)]
    config: String,
    /// Replaces the config's base_seed.
    #[arg(long, env = "SAE_SEED")]
    seed: Option<u64>,
    /// Worker threads; all cores when absent.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, value_enum, default_value_t = ReportFormat::Csv)]
    format: ReportFormat,
    /// Report file; standard output when absent.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CvArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, value_enum, default_value_t = NoiseArg::Gaussian)]
    noise: NoiseArg,
    #[arg(long)]
    sigma2: Option<f64>,
    #[arg(long, value_enum, default_value_t = CvEstimatorArg::Isa)]
    estimator: CvEstimatorArg,
    /// Rank for `--estimator sa`.
    #[arg(long)]
    rank: Option<usize>,
    /// Candidate values of δ.
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9")]
    grid: Vec<f64>,
    /// Fraction of cells hidden in each fold.
    #[arg(long, default_value_t = 0.1)]
    holdout: f64,
    #[arg(long, default_value_t = 3)]
    folds: usize,
    /// Mask seed; 0 when neither this nor SAE_SEED is set.
    #[arg(long, env = "SAE_SEED")]
    seed: Option<u64>,
    #[command(flatten)]
    isa: IsaArgs,
    /// Also write the grid and the winner as JSON.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Denoise(a) => commands::denoise(a),
        Command::Ca(a) => commands::ca(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Cv(a) => commands::cv(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => e.report(),
    }
}

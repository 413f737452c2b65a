//! `rffq`: build quantizers, sketch data sets, check the moment formulas against
//! simulation, and run the kernel-approximation and ridge-regression experiments.

mod commands;
mod config;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rffq::Error;

#[derive(Parser, Debug)]
#[command(name = "rffq", version, about = "Quantized random Fourier features")]
struct Cli {
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true, env = "RFFQ_THREADS")]
    threads: Option<usize>,
    /// File of `key = value` lines supplying defaults for the subcommand flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Leave the generation time out of CSV reports.
    #[arg(long, global = true)]
    no_timestamp: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Construct a quantizer and write it as JSON.
    BuildQuantizer(BuildArgs),
    /// Sketch a data file into the packed binary format.
    Sketch(SketchArgs),
    /// Describe a packed sketch.
    Info(InfoArgs),
    /// Compare a closed-form result with simulation on a grid.
    Verify(VerifyArgs),
    /// Scale-invariant kernel approximation errors per method.
    Kae(KaeArgs),
    /// Ridge regression on the cubic synthetic task.
    Krr(KrrArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum KindArg {
    Lm,
    Lm2,
    Stocq,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum FormatArg {
    Sparse,
    Csv,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum EstimatorArg {
    Simple,
    Normalized,
}

#[derive(Args, Debug)]
pub struct BuildArgs {
    #[arg(long, value_enum)]
    pub kind: KindArg,
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..=8))]
    pub bits: u32,
    /// Output file; JSON goes to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SketchArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "sparse")]
    pub format: FormatArg,
    /// Feature dimension of sparse files (largest index by default).
    #[arg(long)]
    pub dim: Option<usize>,
    /// Quantizer JSON from `build-quantizer`.
    #[arg(long)]
    pub quantizer: PathBuf,
    #[arg(long)]
    pub gamma: f64,
    #[arg(long)]
    pub m: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Store decoded row norms for the normalized estimator.
    #[arg(long)]
    pub norms: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct InfoArgs {
    pub sketch: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Theorem {
    /// Arcsine law of raw features.
    Marginal,
    /// Unit mass and sign dominance of the pair law.
    Joint,
    /// Exact variance of stochastic rounding.
    StocqVariance,
    /// Mean and variance of the simple Lloyd-Max estimator.
    LmMoments,
    /// Mean and variance of the normalized Lloyd-Max estimator.
    Normalized,
    /// Debiased-variance ratio, normalized over simple.
    DbVariance,
    /// Growth of the quantized product moment in `rho`.
    Monotonicity,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[arg(long, value_enum)]
    pub theorem: Theorem,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..=8))]
    pub bits: u32,
    /// Kernel widths (a default grid per check when omitted).
    #[arg(long, value_delimiter = ',')]
    pub gamma: Vec<f64>,
    /// Correlations (a default grid per check when omitted).
    #[arg(long, value_delimiter = ',')]
    pub rho: Vec<f64>,
    /// Replications, or samples for the marginal check.
    #[arg(long)]
    pub reps: Option<usize>,
    /// Features per replication.
    #[arg(long, default_value_t = 256)]
    pub m: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Report file; CSV goes to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct KaeArgs {
    /// Data file; a synthetic Gaussian sample is used when omitted.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "sparse")]
    pub format: FormatArg,
    #[arg(long)]
    pub dim: Option<usize>,
    /// Rows subsampled from the data.
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    /// Largest n accepted; dense n x n grams beyond this are refused.
    #[arg(long, default_value_t = 2000)]
    pub max_n: usize,
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    #[arg(long, default_value_t = 1024)]
    pub m: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [1u32, 2])]
    pub bits: Vec<u32>,
    #[arg(long, value_enum, default_value = "simple")]
    pub estimator: EstimatorArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct KrrArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [0u64, 1, 2, 3, 4])]
    pub seeds: Vec<u64>,
    #[arg(long, value_delimiter = ',', default_values_t = [128usize, 256, 512, 1024])]
    pub m: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [1u32, 2])]
    pub bits: Vec<u32>,
    /// Kernel widths tuned over per method, m and seed.
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.2, 0.3])]
    pub gammas: Vec<f64>,
    /// Ridge penalties (10^-6 .. 10^2 when omitted).
    #[arg(long, value_delimiter = ',')]
    pub lambdas: Vec<f64>,
    #[arg(long, default_value_t = 40_000)]
    pub n_train: usize,
    #[arg(long, default_value_t = 10_000)]
    pub n_test: usize,
    #[arg(long, default_value_t = 10)]
    pub d: usize,
    #[arg(long, default_value_t = 1.0)]
    pub cubic_scale: f64,
    #[arg(long, default_value_t = 1.0)]
    pub noise_sd: f64,
    #[arg(long, value_enum, default_value = "simple")]
    pub estimator: EstimatorArg,
    /// Bits charged per unquantized feature in the memory column.
    #[arg(long, default_value_t = 32)]
    pub float_bits: u32,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Failure of a command, carrying its exit status.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Verification(String),
    Io(String),
    Compute(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Self::Usage(_) => 2,
            Self::Verification(_) => 3,
            Self::Io(_) => 4,
            Self::Compute(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            Self::Usage(m) | Self::Verification(m) | Self::Io(m) | Self::Compute(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::Io(_) | Error::Json(_) | Error::Parse { .. } | Error::CorruptSketch(_) | Error::StreamMismatch(_) => {
                Self::Io(msg)
            }
            Error::Domain(_) | Error::Input(_) | Error::DimensionMismatch { .. } => Self::Usage(msg),
            _ => Self::Compute(msg),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e.to_string())
    }
}

pub struct Context {
    pub timestamp: bool,
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Compute(e.to_string()))?;
    }
    let ctx = Context { timestamp: !cli.no_timestamp };
    match cli.command {
        Command::BuildQuantizer(a) => commands::build_quantizer(&a),
        Command::Sketch(a) => commands::sketch(&a),
        Command::Info(a) => commands::info(&a),
        Command::Verify(a) => verify::run(&a, &ctx),
        Command::Kae(a) => commands::kae(&a, &ctx),
        Command::Krr(a) => commands::krr(&a, &ctx),
    }
}

fn main() -> ExitCode {
    let args = match config::splice(std::env::args().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: config file: {e}");
            return ExitCode::from(4);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

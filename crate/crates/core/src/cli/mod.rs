//! Command-line front end. Every subcommand writes CSV to `--out` (stdout
//! when absent) and honors `--seed`, `--workers` and `--config`.

mod commands;
pub mod config;
pub mod svg;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};

use crate::error::Error;
use crate::schedule::DEFAULT_EPS_CLAMP;

pub use svg::{render_svg, write_svg};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "flowscope", version, about = "Oracle velocity fields, sweeps and samplers for rectified flow matching")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Base random seed
    #[arg(long, env = "FLOWSCOPE_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; 0 uses the available parallelism
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
    /// Config file with `section.key=value` lines; flags override it
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output path (stdout when absent)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write an SVG plot of the first series to this path
    #[arg(long)]
    pub svg: Option<PathBuf>,
    /// Clamp margin near t = 1 for oracle coefficients
    #[arg(long, default_value_t = DEFAULT_EPS_CLAMP)]
    pub eps: f64,
}

#[derive(Debug, Clone, Args)]
pub struct DataSource {
    /// Dataset file (.csv, or the binary format for any other extension)
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Rows of generated unit-Gaussian data when --data is absent
    #[arg(long, default_value_t = 1400)]
    pub n: usize,
    /// Dimension of generated unit-Gaussian data when --data is absent
    #[arg(long, default_value_t = 64)]
    pub d: usize,
}

#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    /// Number of Euler steps
    #[arg(long, default_value_t = 50)]
    pub steps: usize,
    /// Timestep shift factor s (1 keeps the uniform grid)
    #[arg(long, default_value_t = 1.0)]
    pub shift: f64,
    /// Split time for a two-stage grid with half the steps on each side
    #[arg(long)]
    pub split: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DataKind {
    Gaussian,
    Ring,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TargetArg {
    Cfm,
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StatArg {
    /// Model MSE against conditional and oracle targets
    Loss,
    /// Mean L2 norm of the field output
    VelocityNorm,
    /// Mean distance between labeled and null-class predictions
    CondUncond,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset
    GenData {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = DataKind::Gaussian)]
        kind: DataKind,
        /// Rows (gaussian) or rows per class (ring)
        #[arg(long, default_value_t = 1400)]
        n: usize,
        /// Dimension (gaussian only; ring data is 2-D)
        #[arg(long, default_value_t = 64)]
        d: usize,
        /// Number of ring classes
        #[arg(long, default_value_t = 8)]
        classes: usize,
        #[arg(long, default_value_t = 8.0)]
        radius: f64,
        /// Per-class standard deviation
        #[arg(long, default_value_t = 1.0)]
        spread: f64,
        /// Standardize every coordinate to zero mean and unit variance
        #[arg(long)]
        normalize: bool,
    },
    /// Oracle-vs-conditional target MSE across t
    SweepTargetMse {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        source: DataSource,
        /// Monte Carlo samples per time
        #[arg(long, default_value_t = 64)]
        mc: usize,
        /// Comma-separated times [default: 50 uniform on [0, 0.98] plus 0.01..0.15]
        #[arg(long, value_delimiter = ',')]
        times: Option<Vec<f64>>,
    },
    /// Mean top-1 posterior weight across t
    SweepTop1 {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        source: DataSource,
        #[arg(long, default_value_t = 64)]
        mc: usize,
        /// Comma-separated times [default: 50 uniform on [0, 0.98] plus 0.01..0.15]
        #[arg(long, value_delimiter = ',')]
        times: Option<Vec<f64>>,
    },
    /// Top-1 sweeps over data dimension and size
    SweepDims {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "16,256,4096")]
        dims: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "1000")]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 64)]
        mc: usize,
        #[arg(long, value_delimiter = ',', default_value = "0,0.02,0.05,0.1,0.15,0.2")]
        times: Vec<f64>,
    },
    /// Train the MLP velocity model; writes the loss history
    Train {
        #[command(flatten)]
        common: Common,
        /// Labeled or unlabeled dataset file
        #[arg(long)]
        data: PathBuf,
        /// Checkpoint output path
        #[arg(long)]
        model_out: PathBuf,
        #[arg(long, default_value_t = 256)]
        hidden: usize,
        #[arg(long, default_value_t = 64)]
        time_dim: usize,
        #[arg(long, default_value_t = 16)]
        class_dim: usize,
        #[arg(long, default_value_t = 5000)]
        steps: usize,
        #[arg(long, default_value_t = 256)]
        batch_size: usize,
        #[arg(long, default_value_t = 1e-4)]
        lr: f64,
        #[arg(long, default_value_t = 0.9)]
        beta1: f64,
        #[arg(long, default_value_t = 0.995)]
        beta2: f64,
        /// Probability of replacing the class with the null class
        #[arg(long, default_value_t = 0.1)]
        class_drop: f64,
        #[arg(long, value_enum, default_value_t = TargetArg::Cfm)]
        target: TargetArg,
        /// Ignore labels and train without class embeddings
        #[arg(long)]
        unconditional: bool,
    },
    /// Per-t statistics of a trained model (or the oracle when --model is absent)
    EvalLoss {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = StatArg::Loss)]
        stat: StatArg,
        #[arg(long, default_value_t = 256)]
        mc: usize,
        /// Comma-separated times [default: 50 uniform on [0, 0.98] plus 0.01..0.15]
        #[arg(long, value_delimiter = ',')]
        times: Option<Vec<f64>>,
        /// Evaluate with labels and the class-restricted oracle
        #[arg(long)]
        conditional: bool,
    },
    /// Euler sampling from the model (or the oracle when --model is absent)
    Sample {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long)]
        class: Option<u32>,
        /// Guidance scale; 1 disables guidance
        #[arg(long, default_value_t = 1.0)]
        cfg_scale: f64,
        /// Guidance interval as lo,hi
        #[arg(long, value_delimiter = ',', default_value = "0,1")]
        cfg_interval: Vec<f64>,
        #[arg(long, default_value_t = 1)]
        n_samples: usize,
        /// Write terminal states only
        #[arg(long)]
        terminal_only: bool,
    },
    /// Oracle-then-model sampling; writes the memorization curve
    MixedSample {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, value_delimiter = ',', default_value = "0,0.1,0.3,0.7,1")]
        t_switch: Vec<f64>,
        #[arg(long, default_value_t = 50)]
        n_seeds: usize,
        /// Sample class `seed mod K` with class-restricted oracle steps
        #[arg(long)]
        conditional: bool,
        /// Also write the trajectory of seed 0 at the first switch time
        #[arg(long)]
        trajectory_out: Option<PathBuf>,
    },
    /// Re-noise a reference point to t_resume and integrate to 1
    Resume {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, default_value_t = 0.3)]
        t_resume: f64,
        /// Reference point as comma-separated values
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        reference: Option<Vec<f64>>,
        /// Reference point as a row of --data
        #[arg(long)]
        reference_row: Option<usize>,
        #[arg(long)]
        class: Option<u32>,
        #[arg(long, default_value_t = 1)]
        n_seeds: usize,
    },
    /// Fraction of shifted-grid times at or below a threshold
    ShiftTable {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 50)]
        steps: usize,
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.3,0.5,0.7,1,2,4")]
        shifts: Vec<f64>,
        #[arg(long, default_value_t = 0.2)]
        threshold: f64,
    },
    /// Plot one series of a sweep CSV as SVG (written to --out)
    Plot {
        #[command(flatten)]
        common: Common,
        /// Sweep CSV produced by another subcommand
        #[arg(long)]
        input: PathBuf,
        /// Index of the series in file order
        #[arg(long, default_value_t = 0)]
        series: usize,
    },
}

impl Command {
    pub fn common(&self) -> &Common {
        match self {
            Command::GenData { common, .. }
            | Command::SweepTargetMse { common, .. }
            | Command::SweepTop1 { common, .. }
            | Command::SweepDims { common, .. }
            | Command::Train { common, .. }
            | Command::EvalLoss { common, .. }
            | Command::Sample { common, .. }
            | Command::MixedSample { common, .. }
            | Command::Resume { common, .. }
            | Command::ShiftTable { common, .. }
            | Command::Plot { common, .. } => common,
        }
    }
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidInput(_) => EXIT_USAGE,
        _ => EXIT_RUNTIME,
    }
}

/// Finds `--config` in raw arguments.
fn config_path(args: &[String]) -> Option<PathBuf> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}

/// Splices config-file arguments in after the subcommand name.
fn expand_config(args: Vec<String>) -> crate::Result<Vec<String>> {
    let Some(path) = config_path(&args) else { return Ok(args) };
    let Some(sub_pos) = args.iter().skip(1).position(|a| !a.starts_with('-')).map(|p| p + 1) else {
        return Ok(args);
    };
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let entries = config::parse_config(&text, &path)?;
    let root = Cli::command();
    let extra = config::config_args(&entries, &root, &args[sub_pos], &args[sub_pos + 1..], &path)?;
    let mut out = args[..=sub_pos].to_vec();
    out.extend(extra);
    out.extend_from_slice(&args[sub_pos + 1..]);
    Ok(out)
}

/// Parses `argv` (including the program name), runs the subcommand, and
/// returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let args: Vec<String> = argv.into_iter().map(|a| a.into().to_string_lossy().into_owned()).collect();
    let args = match expand_config(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match with_workers(cli.command.common().workers, || commands::execute(&cli.command)) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(feature = "parallel")]
fn with_workers<R: Send>(workers: usize, f: impl FnOnce() -> crate::Result<R> + Send) -> crate::Result<R> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if workers > 0 {
        builder = builder.num_threads(workers);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::invalid(format!("cannot start {workers} worker threads: {e}")))?;
    pool.install(f)
}

#[cfg(not(feature = "parallel"))]
fn with_workers<R: Send>(_workers: usize, f: impl FnOnce() -> crate::Result<R> + Send) -> crate::Result<R> {
    f()
}

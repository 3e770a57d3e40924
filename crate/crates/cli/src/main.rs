//! `geodr`: training-set generation, VAE training and sampling, ensemble
//! metrics, flow simulation, latent-space inversion and baselines.
//!
//! Exit codes: 0 success, 1 configuration error, 2 I/O error, 3 numerical
//! failure.

mod commands;
mod export;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use geodr::error::{Error, ErrorClass};

#[derive(Parser)]
#[command(name = "geodr", version, about = "Deep generative parameterization of binary geological media")]
struct Cli {
    /// Worker threads for parallel stages (falls back to GEODR_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a training set of channel fields.
    GenTi(GenTiArgs),
    /// Train (or resume training of) a VAE on a training set.
    Train(TrainArgs),
    /// Draw realizations from a trained VAE.
    Sample(SampleArgs),
    /// Compare two ensembles: connectivity envelopes, pattern variability, conditioning.
    Metrics(MetricsArgs),
    /// Solve steady-state flow through a field and extract observations.
    Flow(FlowArgs),
    /// Invert head observations in the VAE latent space.
    Invert(InvertArgs),
    /// PCA/DCT generation or SGR inversion baselines.
    Baseline(BaselineArgs),
}

#[derive(Args)]
pub struct GenTiArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// `object` (sinuous channels) or `ds` (direct sampling from --ti).
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub ny: Option<usize>,
    #[arg(long)]
    pub nx: Option<usize>,
    /// Hard data CSV (`row,col,facies`).
    #[arg(long)]
    pub hard: Option<PathBuf>,
    /// Training image for `ds` mode (SGRID).
    #[arg(long)]
    pub ti: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write a PGM image per realization.
    #[arg(long)]
    pub pgm: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// KL weight.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Latent dimension.
    #[arg(long)]
    pub latent: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Continue training the model already at --out.
    #[arg(long)]
    pub resume: bool,
    /// Model file; the loss history, optimizer state and resolved config
    /// are written next to it with suffixes appended.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub reloops: Option<usize>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub pgm: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct MetricsArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Reference ensemble (typically the training set).
    #[arg(long)]
    pub set_a: Option<PathBuf>,
    #[arg(long)]
    pub set_b: Option<PathBuf>,
    #[arg(long)]
    pub hard: Option<PathBuf>,
    #[arg(long)]
    pub max_lag: Option<usize>,
    /// Use at most this many fields of each set, in file order.
    #[arg(long)]
    pub max_fields: Option<usize>,
    /// Summary CSV; envelope tables and the resolved config go next to it.
    #[arg(long)]
    pub report: PathBuf,
}

#[derive(Args)]
pub struct FlowArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub field: Option<PathBuf>,
    /// Standard deviation of Gaussian noise added to the observations.
    #[arg(long)]
    pub noise_sd: Option<f64>,
    #[arg(long)]
    pub noise_seed: Option<u64>,
    /// Head field (SGRIDF); observations and the resolved config go next to it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct InvertArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Observations CSV (`row,col,value`).
    #[arg(long)]
    pub obs: Option<PathBuf>,
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub sigma_e: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// True field, for posterior scoring.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Continue the run stored in --out up to --iters iterations.
    #[arg(long)]
    pub resume: bool,
    #[arg(long)]
    pub pgm: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct BaselineArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// `pca`, `dct` or `sgr`.
    #[arg(long)]
    pub kind: Option<String>,
    /// Training set (pca, dct).
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub components: Option<usize>,
    /// Training image (sgr).
    #[arg(long)]
    pub ti: Option<PathBuf>,
    #[arg(long)]
    pub obs: Option<PathBuf>,
    #[arg(long)]
    pub hard: Option<PathBuf>,
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub pgm: bool,
    #[arg(long)]
    pub out: PathBuf,
}

fn exit_code(e: &Error) -> u8 {
    match e.class() {
        ErrorClass::Config => 1,
        ErrorClass::Io => 2,
        ErrorClass::Numeric => 3,
    }
}

fn init_threads(flag: Option<usize>) -> Result<(), Error> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var("GEODR_THREADS") {
            Ok(v) => Some(
                v.trim()
                    .parse()
                    .map_err(|e| Error::Config(format!("GEODR_THREADS = {v:?}: {e}")))?,
            ),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        if n == 0 {
            return Err(Error::Config("thread count must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = init_threads(cli.threads).and_then(|()| match cli.cmd {
        Command::GenTi(a) => commands::gen_ti(a),
        Command::Train(a) => commands::train(a),
        Command::Sample(a) => commands::sample(a),
        Command::Metrics(a) => commands::metrics(a),
        Command::Flow(a) => commands::flow(a),
        Command::Invert(a) => commands::invert(a),
        Command::Baseline(a) => commands::baseline(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

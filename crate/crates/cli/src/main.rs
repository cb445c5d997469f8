mod commands;
mod output;
mod run_config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use taylorcast_core::config::KeyValues;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config file or parameter values. Exit code 1.
    Usage(String),
    /// Anything that fails after the run started. Exit code 2.
    Runtime(String),
}

impl From<taylorcast_core::Error> for CliError {
    fn from(e: taylorcast_core::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "taylorcast",
    version,
    about = "Continuous-time video forecasting with learned Taylor expansions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Flat key=value file; flags override it.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<String>,
    /// Worker threads for data generation and evaluation.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    /// Any parameter of the command, e.g. `--set lr=0.001`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a model on a synthetic dataset.
    Train(TrainArgs),
    /// Per-frame metrics of a checkpoint on held-out clips.
    Eval(EvalArgs),
    /// Frames at arbitrary time offsets from one clip.
    Predict(PredictArgs),
    /// SSIM over a long horizon for several re-encoding step sizes.
    Rollout(RolloutArgs),
    /// Derivative estimation and Euler-vs-Taylor on analytic functions.
    Lab(LabArgs),
    /// Write a synthetic dataset to disk.
    GenData(GenDataArgs),
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// `shapes` or `field`.
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    data_seed: Option<u64>,
    #[arg(long)]
    gamma: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Continue from this checkpoint.
    #[arg(long, value_name = "PATH")]
    resume: Option<String>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long, value_name = "PATH")]
    checkpoint: Option<String>,
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    data_seed: Option<u64>,
    #[arg(long)]
    clips: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long, value_name = "PATH")]
    checkpoint: Option<String>,
    /// Clip file written by `gen-data`; otherwise a synthetic clip is drawn.
    #[arg(long, value_name = "PATH")]
    clip: Option<String>,
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    data_seed: Option<u64>,
    /// Index of the synthetic clip.
    #[arg(long)]
    index: Option<u64>,
    /// Offsets in frame units, e.g. `0.5,1.3,2`.
    #[arg(long, allow_hyphen_values = true)]
    taus: Option<String>,
    /// `start,step,count`.
    #[arg(long, allow_hyphen_values = true)]
    grid: Option<String>,
}

#[derive(Args, Debug)]
struct RolloutArgs {
    #[arg(long, value_name = "PATH")]
    checkpoint: Option<String>,
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    data_seed: Option<u64>,
    #[arg(long)]
    clips: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    /// Step sizes, e.g. `10,7,5,2,1`.
    #[arg(long)]
    steps: Option<String>,
}

#[derive(Args, Debug)]
struct LabArgs {
    /// `sin`, `cos`, `exp`, `sin2d` or `all`.
    #[arg(long)]
    family: Option<String>,
    /// `table` or `euler`.
    #[arg(long)]
    mode: Option<String>,
    /// Training steps of the estimator.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    t0: Option<f64>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    order: Option<usize>,
    #[arg(long)]
    euler_dt: Option<f64>,
}

#[derive(Args, Debug)]
struct GenDataArgs {
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    data_seed: Option<u64>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    observed: Option<usize>,
    #[arg(long)]
    future: Option<usize>,
    #[arg(long)]
    blobs: Option<usize>,
}

fn put<T: std::fmt::Display>(kv: &mut KeyValues, key: &str, value: &Option<T>) {
    if let Some(v) = value {
        kv.set(key, v);
    }
}

impl Command {
    fn flags(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        match self {
            Command::Train(a) => {
                put(&mut kv, "dataset", &a.dataset);
                put(&mut kv, "data_seed", &a.data_seed);
                put(&mut kv, "gamma", &a.gamma);
                put(&mut kv, "epochs", &a.epochs);
                put(&mut kv, "resume", &a.resume);
            }
            Command::Eval(a) => {
                put(&mut kv, "checkpoint", &a.checkpoint);
                put(&mut kv, "dataset", &a.dataset);
                put(&mut kv, "data_seed", &a.data_seed);
                put(&mut kv, "clips", &a.clips);
                put(&mut kv, "horizon", &a.horizon);
            }
            Command::Predict(a) => {
                put(&mut kv, "checkpoint", &a.checkpoint);
                put(&mut kv, "clip", &a.clip);
                put(&mut kv, "dataset", &a.dataset);
                put(&mut kv, "data_seed", &a.data_seed);
                put(&mut kv, "index", &a.index);
                put(&mut kv, "taus", &a.taus);
                put(&mut kv, "grid", &a.grid);
            }
            Command::Rollout(a) => {
                put(&mut kv, "checkpoint", &a.checkpoint);
                put(&mut kv, "dataset", &a.dataset);
                put(&mut kv, "data_seed", &a.data_seed);
                put(&mut kv, "clips", &a.clips);
                put(&mut kv, "horizon", &a.horizon);
                put(&mut kv, "steps", &a.steps);
            }
            Command::Lab(a) => {
                put(&mut kv, "family", &a.family);
                put(&mut kv, "mode", &a.mode);
                put(&mut kv, "steps", &a.steps);
                put(&mut kv, "t0", &a.t0);
                put(&mut kv, "horizon", &a.horizon);
                put(&mut kv, "order", &a.order);
                put(&mut kv, "euler_dt", &a.euler_dt);
            }
            Command::GenData(a) => {
                put(&mut kv, "dataset", &a.dataset);
                put(&mut kv, "data_seed", &a.data_seed);
                put(&mut kv, "count", &a.count);
                put(&mut kv, "grid", &a.grid);
                put(&mut kv, "observed", &a.observed);
                put(&mut kv, "future", &a.future);
                put(&mut kv, "blobs", &a.blobs);
            }
        }
        kv
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut flags = KeyValues::new();
    for pair in &cli.set {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got `{pair}`")))?;
        flags.set(k.trim(), v.trim());
    }
    flags.merge(&cli.command.flags());
    put(&mut flags, "seed", &cli.seed);
    put(&mut flags, "out", &cli.out);
    let threads = match cli.threads {
        Some(0) => return Err(CliError::Usage("--threads must be at least 1".into())),
        Some(n) => n,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let ctx = commands::Context {
        config_file: cli.config,
        flags,
        threads,
    };
    match cli.command {
        Command::Train(_) => commands::train(&ctx),
        Command::Eval(_) => commands::eval(&ctx),
        Command::Predict(_) => commands::predict(&ctx),
        Command::Rollout(_) => commands::rollout(&ctx),
        Command::Lab(_) => commands::lab(&ctx),
        Command::GenData(_) => commands::gen_data(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            match e {
                CliError::Usage(_) => ExitCode::from(1),
                CliError::Runtime(_) => ExitCode::from(2),
            }
        }
    }
}

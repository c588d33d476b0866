mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::FileConfig;
use manifest::RunManifest;

#[derive(Debug, Parser)]
#[command(
    name = "plastickv",
    version,
    about = "Plastic KV-cache transformer engine"
)]
struct Cli {
    /// TOML file with defaults for any flag; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Write the run manifest here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Log level for stderr diagnostics (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "warn")]
    log_level: tracing_subscriber::filter::LevelFilter,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Few-shot accuracy of a checkpoint.
    Eval(EvalArgs),
    /// Plastic versus reference attention on a random model.
    Equiv(EquivArgs),
    /// Post-training quantization of a checkpoint.
    Quantize(QuantizeArgs),
    /// Dump a checkpoint and the plastic cache part-way through an episode.
    Inspect(InspectArgs),
    /// Per-token latency of reference and plastic attention.
    Bench(BenchArgs),
    /// Write a random or hand-wired checkpoint.
    Init(InitArgs),
}

#[derive(Debug, Args, Clone, Default)]
pub struct DataArgs {
    /// Omniglot root (falls back to $PLASTICKV_DATA). Without one, a
    /// synthetic dataset is generated.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Use the synthetic dataset even when a data root is configured.
    #[arg(long)]
    pub synthetic: bool,
    /// Omniglot split: evaluation or background.
    #[arg(long)]
    pub split: Option<String>,
}

#[derive(Debug, Args, Clone)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Classes per episode.
    #[arg(long)]
    pub n: Option<usize>,
    /// Shots per class.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub episodes: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// float, plastic, quant or quant-plastic.
    #[arg(long)]
    pub mode: Option<String>,
    /// Second mode to run on the same episodes; reports prediction agreement.
    #[arg(long)]
    pub compare: Option<String>,
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Debug, Args, Clone)]
pub struct EquivArgs {
    /// Model width.
    #[arg(long)]
    pub d: Option<usize>,
    /// Attention heads.
    #[arg(long)]
    pub h: Option<usize>,
    /// Sequence length.
    #[arg(long)]
    pub t: Option<usize>,
    /// Attention window (defaults to the sequence length).
    #[arg(long)]
    pub w: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub scaled: bool,
    /// Differences must stay below this (default 1e-5).
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args, Clone)]
pub struct QuantizeArgs {
    /// Float or quantized input checkpoint.
    #[arg(long)]
    pub input: PathBuf,
    /// Quantized output checkpoint.
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long)]
    pub weight_bits: Option<u32>,
    #[arg(long)]
    pub vector_bits: Option<u32>,
    #[arg(long)]
    pub activation_bits: Option<u32>,
    #[arg(long)]
    pub cache_bits: Option<u32>,
    #[arg(long)]
    pub trace_bits: Option<u32>,
    #[arg(long, allow_hyphen_values = true)]
    pub prob_exp: Option<i32>,
    /// Factor applied to observed activation maxima.
    #[arg(long)]
    pub headroom: Option<f64>,
    /// Episodes run through the float model to calibrate activation scales.
    #[arg(long)]
    pub calibration_episodes: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Debug, Args, Clone)]
pub struct InspectArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Tokens of a sampled episode to feed before dumping the cache.
    #[arg(long)]
    pub tokens: Option<usize>,
    /// plastic or quant-plastic.
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write the cache as an engine-state container.
    #[arg(long)]
    pub state_out: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Debug, Args, Clone)]
pub struct BenchArgs {
    #[arg(long, value_delimiter = ',')]
    pub d: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub t: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub w: Option<Vec<usize>>,
    /// Sequences per measurement.
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum InitKind {
    Random,
    Retrieval,
}

#[derive(Debug, Args, Clone)]
pub struct InitArgs {
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, value_enum, default_value = "random")]
    pub kind: InitKind,
    #[arg(long, default_value_t = 4)]
    pub layers: usize,
    #[arg(long, default_value_t = 128)]
    pub d_model: usize,
    #[arg(long, default_value_t = 1)]
    pub heads: usize,
    #[arg(long, default_value_t = 16)]
    pub pixels: usize,
    #[arg(long, default_value_t = 5)]
    pub classes: usize,
    #[arg(long, default_value_t = 1)]
    pub shots: usize,
    /// Attention window; defaults to classes * shots + 1.
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub final_norm: bool,
    #[arg(long)]
    pub scaled: bool,
    #[arg(long)]
    pub encoder_relu: bool,
    /// Query sharpness of the retrieval model.
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Failure classes with stable exit codes.
#[derive(Debug)]
pub enum Failure {
    /// Invalid flags, config or inputs: exit 2.
    Usage(anyhow::Error),
    /// The command ran but its check did not pass: exit 1.
    Check(Box<RunManifest>, String),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Usage(e.into())
    }
}

pub fn usage(msg: impl std::fmt::Display) -> Failure {
    Failure::Usage(anyhow::anyhow!("{msg}"))
}

fn emit(manifest: &RunManifest, out: Option<&PathBuf>) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(manifest)?;
    match out {
        Some(p) => std::fs::write(p, text + "\n")?,
        None => println!("{text}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_max_level(cli.log_level)
        .init();
    let result = FileConfig::load(cli.config.as_deref())
        .map_err(Failure::Usage)
        .and_then(|file| match &cli.command {
            Command::Eval(a) => commands::eval(a, &file),
            Command::Equiv(a) => commands::equiv(a, &file),
            Command::Quantize(a) => commands::quantize(a, &file),
            Command::Inspect(a) => commands::inspect(a, &file),
            Command::Bench(a) => commands::bench(a, &file),
            Command::Init(a) => commands::init(a, &file),
        });
    match result {
        Ok(manifest) => match emit(&manifest, cli.out.as_ref()) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e:#}");
                ExitCode::from(2)
            }
        },
        Err(Failure::Check(manifest, msg)) => {
            let _ = emit(&manifest, cli.out.as_ref());
            eprintln!("check failed: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

mod commands;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use std::path::PathBuf;

/// Adaptive-resolution intra image codec with learned up-sampling.
#[derive(Debug, Parser)]
#[command(name = "aric", version)]
struct Cli {
    /// Worker threads for the parallel sections (default: all cores).
    #[arg(long, global = true, env = "ARIC_THREADS")]
    threads: Option<usize>,

    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    cmd: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Encode one picture.
    Encode(EncodeArgs),
    /// Decode a bitstream to raw I420.
    Decode(DecodeArgs),
    /// Train one up-sampling network on an image corpus.
    Train(TrainArgs),
    /// BD-rate, R-D points and hitting ratios of two directories of encode runs.
    Eval(EvalArgs),
    /// Fit the low-to-full distortion line over encode runs.
    FitAlpha(FitAlphaArgs),
    /// Print filter coefficients, network layouts or a model header.
    Info(InfoArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Up {
    Cnn,
    Dctif,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum ArchChoice {
    Default,
    Compact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum VariantArg {
    Luma,
    Chroma,
}

#[derive(Debug, Args, Serialize)]
struct EncodeArgs {
    /// Raw I420 file (needs --size) or an image file.
    #[arg(long)]
    input: PathBuf,
    /// Picture size of a raw input, WIDTHxHEIGHT.
    #[arg(long, value_parser = parse_size)]
    size: Option<(usize, usize)>,
    #[arg(long)]
    qp: i32,
    /// Directory of *.arun models.
    #[arg(long)]
    models: Option<PathBuf>,
    /// Code every CTU at low resolution.
    #[arg(long, conflicts_with = "force_full")]
    force_low: bool,
    /// Code every CTU at full resolution.
    #[arg(long)]
    force_full: bool,
    /// Use one up-sampler for every channel instead of choosing per CTU.
    #[arg(long, value_enum)]
    force_up: Option<Up>,
    /// Skip the second up-sampling stage.
    #[arg(long)]
    no_stage2: bool,
    /// Lagrangian constant c in lambda = c * 2^((QP - 12) / 3).
    #[arg(long, default_value_t = aric_core::intra::LAMBDA_CONSTANT)]
    lambda_constant: f64,
    /// Sequence name in the R-D report (default: input file stem).
    #[arg(long)]
    sequence: Option<String>,
    /// Bitstream path; reports are written beside it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct DecodeArgs {
    #[arg(long)]
    bitstream: PathBuf,
    #[arg(long)]
    models: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct TrainArgs {
    /// Directory of training images.
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    qp: i32,
    #[arg(long, value_enum)]
    variant: VariantArg,
    /// JSON training configuration; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long, value_enum, default_value_t = ArchChoice::Default)]
    arch: ArchChoice,
    /// Model file; the manifest, log and config echo are written beside it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct EvalArgs {
    #[arg(long)]
    anchor_dir: PathBuf,
    #[arg(long)]
    test_dir: PathBuf,
    /// Report directory (created if missing).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct FitAlphaArgs {
    /// Directory of *.decisions.csv files.
    #[arg(long)]
    runs: PathBuf,
    /// Report directory (default: the runs directory).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 32)]
    bins: usize,
    /// Upper end of the alpha histogram.
    #[arg(long, default_value_t = 16.0)]
    max_alpha: f64,
}

#[derive(Debug, Args, Serialize)]
#[group(required = true, multiple = true)]
struct InfoArgs {
    /// Print the fixed resampling filters.
    #[arg(long)]
    filters: bool,
    /// Print the layer tables of the network architectures.
    #[arg(long)]
    arch: bool,
    /// Print the header and layer table of a model file.
    #[arg(long)]
    model: Option<PathBuf>,
}

fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WIDTHxHEIGHT, got {s:?}"))?;
    let w: usize = w.trim().parse().map_err(|e| format!("width: {e}"))?;
    let h: usize = h.trim().parse().map_err(|e| format!("height: {e}"))?;
    if w == 0 || h == 0 {
        return Err("dimensions must be positive".into());
    }
    Ok((w, h))
}

fn main() {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    let r = match &cli.cmd {
        Command::Encode(a) => commands::encode(a),
        Command::Decode(a) => commands::decode(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::FitAlpha(a) => commands::fit_alpha(a),
        Command::Info(a) => commands::info(a),
    };
    if let Err(e) = r {
        // every error's message already includes its cause
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

//! Command-line front end for the turbulence-restoration library.
//!
//! Exit codes: 0 success, 1 runtime or I/O failure, 2 usage error.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "turbreg",
    version,
    about = "Restores image sequences degraded by atmospheric turbulence",
    after_help = "Frame files are processed in lexicographic filename order; \
                  zero-pad frame numbers (frame_0007.png) so that order matches \
                  temporal order. Supported image formats: PNG/PGM/PPM (8-bit) \
                  and PFM (float, lossless)."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a turbulent sequence from a ground-truth image
    Simulate(SimulateArgs),
    /// Register a sequence and write the averaged template
    Register(RegisterArgs),
    /// Blind-deconvolve a single image
    Deconv(DeconvArgs),
    /// Full pipeline: register, average, deconvolve
    Run(RunArgs),
    /// Print PSNR and SSIM between two images
    Metrics(MetricsArgs),
    /// Invert a dense flow field stored as .flo
    InvertFlow(InvertFlowArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// key=value file supplying defaults for flags not given explicitly
    #[arg(long, global = false)]
    config: Option<PathBuf>,
    /// Upper bound on worker threads for the parallel stages
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Ground-truth image
    #[arg(long)]
    gt: Option<PathBuf>,
    /// Number of frames to synthesize
    #[arg(long)]
    frames: Option<usize>,
    /// Output directory (created if missing)
    #[arg(long)]
    out: Option<PathBuf>,
    /// RMS displacement amplitude in pixels
    #[arg(long)]
    amp: Option<f64>,
    /// Displacement correlation length in pixels
    #[arg(long)]
    corr: Option<f64>,
    /// Mean per-frame blur width
    #[arg(long)]
    blur: Option<f64>,
    /// Half-width of the uniform jitter on the blur width
    #[arg(long)]
    blur_jitter: Option<f64>,
    /// Additive Gaussian noise standard deviation
    #[arg(long)]
    noise: Option<f64>,
    /// Base seed; frame t draws from seed + t
    #[arg(long)]
    seed: Option<u64>,
    /// Also write each frame's true displacement field as flow_NNNN.flo
    #[arg(long)]
    save_flows: bool,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct RegisterArgs {
    /// Directory of input frames
    #[arg(long)]
    input: Option<PathBuf>,
    /// Output template image; use a .pfm extension to keep full precision
    #[arg(long)]
    out: Option<PathBuf>,
    /// Index of the reference frame
    #[arg(long)]
    keyframe: Option<usize>,
    /// Flow smoothness weight
    #[arg(long)]
    smoothness: Option<f64>,
    /// Flow solver iterations per pyramid level
    #[arg(long)]
    iterations: Option<usize>,
    /// Flow pyramid levels
    #[arg(long)]
    levels: Option<usize>,
    /// Directory for per-frame flows (w_NNNN.flo, mean.flo, mean_inverse.flo)
    #[arg(long)]
    save_flows: Option<PathBuf>,
    /// Recompute flows instead of holding all of them in memory
    #[arg(long)]
    low_memory: bool,
    /// Manifest path (default: output path with a .manifest.txt extension)
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct DeconvArgs {
    /// Input image
    #[arg(long)]
    input: Option<PathBuf>,
    /// Output image; use a .pfm extension to keep full precision
    #[arg(long)]
    out: Option<PathBuf>,
    /// Total-variation weight
    #[arg(long)]
    alpha: Option<f64>,
    /// Maximum alternating rounds
    #[arg(long)]
    iterations: Option<usize>,
    /// Initial line-search step size
    #[arg(long)]
    step: Option<f64>,
    /// Smoothing constant inside the TV square root
    #[arg(long)]
    epsilon: Option<f64>,
    /// Starting blur-width estimate; also sets the kernel support
    #[arg(long)]
    sigma_init: Option<f64>,
    /// Keep the blur width fixed at sigma-init
    #[arg(long)]
    no_estimate_sigma: bool,
    /// Manifest path (default: output path with a .manifest.txt extension)
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct RunArgs {
    /// Directory of input frames
    #[arg(long)]
    input: Option<PathBuf>,
    /// Output restored image; use a .pfm extension to keep full precision
    #[arg(long)]
    out: Option<PathBuf>,
    /// Index of the reference frame
    #[arg(long)]
    keyframe: Option<usize>,
    /// Flow smoothness weight
    #[arg(long)]
    smoothness: Option<f64>,
    /// Flow solver iterations per pyramid level
    #[arg(long)]
    iterations: Option<usize>,
    /// Flow pyramid levels
    #[arg(long)]
    levels: Option<usize>,
    /// Total-variation weight
    #[arg(long)]
    alpha: Option<f64>,
    /// Maximum deconvolution rounds
    #[arg(long)]
    deconv_iterations: Option<usize>,
    /// Initial deconvolution line-search step size
    #[arg(long)]
    step: Option<f64>,
    /// Smoothing constant inside the TV square root
    #[arg(long)]
    epsilon: Option<f64>,
    /// Starting blur-width estimate; also sets the kernel support
    #[arg(long)]
    sigma_init: Option<f64>,
    /// Keep the blur width fixed at sigma-init
    #[arg(long)]
    no_estimate_sigma: bool,
    /// Register+deconvolve passes; passes after the first re-estimate the
    /// flows against the previous restored image
    #[arg(long)]
    outer_iterations: Option<usize>,
    /// Also write the pre-deconvolution template here
    #[arg(long)]
    template_out: Option<PathBuf>,
    /// Recompute flows instead of holding all of them in memory
    #[arg(long)]
    low_memory: bool,
    /// Manifest path (default: output path with a .manifest.txt extension)
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct MetricsArgs {
    /// Reference image
    a: PathBuf,
    /// Image under test
    b: PathBuf,
    /// Peak intensity for PSNR and dynamic range for SSIM (use 255 to
    /// compare 8-bit files on their native scale)
    #[arg(long, default_value_t = 1.0)]
    peak: f64,
    /// Optional manifest path
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct InvertFlowArgs {
    /// Input .flo flow field
    #[arg(long)]
    input: Option<PathBuf>,
    /// Output .flo flow field
    #[arg(long)]
    out: Option<PathBuf>,
    /// Optional manifest path
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[command(flatten)]
    common: CommonArgs,
}

/// Process failure with the exit code it maps to.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, bad parameter values, unusable input selection: exit 2.
    Usage(String),
    /// I/O, decode, or other runtime failure: exit 1.
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => m,
        }
    }
}

impl From<turbreg::Error> for CliError {
    fn from(e: turbreg::Error) -> Self {
        match e {
            turbreg::Error::InvalidInput(_) => CliError::Usage(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Register(a) => commands::register(a),
        Command::Deconv(a) => commands::deconv(a),
        Command::Run(a) => commands::run(a),
        Command::Metrics(a) => commands::metrics(a),
        Command::InvertFlow(a) => commands::invert_flow(a),
    };
    match result {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {}", e.message());
            std::process::exit(e.exit_code());
        }
    }
}

mod commands;
mod io;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Wasserstein-prior + TV reconstruction experiments.
#[derive(Parser, Debug)]
#[command(name = "wasstv", version)]
pub struct Cli {
    /// Worker threads for per-cell updates (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Rasterize a radial sampling mask and print its rate.
    Mask(MaskArgs),
    /// Simulate undersampled data from an image and reconstruct it.
    Reconstruct(ReconstructArgs),
    /// Discrete transport geodesic between two equal-mass images.
    Transport(TransportArgs),
    /// PSNR and SSIM of an image against a reference.
    Metrics(MetricsArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Zerofill,
    Tv,
    Wtv,
}

impl std::str::FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        <Self as ValueEnum>::from_str(s, true)
    }
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Zerofill => "zerofill",
            Method::Tv => "tv",
            Method::Wtv => "wtv",
        }
    }
}

#[derive(Args, Debug)]
pub struct MaskArgs {
    /// Image side (square); use --size-y for rectangular masks.
    #[arg(long, value_parser = clap::value_parser!(u32).range(4..))]
    pub size: u32,
    #[arg(long, value_parser = clap::value_parser!(u32).range(4..))]
    pub size_y: Option<u32>,
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    pub spokes: u32,
    #[arg(long, default_value = "mask.txt")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ReconstructArgs {
    /// Plain `key=value` file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Ground truth: `shepp-logan`, `gaussian:cx=..,cy=..,sigma=..[,mass=..]` or a .pgm/.f64 file.
    #[arg(long)]
    pub image: Option<String>,
    /// Template file or generator (wtv).
    #[arg(long)]
    pub template: Option<String>,
    /// Template as a warp of the image: `amp=..,freq=..` (wtv).
    #[arg(long)]
    pub warp: Option<String>,
    /// Intensity remap of the template before mass renormalization: `gamma=..,invert=0|1`.
    #[arg(long)]
    pub remap: Option<String>,
    /// Mask file written by `mask`; otherwise --spokes.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// Side of generated images.
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long)]
    pub spokes: Option<usize>,
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub nt: Option<usize>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    /// TV weight of the baseline.
    #[arg(long)]
    pub alpha_tv: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Warp phase seed; 0 means zero phase.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub log_every: Option<usize>,
}

#[derive(Args, Debug)]
pub struct TransportArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Density at t = 0 (file or generator, as for --image).
    #[arg(long)]
    pub from: Option<String>,
    /// Density at t = 1.
    #[arg(long)]
    pub to: Option<String>,
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long)]
    pub nt: Option<usize>,
    #[arg(long)]
    pub iters: Option<usize>,
    /// Step sizes; by default chosen from the estimated operator norm.
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub log_every: Option<usize>,
}

#[derive(Args, Debug)]
pub struct MetricsArgs {
    /// Image to score (.pgm or .f64).
    pub image: PathBuf,
    /// Reference image.
    pub reference: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

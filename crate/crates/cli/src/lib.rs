//! Batch front end for the boundary guidance and box-focused sampling
//! pipeline. Every subcommand writes a [`manifest::RunManifest`] beside its
//! outputs.
//!
//! Exit codes: 0 success, 2 validation failure, 3 I/O failure.

pub mod commands;
pub mod manifest;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "gsdet", version, about = "Boundary guidance and box-focused sampling for Gaussian-splat scenes")]
pub struct Cli {
    /// Worker threads; output bytes do not depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Paint category boundaries (or an ablation prior) onto posed images.
    Overlay(OverlayArgs),
    /// Select a blob subset and export it for a 3D detector.
    Sample(SampleArgs),
    /// Render a scene from every camera to PPM.
    Render(RenderArgs),
    /// Image reconstruction losses between two PPMs.
    Loss(LossArgs),
    /// Generate a labeled synthetic scene with cameras, boxes and views.
    GenSynth(GenSynthArgs),
    /// Summary statistics of a scene and, optionally, its probability field.
    Stats(StatsArgs),
    /// Re-run a manifest and check that every output is reproduced.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OverlayMode {
    Boundary,
    Point,
    Mask,
}

#[derive(Debug, Args)]
pub struct OverlayArgs {
    /// Directory of `STEM.ppm` images.
    #[arg(long)]
    pub images: PathBuf,
    /// Directory of `STEM.pgm` label rasters.
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub palette: PathBuf,
    #[arg(long, value_enum, default_value = "boundary")]
    pub mode: OverlayMode,
    #[arg(long, default_value_t = gsdet::boundary::DEFAULT_DILATION_RADIUS)]
    pub dilation: u32,
    /// Box manifest for `point` mode; view `i` pairs with the `i`-th stem in
    /// sorted order.
    #[arg(long)]
    pub boxes: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Box,
    Random,
    Fps,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Budgeted,
    Bernoulli,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long)]
    pub cameras: Option<PathBuf>,
    #[arg(long)]
    pub boxes: Option<PathBuf>,
    #[arg(long)]
    pub palette: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "box")]
    pub method: Method,
    #[arg(long)]
    pub budget: usize,
    #[arg(long, value_enum, default_value = "budgeted")]
    pub mode: Mode,
    #[arg(long, default_value_t = gsdet::sampling::DEFAULT_P_BG)]
    pub p_bg: f64,
    #[arg(long)]
    pub seed: u64,
    /// Per-blob ground truth from `gen-synth`; enables the retention report.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Output prefix.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long)]
    pub cameras: PathBuf,
    /// Background color as `r,g,b` in [0, 1].
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.0, 0.0])]
    pub background: Vec<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct LossArgs {
    pub a: PathBuf,
    pub b: PathBuf,
    #[arg(long, default_value_t = 0.2)]
    pub lambda: f64,
    #[arg(long, default_value_t = 11)]
    pub window: u32,
    /// Metrics JSON path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenSynthArgs {
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 4)]
    pub objects: usize,
    #[arg(long, default_value_t = 250)]
    pub blobs_per_object: usize,
    #[arg(long, default_value_t = 9000)]
    pub background: usize,
    #[arg(long, default_value_t = 8)]
    pub cameras: usize,
    #[arg(long, default_value_t = 1.0)]
    pub box_prob: f64,
    #[arg(long, default_value_t = 320)]
    pub width: u32,
    #[arg(long, default_value_t = 240)]
    pub height: u32,
    #[arg(long, default_value_t = 300.0)]
    pub focal: f64,
    /// Skip rendering per-view images and label rasters.
    #[arg(long)]
    pub no_views: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long)]
    pub cameras: Option<PathBuf>,
    #[arg(long)]
    pub boxes: Option<PathBuf>,
    #[arg(long)]
    pub palette: Option<PathBuf>,
    #[arg(long, default_value_t = gsdet::sampling::DEFAULT_P_BG)]
    pub p_bg: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
}

pub(crate) fn invalid(message: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(gsdet::Error::Validation(message.into()))
}

/// Maps an error chain to the process exit code.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<gsdet::Error>() {
            return if e.is_io() { EXIT_IO } else { EXIT_VALIDATION };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return EXIT_IO;
        }
    }
    EXIT_VALIDATION
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { 0 };
        }
    };
    let raw: Vec<String> = args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match commands::dispatch(cli, raw) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}

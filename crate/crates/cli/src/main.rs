//! `splatforge` command line: prior ingestion, initialization, training,
//! rendering and inspection of Gaussian splat clouds.

mod commands;
mod config;
mod fail;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::GuidanceKind;

#[derive(Parser)]
#[command(name = "splatforge", version, about = "Text-to-3D Gaussian splat generation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the initial Gaussian cloud from a 3D prior.
    Init(InitArgs),
    /// Refine a cloud with score-distillation guidance.
    Train(TrainArgs),
    /// Render a splat PLY to PNG images.
    Render(RenderArgs),
    /// Print statistics of a PLY file as JSON.
    Info {
        ply: PathBuf,
    },
}

/// Flags shared by every pipeline command. Flags win over the config file.
#[derive(Args, Clone, Debug, Default)]
pub struct Common {
    /// Pipeline config JSON.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seeds every random stream of the command.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub prompt: Option<String>,
    /// Base URL of the guidance service.
    #[arg(long, env = splatforge::guidance::GUIDANCE_URL_ENV)]
    pub guidance_url: Option<String>,
}

#[derive(Args, Debug)]
pub struct InitArgs {
    #[command(flatten)]
    pub common: Common,
    /// Prior mesh or point cloud (.obj or .ply).
    #[arg(long, conflicts_with = "remote_prior")]
    pub prior: Option<PathBuf>,
    /// Ask the guidance service for the prior instead of reading a file.
    #[arg(long)]
    pub remote_prior: bool,
    /// Use the text-to-motion branch: center the prior and color it randomly.
    #[arg(long)]
    pub motion: bool,
    /// Simplified prompt for the motion prior; implies --motion.
    #[arg(long)]
    pub motion_prompt: Option<String>,
    /// Add a randomly colored ground layer under the cloud.
    #[arg(long)]
    pub ground: bool,
    /// Uniform candidates drawn for point growing.
    #[arg(long)]
    pub candidates: Option<usize>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    /// Initial splat PLY. Defaults to `init.ply` in the output directory.
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub guidance: Option<GuidanceKind>,
    /// Splat PLY whose renders mock guidance pulls towards.
    #[arg(long)]
    pub mock_target: Option<PathBuf>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    /// Checkpoint JSON to continue from.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct RenderArgs {
    pub ply: PathBuf,
    #[arg(long, default_value = "render")]
    pub out: PathBuf,
    /// Render evenly spaced azimuths over [-180, 180) instead of one view.
    #[arg(long)]
    pub turntable: bool,
    #[arg(long, default_value_t = 120)]
    pub views: usize,
    #[arg(long, default_value_t = 3.0)]
    pub radius: f64,
    #[arg(long, default_value_t = 15.0)]
    pub elevation: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub azimuth: f64,
    #[arg(long, default_value_t = 49.0)]
    pub fov: f64,
    #[arg(long, default_value_t = 512)]
    pub size: usize,
    /// Background as `r,g,b` in [0, 1].
    #[arg(long, default_value = "1,1,1", value_parser = parse_rgb)]
    pub background: [f64; 3],
    /// Time repeated renders of the first view instead of writing images.
    #[arg(long)]
    pub bench: bool,
    #[arg(long, default_value_t = 100)]
    pub frames: usize,
    /// Also write raw float buffers (RGB, transmittance, contributor counts).
    #[arg(long)]
    pub dump_buffers: bool,
}

fn parse_rgb(s: &str) -> Result<[f64; 3], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|c| c.trim().parse::<f64>().map_err(|e| format!("{c:?}: {e}")))
        .collect::<Result<_, _>>()?;
    match v[..] {
        [r, g, b] if v.iter().all(|c| (0.0..=1.0).contains(c)) => Ok([r, g, b]),
        _ => Err(format!("expected three components in [0, 1], got {s:?}")),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Init(a) => commands::init(a),
        Command::Train(a) => commands::train(a),
        Command::Render(a) => commands::render(a),
        Command::Info { ply } => commands::info(&ply),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            f.exit_code()
        }
    }
}

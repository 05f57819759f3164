mod commands;

use std::path::PathBuf;

use anyhow::Result;
use clap::{ArgGroup, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "relit", version, about = "Relightable neural light fields at desk scale")]
struct Cli {
    /// Worker threads for data generation, sweeps and inference (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic one-light-at-a-time dataset.
    GenData(GenDataArgs),
    /// Train a model on a dataset's training split.
    Train(TrainArgs),
    /// Render one view under one directional light.
    Render(RenderArgs),
    /// Relight a view with an equirectangular environment map.
    RelightHdri(RelightArgs),
    /// Recover a light direction from a chrome-ball image.
    CalibLight(CalibArgs),
    /// Score a model or a baseline on the held-out views and lights.
    Eval(EvalArgs),
    /// Convert a Radiance RGBE (.hdr) image to PFM.
    ConvertRgbe(ConvertArgs),
    /// Write a procedural sky environment map as PFM.
    SynthEnv(SynthEnvArgs),
}

#[derive(clap::Args)]
pub struct GenDataArgs {
    /// Scene name: reference, tabletop or chrome_ball.
    #[arg(long, default_value = "reference")]
    pub scene: String,
    /// Cameras per grid axis (the grid has N x N views).
    #[arg(long, default_value_t = 3)]
    pub views: usize,
    /// Angle between neighbouring cameras, degrees.
    #[arg(long, default_value_t = 10.0)]
    pub view_spacing: f64,
    /// Number of lights; takes precedence over --light-spacing. Defaults to 16.
    #[arg(long)]
    pub lights: Option<usize>,
    /// Approximate angle between neighbouring lights, degrees.
    #[arg(long)]
    pub light_spacing: Option<f64>,
    /// Spread lights over the whole sphere instead of the upper hemisphere.
    #[arg(long)]
    pub full_sphere: bool,
    /// Image width and height in pixels.
    #[arg(long, num_args = 2, value_names = ["W", "H"], default_values_t = [64u32, 64])]
    pub res: Vec<u32>,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Camera distance from the scene centre.
    #[arg(long, default_value_t = 3.0)]
    pub radius: f64,
    /// Focal length in pixels (default 1.5 x width).
    #[arg(long)]
    pub focal: Option<f64>,
    /// Views withheld from training.
    #[arg(long, default_value_t = 1)]
    pub holdout_views: usize,
    /// Lights withheld from training.
    #[arg(long, default_value_t = 3)]
    pub holdout_lights: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(clap::Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// full, no_roughness or vanilla.
    #[arg(long, default_value = "full")]
    pub variant: String,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 8192)]
    pub batch: usize,
    #[arg(long, default_value_t = 3e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.995)]
    pub lr_decay: f64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Split file (defaults to the split stored in the dataset manifest).
    #[arg(long)]
    pub split: Option<PathBuf>,
    /// Loss history table (defaults to CKPT with a .history.csv suffix).
    #[arg(long)]
    pub history: Option<PathBuf>,
    /// Normal head decoding: raw or decoded (2n - 1).
    #[arg(long, default_value = "raw")]
    pub normal_decode: String,
    /// Target of the microfacet term: exact or cosine.
    #[arg(long, default_value = "exact")]
    pub lm_target: String,
    /// Override every network width (smaller models for quick runs).
    #[arg(long)]
    pub width: Option<usize>,
    /// Override every network depth.
    #[arg(long)]
    pub depth: Option<usize>,
    /// Also store the optimizer moments in the checkpoint.
    #[arg(long)]
    pub save_adam: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(clap::Args)]
#[command(group(ArgGroup::new("view").required(true).args(["camera_id", "pose"])))]
pub struct RenderArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Index of a training-dataset camera stored in the checkpoint.
    #[arg(long)]
    pub camera_id: Option<usize>,
    /// JSON camera: either {intrinsics, rotation, translation, width, height}
    /// or {eye, target, up, focal_px, width, height}.
    #[arg(long)]
    pub pose: Option<PathBuf>,
    /// Direction toward the light (normalized before use).
    #[arg(long, num_args = 3, value_names = ["X", "Y", "Z"], allow_negative_numbers = true)]
    pub light: Vec<f64>,
    /// Output image; .pfm keeps linear values, anything else is written as PNG.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write normal, albedo and roughness maps into this directory.
    #[arg(long)]
    pub dump_svbrdf: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    pub exposure: f32,
}

#[derive(clap::Args)]
pub struct RelightArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Equirectangular PFM radiance map.
    #[arg(long)]
    pub env: PathBuf,
    /// Number of light directions in the sweep (Fibonacci sphere).
    #[arg(long, default_value_t = 3096)]
    pub sweep_n: usize,
    #[arg(long)]
    pub camera_id: usize,
    /// Output image; .pfm keeps linear values, anything else is written as
    /// PNG next to a linear PFM copy.
    #[arg(long)]
    pub out: PathBuf,
    /// Environment rotation about +z, radians.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub rotation: f64,
    /// Directory holding the OLAT stack; reused when it matches.
    #[arg(long)]
    pub sweep_cache: Option<PathBuf>,
    /// Write the per-direction weights as CSV.
    #[arg(long)]
    pub weights_out: Option<PathBuf>,
    /// Keep lights below the horizon, which the model was never trained on.
    #[arg(long)]
    pub full_sphere: bool,
    #[arg(long, default_value_t = 1.0)]
    pub exposure: f32,
}

#[derive(clap::Args)]
pub struct CalibArgs {
    /// Linear image of the chrome ball (PFM).
    #[arg(long)]
    pub image: PathBuf,
    /// Ball centre and radius in pixels.
    #[arg(long, num_args = 3, value_names = ["CX", "CY", "R"])]
    pub ball: Vec<f64>,
    #[arg(long)]
    pub camera_id: usize,
    /// Dataset providing the camera.
    #[arg(long)]
    pub data: PathBuf,
    /// Compare against this dataset light and print the angular error.
    #[arg(long)]
    pub light_id: Option<usize>,
}

#[derive(clap::Args)]
#[command(group(ArgGroup::new("method").required(true).args(["ckpt", "baseline"])))]
pub struct EvalArgs {
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    /// nearest or barycentric.
    #[arg(long)]
    pub baseline: Option<String>,
    #[arg(long)]
    pub data: PathBuf,
    /// Split file (defaults to the split stored in the dataset manifest).
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long)]
    pub report: PathBuf,
}

#[derive(clap::Args)]
pub struct ConvertArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(clap::Args)]
pub struct SynthEnvArgs {
    /// Map height; the width is twice this.
    #[arg(long, default_value_t = 64)]
    pub height: usize,
    /// Direction toward the sun.
    #[arg(long, num_args = 3, value_names = ["X", "Y", "Z"], allow_negative_numbers = true,
          default_values_t = [0.5, 0.3, 0.8])]
    pub sun: Vec<f64>,
    /// Sun radiance relative to the sky.
    #[arg(long, default_value_t = 40.0)]
    pub sun_intensity: f64,
    /// Angular radius of the sun disc, degrees.
    #[arg(long, default_value_t = 6.0)]
    pub sun_size: f64,
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::GenData(a) => commands::gen_data(a),
        Command::Train(a) => commands::train(a),
        Command::Render(a) => commands::render(a),
        Command::RelightHdri(a) => commands::relight_hdri(a),
        Command::CalibLight(a) => commands::calib_light(a),
        Command::Eval(a) => commands::eval(a),
        Command::ConvertRgbe(a) => commands::convert_rgbe(a),
        Command::SynthEnv(a) => commands::synth_env(a),
    }
}

//! `p2px`: train, render, benchmark samplers, densify clouds.

mod alloc;
mod commands;
mod config;
mod data;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use p2px_core::sampling::SamplerKind;
use p2px_core::Error;

use config::{parse_grid, Command, Overrides, RunConfig};

#[global_allocator]
static GLOBAL: alloc::Counting = alloc::Counting;

#[derive(Parser)]
#[command(name = "p2px", version, about = "Render images from colored point clouds")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Ray sampler: uniform, c2f or point.
    #[arg(long, global = true)]
    sampler: Option<SamplerKind>,
    /// Ray grid as HxW.
    #[arg(long, global = true, value_parser = parse_grid)]
    rays: Option<[usize; 2]>,
    /// Point-guided sampling radius.
    #[arg(long, global = true)]
    radius: Option<f64>,
    /// Candidate samples per ray.
    #[arg(long, global = true)]
    samples: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Synthetic scene: `sphere`, `room`, or a scene TOML file.
    #[arg(long, global = true)]
    scene: Option<String>,
    /// Input point cloud (PLY).
    #[arg(long, global = true)]
    cloud: Option<PathBuf>,
    /// Camera file.
    #[arg(long, global = true)]
    cameras: Option<PathBuf>,
    /// Directory of ground-truth PNGs for training on files.
    #[arg(long, global = true)]
    images: Option<PathBuf>,
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Fit a model to posed views of a cloud.
    Train {
        #[arg(long)]
        steps: Option<usize>,
        /// Weight of the point-cloud loss.
        #[arg(long)]
        lambda_pc: Option<f64>,
    },
    /// Render every camera with a trained model.
    Render,
    /// Compare samplers: valid samples, render time, peak heap.
    Bench,
    /// Add points where the trained field is dense.
    Densify {
        /// Candidates drawn around each input point.
        #[arg(long)]
        factor: Option<usize>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } | Error::Ply { .. } | Error::Config(_) | Error::Checkpoint(_) | Error::RadiusExceedsCell { .. } => 2,
        _ => 1,
    }
}

fn run(cli: Cli) -> p2px_core::Result<()> {
    let c = cli.common;
    let mut cfg = match &c.config {
        Some(path) => {
            data::require_file(path)?;
            RunConfig::load(path)?
        }
        None => RunConfig::default(),
    };
    let mut o = Overrides {
        seed: c.seed,
        sampler: c.sampler,
        rays: c.rays,
        radius: c.radius,
        samples: c.samples,
        out: c.out,
        scene: c.scene,
        cloud: c.cloud,
        cameras: c.cameras,
        images: c.images,
        checkpoint: c.checkpoint,
        ..Default::default()
    };
    let command = match cli.command {
        Cmd::Train { steps, lambda_pc } => {
            o.steps = steps;
            o.lambda_pc = lambda_pc;
            Command::Train
        }
        Cmd::Render => Command::Render,
        Cmd::Bench => Command::Bench,
        Cmd::Densify { factor } => {
            o.factor = factor;
            Command::Densify
        }
    };
    cfg.apply(o);
    cfg.command = Some(command);
    cfg.validate()?;
    match command {
        Command::Train => commands::train(&cfg),
        Command::Render => commands::render(&cfg),
        Command::Bench => commands::bench(&cfg),
        Command::Densify => commands::densify_cmd(&cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

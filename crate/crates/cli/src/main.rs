//! `layoutkit`: synthesize, repair, score and render room layouts.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "layoutkit", version, about = "Furniture layout synthesis and repair")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Pipeline config (JSON). Flags override values from the file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Agent backend.
    #[arg(long, global = true, value_enum)]
    pub backend: Option<BackendKind>,
    /// Seed for the offline backend and the scene generator.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (synth, gen) or file (refine, render).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Print only score JSON on stdout.
    #[arg(long, short, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendKind {
    Mock,
    Remote,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the full pipeline on one or more scene files.
    Synth {
        #[arg(required = true)]
        scenes: Vec<PathBuf>,
        /// Scenes to run concurrently.
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
        jobs: u32,
        /// Skip writing PNG renders.
        #[arg(long)]
        no_render: bool,
    },
    /// Repair the layout block of a scene with the grid-matching refiner only.
    Refine {
        scene: PathBuf,
        /// Where to write the refinement report (JSON).
        #[arg(long)]
        report: Option<PathBuf>,
        /// Grid spacing in cm (overrides the config).
        #[arg(long)]
        grid_spacing: Option<f64>,
    },
    /// Score the layout block of scene files.
    Eval {
        #[arg(required = true)]
        scenes: Vec<PathBuf>,
        /// Also write one CSV row per scene.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Render a scene's layout as a top-down PNG.
    Render {
        scene: PathBuf,
        /// Draw the grid overlay.
        #[arg(long)]
        grid: bool,
        /// Pixels on the image's long side.
        #[arg(long)]
        long_side: Option<u32>,
    },
    /// Write procedurally generated scene files.
    Gen {
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
        count: u32,
        #[arg(long, default_value_t = 300.0)]
        min_side: f64,
        #[arg(long, default_value_t = 800.0)]
        max_side: f64,
        #[arg(long, default_value_t = 5)]
        min_assets: usize,
        #[arg(long, default_value_t = 20)]
        max_assets: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("layoutkit: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

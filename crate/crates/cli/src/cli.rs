//! Argument grammar: `forge <command> [--config PATH] [--threads N] [--seed N] [--key value ...]`.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use forge_core::raster::{load_image, load_map, load_mask, save_image_png};
use forge_core::{Error, Result};

use crate::config::{PipelineConfig, CONFIG_ENV};
use crate::pipeline::Run;
use crate::render::{heatmap, overlay};

#[derive(Debug, Parser)]
#[command(name = "forge", version, about = "Multi-scale CNN forgery localization pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic corpus and its manifest.
    Synth(StageArgs),
    /// Sample training patches for every scale.
    Sample(StageArgs),
    /// Train one detector per scale.
    Train(StageArgs),
    /// Write per-scale possibility maps for the test images.
    Infer(StageArgs),
    /// Fuse the per-scale maps into decisions.
    Fuse(StageArgs),
    /// Score maps and decisions against ground truth.
    Eval(StageArgs),
    /// Run every stage in order.
    Run(StageArgs),
    /// Render a map as a heatmap or a decision as an overlay.
    Render(RenderArgs),
}

#[derive(Debug, Args)]
pub struct StageArgs {
    /// Config file; falls back to $FORGE_CONFIG.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Worker threads; defaults to available parallelism.
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Config overrides as `--key value`.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--KEY VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// A `.mpf` map, or a decision PNG when `--image` is given.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Source image for decision overlays.
    #[arg(long)]
    pub image: Option<PathBuf>,
}

impl StageArgs {
    /// File config (or defaults), then flag overrides, then `--seed`.
    pub fn config(&self) -> Result<PipelineConfig> {
        let path = self.config.clone().or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from));
        let mut cfg = match path {
            Some(p) => PipelineConfig::from_file(p)?,
            None => PipelineConfig::default(),
        };
        cfg.apply_flags(&self.overrides)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok(cfg)
    }
}

fn with_threads<R: Send>(threads: Option<usize>, f: impl FnOnce() -> Result<R> + Send) -> Result<R> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::invalid(e.to_string()))?;
    pool.install(f)
}

pub fn render(args: &RenderArgs) -> Result<()> {
    let out = match &args.image {
        Some(img) => overlay(&load_image(img)?, &load_mask(&args.input)?)?,
        None if args.input.extension().is_some_and(|e| e == "mpf") => heatmap(&load_map::<f64>(&args.input)?),
        None => return Err(Error::invalid("decision overlays need --image; maps must be .mpf")),
    };
    save_image_png(&out, &args.output)
}

/// Runs one stage on an opened run and refreshes the run manifest.
pub fn run_stage(run: &Run, command: &Command) -> Result<()> {
    match command {
        Command::Synth(_) => run.synth()?,
        Command::Sample(_) => run.sample()?,
        Command::Train(_) => run.train()?,
        Command::Infer(_) => run.infer()?,
        Command::Fuse(_) => run.fuse()?,
        Command::Eval(_) => print!("{}", run.eval()?.to_text()),
        Command::Run(_) => print!("{}", run.run_all()?.to_text()),
        Command::Render(_) => unreachable!("render has no run directory"),
    }
    run.write_manifest()
}

pub fn execute(cli: Cli) -> Result<()> {
    let stage = match &cli.command {
        Command::Render(args) => return render(args),
        Command::Synth(a)
        | Command::Sample(a)
        | Command::Train(a)
        | Command::Infer(a)
        | Command::Fuse(a)
        | Command::Eval(a)
        | Command::Run(a) => a,
    };
    if stage.threads == Some(0) {
        return Err(Error::invalid("--threads must be at least 1"));
    }
    let cfg = stage.config()?;
    with_threads(stage.threads, || {
        let mut run = Run::open(cfg)?;
        run.verbose = true;
        run_stage(&run, &cli.command)?;
        eprintln!("run directory: {}", display(&run.dir));
        Ok(())
    })
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

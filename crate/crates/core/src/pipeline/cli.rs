//! Command-line interface: `inpaint` and `evaluate` subcommands.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::Result;
use crate::metrics::{evaluate_dirs, AggregationWeights};

use super::config::{Mode, SceneConfig};
use super::run::{run_inpaint, InpaintRequest};

#[derive(Debug, Parser)]
#[command(name = "vinpaint", version, about = "Flow-guided video inpainting and evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fill the masked regions of a frame directory.
    Inpaint(InpaintArgs),
    /// Score predictions against ground truth.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
pub struct InpaintArgs {
    #[arg(long)]
    pub frames: PathBuf,
    #[arg(long)]
    pub masks: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.7)]
    pub scale: f64,
    #[arg(long, default_value_t = 4)]
    pub dilate: usize,
    #[arg(long, default_value_t = 18)]
    pub neighbors: usize,
    #[arg(long, default_value_t = 20)]
    pub ref_stride: usize,
    #[arg(long, value_enum, default_value_t = Mode::Classical)]
    pub mode: Mode,
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Maximum resident frames.
    #[arg(long)]
    pub budget: Option<usize>,
    /// Run report path (default: OUT/report.json).
    #[arg(long)]
    pub report: Option<PathBuf>,
}

impl InpaintArgs {
    pub fn request(&self) -> InpaintRequest {
        InpaintRequest {
            frames_dir: self.frames.clone(),
            masks_dir: self.masks.clone(),
            out_dir: self.out.clone(),
            report_path: self.report.clone(),
            cfg: SceneConfig {
                scale_factor: self.scale,
                dilation_radius: self.dilate,
                neighbor_count: self.neighbors,
                ref_stride: self.ref_stride,
                mode: self.mode,
                weights_path: self.weights.clone(),
                budget: self.budget,
                ..SceneConfig::default()
            },
        }
    }
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    /// Restrict pixel metrics to these masks.
    #[arg(long)]
    pub masks: Option<PathBuf>,
    /// JSON with normalised scores (`w_fid`, `w_lpips`, optionally `w_mae`, `w_psnr`).
    #[arg(long)]
    pub external: Option<PathBuf>,
    /// `alpha_mae,alpha_psnr,beta_fid,beta_lpips`.
    #[arg(long, default_value = "0.5,0.5,0.5,0.5")]
    pub weights: String,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

/// Runs a parsed command and returns its JSON report.
pub fn execute(cli: &Cli) -> Result<String> {
    match &cli.command {
        Command::Inpaint(args) => {
            let report = run_inpaint(&args.request())?;
            Ok(serde_json::to_string_pretty(&report)?)
        }
        Command::Evaluate(args) => {
            let weights = AggregationWeights::parse(&args.weights)?;
            let report = evaluate_dirs(
                &args.pred,
                &args.gt,
                args.masks.as_deref(),
                args.external.as_deref(),
                &weights,
            )?;
            let json = serde_json::to_string_pretty(&report)?;
            if let Some(p) = &args.report {
                std::fs::write(p, &json)?;
            }
            Ok(json)
        }
    }
}

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::DEFAULT_EPS;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Harmonic flow completion, image propagation and harmonic residual fill.
    #[default]
    Classical,
    /// Recurrent flow completion plus feature propagation and sparse
    /// window attention, from a weights file.
    Neural,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Classical => "classical",
            Mode::Neural => "neural",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classical" => Ok(Mode::Classical),
            "neural" => Ok(Mode::Neural),
            other => Err(Error::InvalidArgument(format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    /// Downscale factor applied before processing, in `(0, 1]`.
    pub scale_factor: f64,
    /// Square dilation radius for masks, at processing resolution.
    pub dilation_radius: usize,
    pub neighbor_count: usize,
    pub ref_stride: usize,
    /// Forward–backward consistency threshold in pixels.
    pub eps_flow: f64,
    pub mode: Mode,
    pub weights_path: Option<PathBuf>,
    /// Maximum resident frames; `None` uses the plan's bound.
    pub budget: Option<usize>,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            scale_factor: 0.7,
            dilation_radius: 4,
            neighbor_count: 18,
            ref_stride: 20,
            eps_flow: DEFAULT_EPS,
            mode: Mode::Classical,
            weights_path: None,
            budget: None,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.scale_factor > 0.0 && self.scale_factor <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "scale factor must lie in (0, 1], got {}",
                self.scale_factor
            )));
        }
        if self.neighbor_count < 1 {
            return Err(Error::InvalidArgument("neighbor count must be at least 1".into()));
        }
        if self.ref_stride < 1 {
            return Err(Error::InvalidArgument("reference stride must be at least 1".into()));
        }
        if !self.eps_flow.is_finite() || self.eps_flow <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "eps_flow must be positive, got {}",
                self.eps_flow
            )));
        }
        Ok(())
    }
}

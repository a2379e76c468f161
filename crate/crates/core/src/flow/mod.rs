//! Optical flow: estimation between adjacent frames, completion inside
//! masked regions and forward–backward consistency.

mod consistency;
mod harmonic;
mod lucas_kanade;
mod recurrent;

pub use consistency::{flow_consistency, DEFAULT_EPS};
pub use harmonic::{complete_flow_harmonic, complete_flow_harmonic_with, harmonic_fill, HarmonicOptions};
pub use lucas_kanade::{estimate_flow, pyramid_levels, LucasKanade};
pub use recurrent::{complete_flow_recurrent, FlowCompletionWeights, FlowGraphPlan, FLOW_FEATURE_STRIDE};

pub(crate) use recurrent::fuse;

use crate::error::{shape_err, Result};
use crate::kernels::FlowField;

/// Flows between frames `t` and `t+1`: `forward` is `t → t+1` (defined on
/// frame `t`), `backward` is `t+1 → t` (defined on frame `t+1`).
#[derive(Clone, Debug, PartialEq)]
pub struct FlowPair {
    pub forward: FlowField,
    pub backward: FlowField,
}

impl FlowPair {
    pub fn new(forward: FlowField, backward: FlowField) -> Result<Self> {
        if forward.height() != backward.height() || forward.width() != backward.width() {
            return Err(shape_err(
                "FlowPair",
                format!("{}x{}", forward.height(), forward.width()),
                format!("{}x{}", backward.height(), backward.width()),
            ));
        }
        Ok(Self { forward, backward })
    }

    /// The same pair seen from frame `t+1`.
    pub fn reversed(&self) -> FlowPair {
        FlowPair {
            forward: self.backward.clone(),
            backward: self.forward.clone(),
        }
    }

    pub fn height(&self) -> usize {
        self.forward.height()
    }

    pub fn width(&self) -> usize {
        self.forward.width()
    }
}

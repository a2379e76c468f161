//! Streaming flow-guided video inpainting.
//!
//! The engine fills occluded regions of a frame sequence in stages: dense
//! optical flow between neighbouring frames, flow completion inside the
//! holes, image-domain propagation along the completed flows, optional
//! feature-domain propagation with a mask-guided sparse window transformer,
//! and a harmonic fill for anything never observed. Scenes are processed in
//! chunks of neighbouring frames plus sparse global references, with a
//! bounded number of frames resident at any time.
//!
//! [`metrics`] holds the evaluation side: MAE, PSNR and the weighted
//! accuracy/consistency aggregation used for ranking.

pub mod error;
pub mod flow;
pub mod kernels;
pub mod metrics;
pub mod msvt;
pub mod neural;
pub mod pipeline;
pub mod propagation;
pub mod synth;
pub mod tensorfile;

pub use error::{Error, Result};
pub use kernels::{BinaryMap, FeatureMap, FlowField, Frame, MaskFrame};

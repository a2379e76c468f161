//! Numerical primitives: bilinear sampling and warping, standard and
//! deformable convolution, window partitioning and mask-guided sparse
//! window attention.
//!
//! Everything here is a pure function of its inputs.

mod conv;
mod map;
mod sample;
mod window;

pub use conv::{conv2d, conv2d_strided, deformable_conv, leaky_relu, ConvWeights};
pub use map::{BinaryMap, FeatureMap, FlowField, Frame, MaskFrame, OffsetField};
pub use sample::{bilinear_sample, warp};
pub use window::{select_masked_windows, sparse_window_attention, window_attention_probs, WindowGrid};

pub(crate) use sample::sample_into;

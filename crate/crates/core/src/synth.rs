//! Synthetic scenes for tests, examples and benchmarks.
//!
//! The texture is evaluated at integer coordinates, so a frame translated by
//! an integer step holds exactly the same values as its neighbour at the
//! shifted position.

use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::kernels::{FeatureMap, FlowField, Frame, MaskFrame};
use crate::pipeline::io::{frame_file_name, write_frame, write_mask};
use crate::pipeline::FlowSource;

/// Smooth multi-frequency RGB texture with values in `[0.15, 0.85]`.
pub fn texture(y: i64, x: i64, c: usize) -> f64 {
    let (y, x, c) = (y as f64, x as f64, c as f64);
    0.5 + 0.15 * (0.37 * x + 0.21 * y + c).sin()
        + 0.12 * (0.13 * x - 0.29 * y + 2.0 * c).sin()
        + 0.08 * (0.05 * (x + y) + 0.7 * c).cos()
}

/// Frame `t` shows the texture moved by `t·step` (`step = (dy, dx)`):
/// `frame_t(y, x) = texture(y − t·dy, x − t·dx)`.
pub fn translating_frames(n: usize, height: usize, width: usize, step: (i64, i64)) -> Vec<Frame> {
    (0..n as i64)
        .map(|t| {
            FeatureMap::from_fn(height, width, 3, |y, x, c| {
                texture(y as i64 - t * step.0, x as i64 - t * step.1, c)
            })
        })
        .collect()
}

/// `n` identical textured frames.
pub fn static_frames(n: usize, height: usize, width: usize) -> Vec<Frame> {
    translating_frames(n, height, width, (0, 0))
}

/// Axis-aligned rectangle, clipped to the frame.
pub fn rect_mask(height: usize, width: usize, top: i64, left: i64, rows: usize, cols: usize) -> MaskFrame {
    MaskFrame::from_fn(height, width, |y, x| {
        let (y, x) = (y as i64, x as i64);
        y >= top && y < top + rows as i64 && x >= left && x < left + cols as i64
    })
}

/// A `size`×`size` square starting at `origin` and moving by `step` per frame,
/// wrapping around the frame.
pub fn moving_square_masks(
    n: usize,
    height: usize,
    width: usize,
    size: usize,
    origin: (usize, usize),
    step: (i64, i64),
) -> Vec<MaskFrame> {
    let span_y = (height - size) as i64;
    let span_x = (width - size) as i64;
    (0..n as i64)
        .map(|t| {
            let top = (origin.0 as i64 + t * step.0).rem_euclid(span_y.max(1));
            let left = (origin.1 as i64 + t * step.1).rem_euclid(span_x.max(1));
            rect_mask(height, width, top, left, size, size)
        })
        .collect()
}

/// Exact flows for [`translating_frames`]: content moves by `step` per frame.
#[derive(Clone, Copy, Debug)]
pub struct TranslationFlow {
    pub step: (i64, i64),
}

impl FlowSource for TranslationFlow {
    fn flow(&self, from: usize, to: usize, a: &Frame, _b: &Frame) -> Result<FlowField> {
        let k = to as f64 - from as f64;
        Ok(FlowField::constant(
            a.height(),
            a.width(),
            k * self.step.1 as f64,
            k * self.step.0 as f64,
        ))
    }
}

/// Writes `frames/` and `masks/` under `root` as numbered PNGs and returns
/// both directories.
pub fn write_scene(root: &Path, frames: &[Frame], masks: &[MaskFrame]) -> Result<(PathBuf, PathBuf)> {
    let frame_dir = root.join("frames");
    let mask_dir = root.join("masks");
    std::fs::create_dir_all(&frame_dir)?;
    std::fs::create_dir_all(&mask_dir)?;
    for (i, f) in frames.iter().enumerate() {
        write_frame(&frame_dir.join(frame_file_name(i)), f)?;
    }
    for (i, m) in masks.iter().enumerate() {
        write_mask(&mask_dir.join(frame_file_name(i)), m)?;
    }
    Ok((frame_dir, mask_dir))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn texture_range() {
        for y in -50..50 {
            for x in -50..50 {
                for c in 0..3 {
                    let v = texture(y, x, c);
                    assert!((0.15..=0.85).contains(&v));
                }
            }
        }
    }

    #[test]
    fn translation_is_exact() {
        let f = translating_frames(3, 16, 20, (0, 1));
        for y in 0..16 {
            for x in 0..19 {
                assert_eq!(f[1].pixel(y, x + 1), f[0].pixel(y, x));
            }
        }
    }

    #[test]
    fn moving_mask_stays_in_frame() {
        let m = moving_square_masks(30, 24, 32, 6, (2, 3), (1, 2));
        assert!(m.iter().all(|m| m.count() == 36));
    }
}

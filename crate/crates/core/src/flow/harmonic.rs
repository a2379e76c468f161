//! Laplace-equation hole filling with Dirichlet data from known pixels.
//!
//! Every channel is solved independently: hole pixels converge to the average
//! of their in-bounds 4-neighbours (Neumann at the frame border). Large holes
//! are initialised from a recursively solved half-resolution problem, with
//! the initial guess clamped to the boundary range, and then relaxed with
//! raster-order Gauss–Seidel. Each update is a convex combination of values
//! already inside the boundary range, so the discrete maximum principle holds
//! exactly at every sweep.

use rayon::prelude::*;

use crate::error::{shape_err, Error, Result};
use crate::kernels::{FeatureMap, FlowField, MaskFrame};

#[derive(Clone, Copy, Debug)]
pub struct HarmonicOptions {
    /// Stop once the largest per-sweep update falls below this.
    pub tolerance: f64,
    pub max_sweeps: usize,
}

impl Default for HarmonicOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-5,
            max_sweeps: 10_000,
        }
    }
}

/// Minimum hole size worth a coarse-grid initialisation.
const COARSE_MIN_HOLE: usize = 64;

/// Fills the masked pixels of every channel with the harmonic interpolant of
/// the surrounding known pixels. Unmasked pixels are copied unchanged.
pub fn harmonic_fill(map: &FeatureMap, hole: &MaskFrame, opts: HarmonicOptions) -> Result<FeatureMap> {
    let (h, w, c) = map.dims();
    if hole.height() != h || hole.width() != w {
        return Err(shape_err(
            "harmonic_fill",
            format!("{h}x{w}"),
            format!("{}x{}", hole.height(), hole.width()),
        ));
    }
    if hole.is_clear() {
        return Ok(map.clone());
    }
    if hole.is_full() {
        return Err(Error::FullMask { height: h, width: w });
    }
    let planes: Vec<Vec<f64>> = (0..c)
        .into_par_iter()
        .map(|ch| {
            let mut plane: Vec<f64> = map.data().iter().skip(ch).step_by(c).copied().collect();
            solve_plane(&mut plane, hole.data(), h, w, opts);
            plane
        })
        .collect();
    let mut out = map.clone();
    for (i, px) in out.data_mut().chunks_exact_mut(c).enumerate() {
        if hole.data()[i] {
            for (ch, v) in px.iter_mut().enumerate() {
                *v = planes[ch][i];
            }
        }
    }
    Ok(out)
}

/// Replaces flow inside the mask by the harmonic extension of the flow
/// around it, channel by channel. Unmasked vectors are unchanged bit-exact.
pub fn complete_flow_harmonic(flow: &FlowField, mask: &MaskFrame) -> Result<FlowField> {
    complete_flow_harmonic_with(flow, mask, HarmonicOptions::default())
}

pub fn complete_flow_harmonic_with(flow: &FlowField, mask: &MaskFrame, opts: HarmonicOptions) -> Result<FlowField> {
    FlowField::from_map(harmonic_fill(flow.as_map(), mask, opts)?)
}

fn neighbours(i: usize, h: usize, w: usize) -> impl Iterator<Item = usize> {
    let (y, x) = (i / w, i % w);
    let up = (y > 0).then(|| i - w);
    let down = (y + 1 < h).then(|| i + w);
    let left = (x > 0).then(|| i - 1);
    let right = (x + 1 < w).then(|| i + 1);
    [up, down, left, right].into_iter().flatten()
}

/// Solves one plane in place. `hole` must contain at least one known pixel.
fn solve_plane(vals: &mut [f64], hole: &[bool], h: usize, w: usize, opts: HarmonicOptions) {
    let holes: Vec<usize> = (0..h * w).filter(|&i| hole[i]).collect();
    if holes.is_empty() {
        return;
    }

    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum, mut count) = (0.0, 0usize);
    for &i in &holes {
        for j in neighbours(i, h, w) {
            if !hole[j] {
                lo = lo.min(vals[j]);
                hi = hi.max(vals[j]);
                sum += vals[j];
                count += 1;
            }
        }
    }
    debug_assert!(count > 0, "hole without known boundary");

    if holes.len() >= COARSE_MIN_HOLE && h >= 4 && w >= 4 {
        let (ch, cw) = (h.div_ceil(2), w.div_ceil(2));
        let mut cvals = vec![0.0; ch * cw];
        let mut cknown = vec![0usize; ch * cw];
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                if !hole[i] {
                    let ci = (y / 2) * cw + x / 2;
                    cvals[ci] += vals[i];
                    cknown[ci] += 1;
                }
            }
        }
        let chole: Vec<bool> = cknown.iter().map(|&n| n == 0).collect();
        for (v, &n) in cvals.iter_mut().zip(&cknown) {
            if n > 0 {
                *v /= n as f64;
            }
        }
        solve_plane(&mut cvals, &chole, ch, cw, opts);
        for &i in &holes {
            let (y, x) = (i / w, i % w);
            vals[i] = cvals[(y / 2) * cw + x / 2].clamp(lo, hi);
        }
    } else {
        let mean = (sum / count as f64).clamp(lo, hi);
        for &i in &holes {
            vals[i] = mean;
        }
    }

    for _ in 0..opts.max_sweeps {
        let mut max_delta: f64 = 0.0;
        for &i in &holes {
            let (mut s, mut n) = (0.0, 0usize);
            for j in neighbours(i, h, w) {
                s += vals[j];
                n += 1;
            }
            let next = s / n as f64;
            max_delta = max_delta.max((next - vals[i]).abs());
            vals[i] = next;
        }
        if max_delta < opts.tolerance {
            break;
        }
    }
}

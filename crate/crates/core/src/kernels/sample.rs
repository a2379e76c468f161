use crate::error::{shape_err, Result};

use super::map::{FeatureMap, FlowField};

/// Bilinear interpolation of all channels at real coordinates `(y, x)`.
///
/// Coordinates are clamped to `[0, H-1]×[0, W-1]` (replicate padding).
/// Sampling at integer coordinates returns the stored value exactly.
pub fn bilinear_sample(src: &FeatureMap, y: f64, x: f64) -> Vec<f64> {
    let mut out = vec![0.0; src.channels()];
    sample_into(src, y, x, &mut out);
    out
}

#[inline]
pub(crate) fn sample_into(src: &FeatureMap, y: f64, x: f64, out: &mut [f64]) {
    let (h, w) = (src.height(), src.width());
    let y = y.clamp(0.0, (h - 1) as f64);
    let x = x.clamp(0.0, (w - 1) as f64);
    let y0 = y.floor() as usize;
    let x0 = x.floor() as usize;
    let y1 = (y0 + 1).min(h - 1);
    let x1 = (x0 + 1).min(w - 1);
    let fy = y - y0 as f64;
    let fx = x - x0 as f64;
    let a = src.pixel(y0, x0);
    let b = src.pixel(y0, x1);
    let c = src.pixel(y1, x0);
    let d = src.pixel(y1, x1);
    for ch in 0..out.len() {
        let top = (1.0 - fx) * a[ch] + fx * b[ch];
        let bottom = (1.0 - fx) * c[ch] + fx * d[ch];
        out[ch] = (1.0 - fy) * top + fy * bottom;
    }
}

/// Backward warp: `out(p) = src(p + flow(p))`, bilinear with border clamp.
pub fn warp(src: &FeatureMap, flow: &FlowField) -> Result<FeatureMap> {
    if src.height() != flow.height() || src.width() != flow.width() {
        return Err(shape_err(
            "warp",
            format!("{}x{}", src.height(), src.width()),
            format!("{}x{}", flow.height(), flow.width()),
        ));
    }
    let (h, w, c) = src.dims();
    let mut out = FeatureMap::zeros(h, w, c);
    for y in 0..h {
        for x in 0..w {
            let sy = y as f64 + flow.v(y, x);
            let sx = x as f64 + flow.u(y, x);
            sample_into(src, sy, sx, out.pixel_mut(y, x));
        }
    }
    Ok(out)
}

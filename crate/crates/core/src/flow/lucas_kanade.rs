//! Dense coarse-to-fine Lucas–Kanade.

use crate::error::{shape_err, Result};
use rayon::prelude::*;

use crate::kernels::{FeatureMap, FlowField, Frame};

/// Dense pyramidal Lucas–Kanade estimator.
///
/// The flow returned by [`LucasKanade::estimate`] maps `a` onto `b` under
/// the backward-warp convention: `a(p) ≈ b(p + flow(p))`.
#[derive(Clone, Debug)]
pub struct LucasKanade {
    /// Half-width of the square integration window.
    pub window_radius: usize,
    /// Gauss–Newton iterations per pyramid level.
    pub iterations: usize,
    /// Smallest accepted eigenvalue of the window-averaged structure tensor.
    /// Pixels below it are treated as textureless and get no update.
    pub min_eigen: f64,
    /// Forces the pyramid depth; `None` derives it from the frame size.
    pub levels: Option<usize>,
}

impl Default for LucasKanade {
    fn default() -> Self {
        Self {
            window_radius: 3,
            iterations: 10,
            min_eigen: 1e-7,
            levels: None,
        }
    }
}

/// `⌊log2(min(H, W) / 16)⌋`, at least 1.
pub fn pyramid_levels(height: usize, width: usize) -> usize {
    let ratio = height.min(width) as f64 / 16.0;
    if ratio < 2.0 {
        1
    } else {
        ratio.log2().floor() as usize
    }
}

/// Single-channel plane used for the pyramid.
#[derive(Clone)]
struct Plane {
    h: usize,
    w: usize,
    data: Vec<f64>,
}

impl Plane {
    fn luminance(frame: &Frame) -> Plane {
        let c = frame.channels();
        let data = frame
            .data()
            .chunks_exact(c)
            .map(|px| {
                if c >= 3 {
                    0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2]
                } else {
                    px[0]
                }
            })
            .collect();
        Plane {
            h: frame.height(),
            w: frame.width(),
            data,
        }
    }

    #[inline]
    fn at(&self, y: isize, x: isize) -> f64 {
        let y = y.clamp(0, self.h as isize - 1) as usize;
        let x = x.clamp(0, self.w as isize - 1) as usize;
        self.data[y * self.w + x]
    }

    /// Binomial 5-tap blur then 2× decimation (keeps even pixels).
    fn pyr_down(&self) -> Plane {
        const K: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];
        let mut horiz = vec![0.0; self.h * self.w];
        for y in 0..self.h {
            for x in 0..self.w {
                horiz[y * self.w + x] = K
                    .iter()
                    .enumerate()
                    .map(|(i, k)| k * self.at(y as isize, x as isize + i as isize - 2))
                    .sum();
            }
        }
        let tmp = Plane {
            h: self.h,
            w: self.w,
            data: horiz,
        };
        let (h2, w2) = (self.h.div_ceil(2), self.w.div_ceil(2));
        let mut data = Vec::with_capacity(h2 * w2);
        for y in 0..h2 {
            for x in 0..w2 {
                let (sy, sx) = ((2 * y) as isize, (2 * x) as isize);
                data.push(
                    K.iter()
                        .enumerate()
                        .map(|(i, k)| k * tmp.at(sy + i as isize - 2, sx))
                        .sum(),
                );
            }
        }
        Plane { h: h2, w: w2, data }
    }

    /// Bilinear sample with replicate borders.
    fn sample(&self, y: f64, x: f64) -> f64 {
        let (fy, fx) = (y.floor(), x.floor());
        let (ty, tx) = (y - fy, x - fx);
        let (iy, ix) = (fy as isize, fx as isize);
        let top = (1.0 - tx) * self.at(iy, ix) + tx * self.at(iy, ix + 1);
        let bottom = (1.0 - tx) * self.at(iy + 1, ix) + tx * self.at(iy + 1, ix + 1);
        (1.0 - ty) * top + ty * bottom
    }
}

/// Sum over the in-bounds part of a `(2r+1)²` window, separable.
fn box_sum(data: &[f64], h: usize, w: usize, r: usize) -> Vec<f64> {
    let mut horiz = vec![0.0; h * w];
    for y in 0..h {
        let row = &data[y * w..(y + 1) * w];
        for x in 0..w {
            let lo = x.saturating_sub(r);
            let hi = (x + r).min(w - 1);
            horiz[y * w + x] = row[lo..=hi].iter().sum();
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        let lo = y.saturating_sub(r);
        let hi = (y + r).min(h - 1);
        for x in 0..w {
            out[y * w + x] = (lo..=hi).map(|yy| horiz[yy * w + x]).sum();
        }
    }
    out
}

impl LucasKanade {
    /// Radius around a hole within which estimated flow may be contaminated
    /// by hole content, in full-resolution pixels.
    pub fn support_radius(&self, height: usize, width: usize) -> usize {
        let levels = self.levels.unwrap_or_else(|| pyramid_levels(height, width));
        // Window plus the 5-tap blur and central difference, per level.
        (self.window_radius + 3) << (levels - 1)
    }

    pub fn estimate(&self, a: &Frame, b: &Frame) -> Result<FlowField> {
        if a.dims() != b.dims() {
            return Err(shape_err(
                "estimate_flow",
                format!("{:?}", a.dims()),
                format!("{:?}", b.dims()),
            ));
        }
        let levels = self
            .levels
            .unwrap_or_else(|| pyramid_levels(a.height(), a.width()))
            .max(1);
        let mut pyr_a = vec![Plane::luminance(a)];
        let mut pyr_b = vec![Plane::luminance(b)];
        for _ in 1..levels {
            let (na, nb) = (pyr_a.last().unwrap().pyr_down(), pyr_b.last().unwrap().pyr_down());
            pyr_a.push(na);
            pyr_b.push(nb);
        }

        let mut flow: Option<FlowField> = None;
        for level in (0..levels).rev() {
            let (pa, pb) = (&pyr_a[level], &pyr_b[level]);
            let init = match flow.take() {
                None => FlowField::zeros(pa.h, pa.w),
                Some(coarse) => upsample_flow(&coarse, pa.h, pa.w),
            };
            flow = Some(self.refine(pa, pb, init));
        }
        Ok(flow.expect("at least one level"))
    }

    fn refine(&self, a: &Plane, b: &Plane, init: FlowField) -> FlowField {
        let (h, w) = (a.h, a.w);
        let n = h * w;
        let mut ix = vec![0.0; n];
        let mut iy = vec![0.0; n];
        for y in 0..h {
            for x in 0..w {
                let (yi, xi) = (y as isize, x as isize);
                ix[y * w + x] = 0.5 * (a.at(yi, xi + 1) - a.at(yi, xi - 1));
                iy[y * w + x] = 0.5 * (a.at(yi + 1, xi) - a.at(yi - 1, xi));
            }
        }
        let r = self.window_radius;
        let prod = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(s, t)| s * t).collect::<Vec<_>>();
        let sxx = box_sum(&prod(&ix, &ix), h, w, r);
        let sxy = box_sum(&prod(&ix, &iy), h, w, r);
        let syy = box_sum(&prod(&iy, &iy), h, w, r);

        // Inverse of the structure tensor where it is well conditioned.
        let mut inverse: Vec<Option<[f64; 3]>> = vec![None; n];
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let count = window_count(y, x, h, w, r);
                let (gxx, gxy, gyy) = (sxx[i] / count, sxy[i] / count, syy[i] / count);
                let half_trace = 0.5 * (gxx + gyy);
                let min_eig = half_trace - (0.25 * (gxx - gyy).powi(2) + gxy * gxy).sqrt();
                if min_eig >= self.min_eigen {
                    let det = sxx[i] * syy[i] - sxy[i] * sxy[i];
                    inverse[i] = Some([syy[i] / det, -sxy[i] / det, sxx[i] / det]);
                }
            }
        }
        if inverse.iter().all(Option::is_none) {
            return init;
        }

        let init = init.into_map();
        let rows: Vec<Vec<f64>> = (0..h)
            .into_par_iter()
            .map(|y| {
                let mut row = Vec::with_capacity(2 * w);
                for x in 0..w {
                    let (mut u, mut v) = (init.get(y, x, 0), init.get(y, x, 1));
                    if let Some(inv) = inverse[y * w + x] {
                        (u, v) = self.track(a, b, &ix, &iy, inv, y, x, u, v);
                    }
                    row.push(u);
                    row.push(v);
                }
                row
            })
            .collect();
        FlowField::from_map(FeatureMap::from_raw(h, w, 2, rows.concat())).expect("two channels")
    }

    /// Gauss–Newton on one window, translated as a whole by the pixel's flow.
    #[allow(clippy::too_many_arguments)]
    fn track(
        &self,
        a: &Plane,
        b: &Plane,
        ix: &[f64],
        iy: &[f64],
        [gxx, gxy, gyy]: [f64; 3],
        y: usize,
        x: usize,
        mut u: f64,
        mut v: f64,
    ) -> (f64, f64) {
        let r = self.window_radius;
        let (y0, y1) = (y.saturating_sub(r), (y + r).min(a.h - 1));
        let (x0, x1) = (x.saturating_sub(r), (x + r).min(a.w - 1));
        for _ in 0..self.iterations {
            let (mut bx, mut by) = (0.0, 0.0);
            for qy in y0..=y1 {
                for qx in x0..=x1 {
                    let i = qy * a.w + qx;
                    let diff = b.sample(qy as f64 + v, qx as f64 + u) - a.data[i];
                    bx += ix[i] * diff;
                    by += iy[i] * diff;
                }
            }
            let du = -(gxx * bx + gxy * by);
            let dv = -(gxy * bx + gyy * by);
            u += du;
            v += dv;
            if du.abs().max(dv.abs()) < 1e-4 {
                break;
            }
        }
        (u, v)
    }
}

fn window_count(y: usize, x: usize, h: usize, w: usize, r: usize) -> f64 {
    let rows = (y + r).min(h - 1) - y.saturating_sub(r) + 1;
    let cols = (x + r).min(w - 1) - x.saturating_sub(r) + 1;
    (rows * cols) as f64
}

/// Doubles a coarse flow onto a finer grid (coarse pixel `i` sits at fine `2i`).
fn upsample_flow(coarse: &FlowField, h: usize, w: usize) -> FlowField {
    let map = coarse.as_map();
    let mut px = [0.0; 2];
    FlowField::from_fn(h, w, |y, x| {
        crate::kernels::sample_into(map, y as f64 / 2.0, x as f64 / 2.0, &mut px);
        (2.0 * px[0], 2.0 * px[1])
    })
}

/// Estimates `frame_a → frame_b` flow with the default estimator.
pub fn estimate_flow(frame_a: &Frame, frame_b: &Frame) -> Result<FlowField> {
    LucasKanade::default().estimate(frame_a, frame_b)
}

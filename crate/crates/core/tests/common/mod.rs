//! Brute-force reference implementations shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vinpaint::kernels::{ConvWeights, FeatureMap, FlowField, MaskFrame, OffsetField};
use vinpaint::msvt::{MsvtConfig, MsvtWeights};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_map(rng: &mut ChaCha8Rng, h: usize, w: usize, c: usize) -> FeatureMap {
    FeatureMap::from_fn(h, w, c, |_, _, _| rng.gen_range(-1.0..1.0))
}

pub fn random_flow(rng: &mut ChaCha8Rng, h: usize, w: usize, max: f64) -> FlowField {
    FlowField::from_fn(h, w, |_, _| (rng.gen_range(-max..max), rng.gen_range(-max..max)))
}

pub fn max_abs_diff(a: &FeatureMap, b: &FeatureMap) -> f64 {
    assert_eq!(a.dims(), b.dims());
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Bilinear sample written from the four-corner weight formula.
pub fn oracle_sample(src: &FeatureMap, y: f64, x: f64, c: usize) -> f64 {
    let (h, w) = (src.height() as f64, src.width() as f64);
    let y = y.max(0.0).min(h - 1.0);
    let x = x.max(0.0).min(w - 1.0);
    let (y0, x0) = (y.floor(), x.floor());
    let mut total = 0.0;
    for (cy, wy) in [(y0, 1.0 - (y - y0)), (y0 + 1.0, y - y0)] {
        for (cx, wx) in [(x0, 1.0 - (x - x0)), (x0 + 1.0, x - x0)] {
            if wy * wx == 0.0 {
                continue;
            }
            let yy = (cy as usize).min(src.height() - 1);
            let xx = (cx as usize).min(src.width() - 1);
            total += wy * wx * src.get(yy, xx, c);
        }
    }
    total
}

pub fn oracle_warp(src: &FeatureMap, flow: &FlowField) -> FeatureMap {
    FeatureMap::from_fn(src.height(), src.width(), src.channels(), |y, x, c| {
        oracle_sample(src, y as f64 + flow.v(y, x), x as f64 + flow.u(y, x), c)
    })
}

pub fn oracle_conv(src: &FeatureMap, w: &ConvWeights) -> FeatureMap {
    let (kh, kw) = w.kernel_size();
    let (h, wd) = (src.height() as isize, src.width() as isize);
    FeatureMap::from_fn(src.height(), src.width(), w.out_channels(), |y, x, o| {
        let mut acc = w.bias()[o];
        for i in 0..w.in_channels() {
            for ky in 0..kh {
                for kx in 0..kw {
                    let sy = (y as isize + ky as isize - (kh / 2) as isize).clamp(0, h - 1) as usize;
                    let sx = (x as isize + kx as isize - (kw / 2) as isize).clamp(0, wd - 1) as usize;
                    acc += w.weight(o, i, ky, kx) * src.get(sy, sx, i);
                }
            }
        }
        acc
    })
}

/// Gathers every modulated tap sample into a column, then multiplies by the
/// flattened weight matrix.
pub fn oracle_deform(src: &FeatureMap, offsets: &OffsetField, w: &ConvWeights) -> FeatureMap {
    let (kh, kw) = w.kernel_size();
    let ic = src.channels();
    let mut out = FeatureMap::zeros(src.height(), src.width(), w.out_channels());
    for y in 0..src.height() {
        for x in 0..src.width() {
            let mut column = Vec::with_capacity(ic * kh * kw);
            for i in 0..ic {
                for ky in 0..kh {
                    for kx in 0..kw {
                        let k = ky * kw + kx;
                        let [dy, dx] = offsets.offset(y, x, k);
                        let sy = y as f64 + ky as f64 - (kh / 2) as f64 + dy;
                        let sx = x as f64 + kx as f64 - (kw / 2) as f64 + dx;
                        column.push(offsets.modulation(y, x, k) * oracle_sample(src, sy, sx, i));
                    }
                }
            }
            for o in 0..w.out_channels() {
                let row = &w.weights()[o * column.len()..(o + 1) * column.len()];
                let v: f64 = row.iter().zip(&column).map(|(a, b)| a * b).sum();
                out.set(y, x, o, v + w.bias()[o]);
            }
        }
    }
    out
}

fn softmax(scores: &[f64]) -> Vec<f64> {
    let m = scores.iter().cloned().fold(f64::MIN, f64::max);
    let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

/// Full attention inside every window of the grid.
pub fn oracle_window_attention(q: &FeatureMap, k: &FeatureMap, v: &FeatureMap, ws: usize, heads: usize) -> FeatureMap {
    let (h, w, c) = q.dims();
    let d = c / heads;
    let mut out = FeatureMap::zeros(h, w, c);
    for wy in (0..h).step_by(ws) {
        for wx in (0..w).step_by(ws) {
            let tokens: Vec<(usize, usize)> = (wy..(wy + ws).min(h))
                .flat_map(|y| (wx..(wx + ws).min(w)).map(move |x| (y, x)))
                .collect();
            for head in 0..heads {
                for &(qy, qx) in &tokens {
                    let scores: Vec<f64> = tokens
                        .iter()
                        .map(|&(ky, kx)| {
                            (0..d)
                                .map(|j| q.get(qy, qx, head * d + j) * k.get(ky, kx, head * d + j))
                                .sum::<f64>()
                                / (d as f64).sqrt()
                        })
                        .collect();
                    let p = softmax(&scores);
                    for j in 0..d {
                        let val: f64 = tokens
                            .iter()
                            .zip(&p)
                            .map(|(&(ky, kx), pi)| pi * v.get(ky, kx, head * d + j))
                            .sum();
                        out.set(qy, qx, head * d + j, val);
                    }
                }
            }
        }
    }
    out
}

fn oracle_linear(x: &[f64], weight: &[f64], bias: &[f64]) -> Vec<f64> {
    let n = x.len();
    bias.iter()
        .enumerate()
        .map(|(o, b)| b + (0..n).map(|i| weight[o * n + i] * x[i]).sum::<f64>())
        .collect()
}

fn oracle_norm(x: &[f64], scale: &[f64], shift: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    x.iter()
        .enumerate()
        .map(|(i, v)| (v - mean) / (var + 1e-5).sqrt() * scale[i] + shift[i])
        .collect()
}

fn oracle_gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (x + 0.044715 * x.powi(3))).tanh())
}

fn lin(l: &vinpaint::msvt::Linear) -> impl Fn(&[f64]) -> Vec<f64> + '_ {
    move |p| oracle_linear(p, l.weight(), l.bias())
}

fn map_positions(x: &FeatureMap, out_c: usize, f: impl Fn(&[f64]) -> Vec<f64>) -> FeatureMap {
    let mut out = FeatureMap::zeros(x.height(), x.width(), out_c);
    for y in 0..x.height() {
        for xx in 0..x.width() {
            for (c, v) in f(x.pixel(y, xx)).into_iter().enumerate() {
                out.set(y, xx, c, v);
            }
        }
    }
    out
}

/// Transformer block with attention in every window.
pub fn oracle_dense_block(x: &FeatureMap, w: &MsvtWeights, cfg: &MsvtConfig) -> FeatureMap {
    let c = x.channels();
    let n1 = map_positions(x, c, |p| oracle_norm(p, &w.norm1.scale, &w.norm1.shift));
    let q = map_positions(&n1, c, lin(&w.query));
    let k = map_positions(&n1, c, lin(&w.key));
    let v = map_positions(&n1, c, lin(&w.value));
    let att = oracle_window_attention(&q, &k, &v, cfg.window_size, w.heads);
    let proj = map_positions(&att, c, lin(&w.output));
    let x1 = FeatureMap::from_fn(x.height(), x.width(), c, |y, xx, ch| {
        x.get(y, xx, ch) + proj.get(y, xx, ch)
    });
    let n2 = map_positions(&x1, c, |p| oracle_norm(p, &w.norm2.scale, &w.norm2.shift));
    let hidden = w.ffn_in.out_features();
    let f1 = map_positions(&n2, hidden, |p| {
        oracle_linear(p, w.ffn_in.weight(), w.ffn_in.bias())
            .into_iter()
            .map(oracle_gelu)
            .collect()
    });
    let f2 = map_positions(&f1, c, lin(&w.ffn_out));
    FeatureMap::from_fn(x.height(), x.width(), c, |y, xx, ch| {
        x1.get(y, xx, ch) + f2.get(y, xx, ch)
    })
}

/// Counts positions of every clipped `ws`×`ws` window that holds a masked pixel.
pub fn oracle_attended_tokens(mask: &MaskFrame, ws: usize) -> usize {
    let mut total = 0;
    for top in (0..mask.height()).step_by(ws) {
        for left in (0..mask.width()).step_by(ws) {
            let rows = top..(top + ws).min(mask.height());
            let cols = left..(left + ws).min(mask.width());
            let hit = rows.clone().any(|y| cols.clone().any(|x| mask.get(y, x)));
            if hit {
                total += rows.len() * cols.len();
            }
        }
    }
    total
}

/// Mask with each pixel set independently with probability `p`, plus a few
/// rectangles so that both sparse and clustered layouts occur.
pub fn random_mask(rng: &mut ChaCha8Rng, h: usize, w: usize, p: f64) -> MaskFrame {
    let rects: Vec<(usize, usize, usize, usize)> = (0..rng.gen_range(0..3))
        .map(|_| {
            (
                rng.gen_range(0..h),
                rng.gen_range(0..w),
                rng.gen_range(1..h / 2 + 2),
                rng.gen_range(1..w / 2 + 2),
            )
        })
        .collect();
    MaskFrame::from_fn(h, w, |y, x| {
        rng.gen_bool(p)
            || rects
                .iter()
                .any(|&(t, l, rh, rw)| y >= t && y < t + rh && x >= l && x < l + rw)
    })
}

/// Published rows: name, W-FID, W-MAE, W-PSNR, W-LPIPS, A-Error, C-Error.
pub type TableRow = (&'static str, [f64; 6]);

pub const TABLE_LOCAL: [TableRow; 2] = [
    ("SD", [0.314, 0.297, 0.278, 0.351, 0.287, 0.333]),
    ("Ours", [0.224, 0.293, 0.232, 0.329, 0.263, 0.276]),
];

pub const TABLE_LEADERBOARD: [TableRow; 5] = [
    ("Baseline", [0.792, 0.257, 0.255, 0.791, 0.256, 0.792]),
    ("Team 1", [0.075, 0.260, 0.235, 0.349, 0.247, 0.212]),
    ("Team 2", [0.208, 0.263, 0.244, 0.439, 0.253, 0.324]),
    ("Team 3", [0.079, 0.259, 0.218, 0.292, 0.239, 0.186]),
    ("Ours", [0.071, 0.259, 0.221, 0.287, 0.240, 0.179]),
];

pub fn table_scores(row: &TableRow) -> vinpaint::metrics::NormalizedScores {
    let [w_fid, w_mae, w_psnr, w_lpips, ..] = row.1;
    vinpaint::metrics::NormalizedScores {
        w_mae,
        w_psnr,
        w_fid,
        w_lpips,
    }
}

pub fn table_reports(rows: &[TableRow]) -> Vec<vinpaint::metrics::MetricReport> {
    let w = vinpaint::metrics::AggregationWeights::default();
    rows.iter()
        .map(|r| vinpaint::metrics::MetricReport::new(r.0, None, Some(table_scores(r)), &w).unwrap())
        .collect()
}

pub fn random_offsets(rng: &mut ChaCha8Rng, h: usize, w: usize, taps: usize) -> OffsetField {
    let n = h * w * taps;
    let offsets = (0..n)
        .map(|_| [rng.gen_range(-2.5..2.5), rng.gen_range(-2.5..2.5)])
        .collect();
    let modulation = (0..n).map(|_| rng.gen_range(0.0..=1.0)).collect();
    OffsetField::new(h, w, taps, offsets, modulation).unwrap()
}

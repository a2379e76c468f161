use std::ops::Range;

use crate::error::{shape_err, Error, Result};

use super::map::{FeatureMap, MaskFrame};

/// Non-overlapping `ws×ws` tiling of an `H×W` grid with a selection of
/// windows. Edge windows may be partial.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WindowGrid {
    window_size: usize,
    height: usize,
    width: usize,
    rows: usize,
    cols: usize,
    selected: Vec<bool>,
}

impl WindowGrid {
    pub fn new(height: usize, width: usize, window_size: usize) -> Result<Self> {
        if window_size == 0 || height == 0 || width == 0 {
            return Err(Error::InvalidArgument("window grid dims must be positive".into()));
        }
        let (rows, cols) = (height.div_ceil(window_size), width.div_ceil(window_size));
        Ok(Self {
            window_size,
            height,
            width,
            rows,
            cols,
            selected: vec![false; rows * cols],
        })
    }

    /// Grid with every window selected.
    pub fn all(height: usize, width: usize, window_size: usize) -> Result<Self> {
        let mut g = Self::new(height, width, window_size)?;
        g.selected.fill(true);
        Ok(g)
    }

    pub fn window_size(&self) -> usize {
        self.window_size
    }

    pub fn grid_dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&mut self, index: usize) -> Result<()> {
        if index >= self.len() {
            return Err(Error::InvalidArgument(format!(
                "window {index} outside {}x{} grid",
                self.rows, self.cols
            )));
        }
        self.selected[index] = true;
        Ok(())
    }

    pub fn is_selected(&self, index: usize) -> bool {
        self.selected[index]
    }

    /// Indices of selected windows in raster order.
    pub fn selected(&self) -> impl Iterator<Item = usize> + '_ {
        self.selected.iter().enumerate().filter(|(_, &s)| s).map(|(i, _)| i)
    }

    pub fn selected_count(&self) -> usize {
        self.selected.iter().filter(|&&s| s).count()
    }

    /// Pixel extent `(rows, cols)` of window `index`.
    pub fn bounds(&self, index: usize) -> (Range<usize>, Range<usize>) {
        let (wy, wx) = (index / self.cols, index % self.cols);
        let y0 = wy * self.window_size;
        let x0 = wx * self.window_size;
        (
            y0..(y0 + self.window_size).min(self.height),
            x0..(x0 + self.window_size).min(self.width),
        )
    }

    /// Window containing pixel `(y, x)`.
    pub fn window_of(&self, y: usize, x: usize) -> usize {
        (y / self.window_size) * self.cols + x / self.window_size
    }

    /// Number of pixels covered by selected windows.
    pub fn covered_positions(&self) -> usize {
        self.selected()
            .map(|i| {
                let (ys, xs) = self.bounds(i);
                ys.len() * xs.len()
            })
            .sum()
    }
}

/// Selects exactly the windows holding at least one masked pixel.
pub fn select_masked_windows(mask: &MaskFrame, window_size: usize) -> Result<WindowGrid> {
    let mut grid = WindowGrid::new(mask.height(), mask.width(), window_size)?;
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            if mask.get(y, x) {
                let i = grid.window_of(y, x);
                grid.selected[i] = true;
            }
        }
    }
    Ok(grid)
}

fn check_qkv(q: &FeatureMap, k: &FeatureMap, v: &FeatureMap, grid: &WindowGrid, heads: usize) -> Result<()> {
    if q.dims() != k.dims() || q.dims() != v.dims() {
        return Err(shape_err(
            "sparse_window_attention q/k/v",
            format!("{:?}", q.dims()),
            format!("{:?} / {:?}", k.dims(), v.dims()),
        ));
    }
    if grid.height != q.height() || grid.width != q.width() {
        return Err(shape_err(
            "sparse_window_attention grid",
            format!("{}x{}", q.height(), q.width()),
            format!("{}x{}", grid.height, grid.width),
        ));
    }
    if heads == 0 || !q.channels().is_multiple_of(heads) {
        return Err(Error::InvalidArgument(format!(
            "{heads} heads do not divide {} channels",
            q.channels()
        )));
    }
    Ok(())
}

/// Softmax attention probabilities inside window `index` for one head:
/// `probs[i][j]` is the weight of key `j` for query `i` (raster order within
/// the window).
pub fn window_attention_probs(
    q: &FeatureMap,
    k: &FeatureMap,
    grid: &WindowGrid,
    index: usize,
    heads: usize,
    head: usize,
) -> Result<Vec<Vec<f64>>> {
    check_qkv(q, k, k, grid, heads)?;
    if head >= heads || index >= grid.len() {
        return Err(Error::InvalidArgument("head or window index out of range".into()));
    }
    let positions = window_positions(grid, index);
    let d = q.channels() / heads;
    Ok(positions
        .iter()
        .map(|&(qy, qx)| {
            let qv = &q.pixel(qy, qx)[head * d..(head + 1) * d];
            softmax_scores(qv, &positions, k, head * d, d)
        })
        .collect())
}

fn window_positions(grid: &WindowGrid, index: usize) -> Vec<(usize, usize)> {
    let (ys, xs) = grid.bounds(index);
    ys.flat_map(|y| xs.clone().map(move |x| (y, x))).collect()
}

fn softmax_scores(qv: &[f64], keys: &[(usize, usize)], k: &FeatureMap, off: usize, d: usize) -> Vec<f64> {
    let scale = 1.0 / (d as f64).sqrt();
    let mut scores: Vec<f64> = keys
        .iter()
        .map(|&(ky, kx)| {
            let kv = &k.pixel(ky, kx)[off..off + d];
            qv.iter().zip(kv).map(|(a, b)| a * b).sum::<f64>() * scale
        })
        .collect();
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for s in &mut scores {
        *s = (*s - max).exp();
        total += *s;
    }
    for s in &mut scores {
        *s /= total;
    }
    scores
}

/// Multi-head window attention computed only for selected windows.
///
/// Within each selected window, every query attends to every key of the same
/// window: `softmax(q·kᵀ/√d)·v` per head. Positions in unselected windows
/// pass the query features through unchanged.
pub fn sparse_window_attention(
    q: &FeatureMap,
    k: &FeatureMap,
    v: &FeatureMap,
    grid: &WindowGrid,
    heads: usize,
) -> Result<FeatureMap> {
    check_qkv(q, k, v, grid, heads)?;
    let d = q.channels() / heads;
    let mut out = q.clone();
    for index in grid.selected() {
        let positions = window_positions(grid, index);
        for &(qy, qx) in &positions {
            let qpx = q.pixel(qy, qx);
            let mut result = vec![0.0; q.channels()];
            for head in 0..heads {
                let off = head * d;
                let probs = softmax_scores(&qpx[off..off + d], &positions, k, off, d);
                for (&(ky, kx), p) in positions.iter().zip(&probs) {
                    let vv = &v.pixel(ky, kx)[off..off + d];
                    for (r, &val) in result[off..off + d].iter_mut().zip(vv) {
                        *r += p * val;
                    }
                }
            }
            out.pixel_mut(qy, qx).copy_from_slice(&result);
        }
    }
    Ok(out)
}

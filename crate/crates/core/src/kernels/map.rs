//! Dense containers shared by every stage: feature maps, binary maps, flow
//! fields and deformable-convolution offsets.

use crate::error::{shape_err, Error, Result};

/// Row-major `H×W×C` array of finite reals (channels interleaved per pixel).
///
/// Frames are feature maps with three channels in the unit interval.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

/// An RGB frame, values in `[0, 1]`.
pub type Frame = FeatureMap;

impl FeatureMap {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::InvalidArgument(format!(
                "feature map dims must be positive, got {height}x{width}x{channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(shape_err("FeatureMap::new", height * width * channels, data.len()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("FeatureMap"));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    /// Constructor for values produced internally from finite inputs.
    pub(crate) fn from_raw(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), height * width * channels);
        Self {
            height,
            width,
            channels,
            data,
        }
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        assert!(height > 0 && width > 0 && channels > 0);
        Self::from_raw(height, width, channels, vec![0.0; height * width * channels])
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Self {
        assert!(value.is_finite());
        let mut m = Self::zeros(height, width, channels);
        m.data.fill(value);
        m
    }

    /// Builds a map by evaluating `f(y, x, c)` at every element.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(height * width * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    let v = f(y, x, c);
                    assert!(v.is_finite(), "from_fn produced a non-finite value");
                    data.push(v);
                }
            }
        }
        Self::from_raw(height, width, channels, data)
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, value: f64) {
        assert!(value.is_finite());
        self.data[(y * self.width + x) * self.channels + c] = value;
    }

    #[inline]
    pub fn pixel(&self, y: usize, x: usize) -> &[f64] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    #[inline]
    pub(crate) fn pixel_mut(&mut self, y: usize, x: usize) -> &mut [f64] {
        let i = (y * self.width + x) * self.channels;
        &mut self.data[i..i + self.channels]
    }

    pub fn same_spatial(&self, other: &FeatureMap) -> bool {
        self.height == other.height && self.width == other.width
    }

    /// Channel-wise concatenation of maps sharing spatial dims.
    pub fn concat_channels(parts: &[&FeatureMap]) -> Result<FeatureMap> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("concat of zero maps".into()))?;
        let (h, w) = (first.height, first.width);
        for p in parts {
            if p.height != h || p.width != w {
                return Err(shape_err(
                    "concat_channels",
                    format!("{h}x{w}"),
                    format!("{}x{}", p.height, p.width),
                ));
            }
        }
        let channels: usize = parts.iter().map(|p| p.channels).sum();
        let mut data = Vec::with_capacity(h * w * channels);
        for i in 0..h * w {
            for p in parts {
                data.extend_from_slice(&p.data[i * p.channels..(i + 1) * p.channels]);
            }
        }
        Ok(FeatureMap::from_raw(h, w, channels, data))
    }

    /// Channels `[start, start + count)` as a new map.
    pub fn slice_channels(&self, start: usize, count: usize) -> Result<FeatureMap> {
        if count == 0 || start + count > self.channels {
            return Err(shape_err(
                "slice_channels",
                format!("range within {} channels", self.channels),
                format!("{start}..{}", start + count),
            ));
        }
        let mut data = Vec::with_capacity(self.height * self.width * count);
        for px in self.data.chunks_exact(self.channels) {
            data.extend_from_slice(&px[start..start + count]);
        }
        Ok(FeatureMap::from_raw(self.height, self.width, count, data))
    }

    pub(crate) fn map_inplace(&mut self, f: impl Fn(f64) -> f64) {
        for v in &mut self.data {
            *v = f(*v);
        }
    }

    /// Element-wise sum with a map of identical shape.
    pub fn add(&self, other: &FeatureMap) -> Result<FeatureMap> {
        if self.dims() != other.dims() {
            return Err(shape_err(
                "FeatureMap::add",
                format!("{:?}", self.dims()),
                format!("{:?}", other.dims()),
            ));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(FeatureMap::from_raw(self.height, self.width, self.channels, data))
    }

    /// Nearest-neighbour upsampling by an integer factor.
    pub fn upsample_nearest(&self, factor: usize) -> FeatureMap {
        let (h, w, c) = (self.height * factor, self.width * factor, self.channels);
        let mut data = Vec::with_capacity(h * w * c);
        for y in 0..h {
            for x in 0..w {
                data.extend_from_slice(self.pixel(y / factor, x / factor));
            }
        }
        FeatureMap::from_raw(h, w, c, data)
    }

    /// Crops to the top-left `height×width` region.
    pub fn crop(&self, height: usize, width: usize) -> Result<FeatureMap> {
        if height == 0 || width == 0 || height > self.height || width > self.width {
            return Err(shape_err(
                "crop",
                format!("at most {}x{}", self.height, self.width),
                format!("{height}x{width}"),
            ));
        }
        let mut data = Vec::with_capacity(height * width * self.channels);
        for y in 0..height {
            let row = y * self.width * self.channels;
            data.extend_from_slice(&self.data[row..row + width * self.channels]);
        }
        Ok(FeatureMap::from_raw(height, width, self.channels, data))
    }
}

/// `H×W` binary map. As a [`MaskFrame`], `true` marks an occluded pixel.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BinaryMap {
    height: usize,
    width: usize,
    data: Vec<bool>,
}

/// Occlusion mask: `true` = pixel must be inpainted.
pub type MaskFrame = BinaryMap;

impl BinaryMap {
    pub fn new(height: usize, width: usize, data: Vec<bool>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidArgument("binary map dims must be positive".into()));
        }
        if data.len() != height * width {
            return Err(shape_err("BinaryMap::new", height * width, data.len()));
        }
        Ok(Self { height, width, data })
    }

    pub fn empty(height: usize, width: usize) -> Self {
        assert!(height > 0 && width > 0);
        Self {
            height,
            width,
            data: vec![false; height * width],
        }
    }

    pub fn full(height: usize, width: usize) -> Self {
        assert!(height > 0 && width > 0);
        Self {
            height,
            width,
            data: vec![true; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x));
            }
        }
        Self { height, width, data }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> bool {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, value: bool) {
        self.data[y * self.width + x] = value;
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// True when no pixel is set.
    pub fn is_clear(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    pub fn is_full(&self) -> bool {
        self.data.iter().all(|&b| b)
    }

    pub fn same_dims(&self, other: &BinaryMap) -> bool {
        self.height == other.height && self.width == other.width
    }

    pub fn invert(&self) -> BinaryMap {
        BinaryMap {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|b| !b).collect(),
        }
    }

    pub fn union(&self, other: &BinaryMap) -> Result<BinaryMap> {
        self.zip_with(other, |a, b| a || b)
    }

    pub fn intersect(&self, other: &BinaryMap) -> Result<BinaryMap> {
        self.zip_with(other, |a, b| a && b)
    }

    fn zip_with(&self, other: &BinaryMap, f: impl Fn(bool, bool) -> bool) -> Result<BinaryMap> {
        if !self.same_dims(other) {
            return Err(shape_err(
                "BinaryMap",
                format!("{}x{}", self.height, self.width),
                format!("{}x{}", other.height, other.width),
            ));
        }
        Ok(BinaryMap {
            height: self.height,
            width: self.width,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    /// Dilation by a `(2r+1)×(2r+1)` square, clipped at the borders.
    pub fn dilate(&self, radius: usize) -> BinaryMap {
        if radius == 0 {
            return self.clone();
        }
        let (h, w) = (self.height, self.width);
        // Separable: horizontal then vertical max.
        let mut horiz = vec![false; h * w];
        for y in 0..h {
            for x in 0..w {
                let lo = x.saturating_sub(radius);
                let hi = (x + radius).min(w - 1);
                horiz[y * w + x] = (lo..=hi).any(|xx| self.data[y * w + xx]);
            }
        }
        let mut out = vec![false; h * w];
        for y in 0..h {
            let lo = y.saturating_sub(radius);
            let hi = (y + radius).min(h - 1);
            for x in 0..w {
                out[y * w + x] = (lo..=hi).any(|yy| horiz[yy * w + x]);
            }
        }
        BinaryMap {
            height: h,
            width: w,
            data: out,
        }
    }

    /// Block reduction: an output cell is set iff any pixel of its
    /// `factor×factor` block is set. Output dims are `⌈H/f⌉×⌈W/f⌉`.
    pub fn downsample_any(&self, factor: usize) -> BinaryMap {
        assert!(factor >= 1);
        let (h, w) = (self.height.div_ceil(factor), self.width.div_ceil(factor));
        let mut out = BinaryMap::empty(h, w);
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(y, x) {
                    out.set(y / factor, x / factor, true);
                }
            }
        }
        out
    }

    /// As a one-channel feature map with values 0 or 1.
    pub fn to_feature_map(&self) -> FeatureMap {
        FeatureMap::from_raw(
            self.height,
            self.width,
            1,
            self.data.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        )
    }
}

/// Dense displacement field, `u` along x (columns) and `v` along y (rows).
///
/// Backward-warp convention: the output at `p` samples the source at
/// `p + (v, u)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowField {
    map: FeatureMap,
}

impl FlowField {
    pub fn new(height: usize, width: usize, u: &[f64], v: &[f64]) -> Result<Self> {
        if u.len() != height * width || v.len() != height * width {
            return Err(shape_err("FlowField::new", height * width, u.len().max(v.len())));
        }
        let data = u.iter().zip(v).flat_map(|(&a, &b)| [a, b]).collect();
        Ok(Self {
            map: FeatureMap::new(height, width, 2, data)?,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            map: FeatureMap::zeros(height, width, 2),
        }
    }

    pub fn constant(height: usize, width: usize, u: f64, v: f64) -> Self {
        Self::from_fn(height, width, |_, _| (u, v))
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> (f64, f64)) -> Self {
        let mut data = Vec::with_capacity(height * width * 2);
        for y in 0..height {
            for x in 0..width {
                let (u, v) = f(y, x);
                assert!(u.is_finite() && v.is_finite());
                data.push(u);
                data.push(v);
            }
        }
        Self {
            map: FeatureMap::from_raw(height, width, 2, data),
        }
    }

    /// Wraps a two-channel map (channel 0 = u, channel 1 = v).
    pub fn from_map(map: FeatureMap) -> Result<Self> {
        if map.channels() != 2 {
            return Err(shape_err("FlowField::from_map", "2 channels", map.channels()));
        }
        Ok(Self { map })
    }

    pub fn height(&self) -> usize {
        self.map.height()
    }

    pub fn width(&self) -> usize {
        self.map.width()
    }

    #[inline]
    pub fn u(&self, y: usize, x: usize) -> f64 {
        self.map.get(y, x, 0)
    }

    #[inline]
    pub fn v(&self, y: usize, x: usize) -> f64 {
        self.map.get(y, x, 1)
    }

    pub fn as_map(&self) -> &FeatureMap {
        &self.map
    }

    pub fn into_map(self) -> FeatureMap {
        self.map
    }

    pub fn max_magnitude(&self) -> f64 {
        self.map
            .data()
            .chunks_exact(2)
            .map(|p| p[0].hypot(p[1]))
            .fold(0.0, f64::max)
    }

    /// Block-average downsampling by `factor`, with displacements divided by
    /// `factor` so they stay in pixels of the coarse grid.
    pub fn downsample(&self, factor: usize) -> FlowField {
        assert!(factor >= 1);
        let (h, w) = (self.height(), self.width());
        let (oh, ow) = (h.div_ceil(factor), w.div_ceil(factor));
        let mut sums = vec![[0.0f64; 2]; oh * ow];
        let mut counts = vec![0usize; oh * ow];
        for y in 0..h {
            for x in 0..w {
                let i = (y / factor) * ow + x / factor;
                sums[i][0] += self.u(y, x);
                sums[i][1] += self.v(y, x);
                counts[i] += 1;
            }
        }
        let scale = factor as f64;
        let data = sums
            .iter()
            .zip(&counts)
            .flat_map(|(s, &n)| [s[0] / n as f64 / scale, s[1] / n as f64 / scale])
            .collect();
        FlowField {
            map: FeatureMap::from_raw(oh, ow, 2, data),
        }
    }
}

/// Per-position, per-tap sampling offsets and modulation scalars for a
/// deformable convolution.
///
/// Offsets are `(dy, dx)` in pixels. Modulation values always lie in
/// `[0, 1]`: raw predictions are squashed through a sigmoid on the way in.
#[derive(Clone, Debug, PartialEq)]
pub struct OffsetField {
    height: usize,
    width: usize,
    taps: usize,
    offsets: Vec<[f64; 2]>,
    modulation: Vec<f64>,
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl OffsetField {
    /// Builds from already-squashed modulation values, which must lie in `[0, 1]`.
    pub fn new(height: usize, width: usize, taps: usize, offsets: Vec<[f64; 2]>, modulation: Vec<f64>) -> Result<Self> {
        let n = height * width * taps;
        if taps == 0 || offsets.len() != n || modulation.len() != n {
            return Err(shape_err(
                "OffsetField::new",
                n,
                format!("{} offsets / {} modulation", offsets.len(), modulation.len()),
            ));
        }
        if offsets.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("OffsetField offsets"));
        }
        if modulation.iter().any(|m| !(0.0..=1.0).contains(m)) {
            return Err(Error::InvalidArgument("modulation outside [0, 1]".into()));
        }
        Ok(Self {
            height,
            width,
            taps,
            offsets,
            modulation,
        })
    }

    /// Builds from raw (unbounded) modulation logits, applying a sigmoid.
    pub fn from_raw(
        height: usize,
        width: usize,
        taps: usize,
        offsets: Vec<[f64; 2]>,
        raw_modulation: Vec<f64>,
    ) -> Result<Self> {
        if raw_modulation.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("OffsetField modulation"));
        }
        let modulation = raw_modulation.into_iter().map(sigmoid).collect();
        Self::new(height, width, taps, offsets, modulation)
    }

    /// Zero offsets with unit modulation: the deformable convolution reduces
    /// to a plain convolution.
    pub fn identity(height: usize, width: usize, taps: usize) -> Self {
        let n = height * width * taps;
        Self {
            height,
            width,
            taps,
            offsets: vec![[0.0; 2]; n],
            modulation: vec![1.0; n],
        }
    }

    /// Decodes a predictor output with `3·taps` channels laid out as
    /// `[dy_0, dx_0, …, dy_{K-1}, dx_{K-1}, m_0, …, m_{K-1}]` (modulation raw).
    pub fn from_prediction(pred: &FeatureMap, taps: usize) -> Result<Self> {
        if pred.channels() != 3 * taps {
            return Err(shape_err("OffsetField::from_prediction", 3 * taps, pred.channels()));
        }
        let n = pred.height() * pred.width() * taps;
        let mut offsets = Vec::with_capacity(n);
        let mut modulation = Vec::with_capacity(n);
        for px in pred.data().chunks_exact(3 * taps) {
            for k in 0..taps {
                offsets.push([px[2 * k], px[2 * k + 1]]);
                modulation.push(sigmoid(px[2 * taps + k]));
            }
        }
        Ok(Self {
            height: pred.height(),
            width: pred.width(),
            taps,
            offsets,
            modulation,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn taps(&self) -> usize {
        self.taps
    }

    /// `(dy, dx)` for tap `k` at `(y, x)`.
    #[inline]
    pub fn offset(&self, y: usize, x: usize, k: usize) -> [f64; 2] {
        self.offsets[(y * self.width + x) * self.taps + k]
    }

    #[inline]
    pub fn modulation(&self, y: usize, x: usize, k: usize) -> f64 {
        self.modulation[(y * self.width + x) * self.taps + k]
    }

    /// Adds a flow field to every tap's offset (flow-guided alignment).
    pub fn add_flow(&self, flow: &FlowField) -> Result<OffsetField> {
        if flow.height() != self.height || flow.width() != self.width {
            return Err(shape_err(
                "OffsetField::add_flow",
                format!("{}x{}", self.height, self.width),
                format!("{}x{}", flow.height(), flow.width()),
            ));
        }
        let mut out = self.clone();
        for y in 0..self.height {
            for x in 0..self.width {
                let (u, v) = (flow.u(y, x), flow.v(y, x));
                for k in 0..self.taps {
                    let o = &mut out.offsets[(y * self.width + x) * self.taps + k];
                    o[0] += v;
                    o[1] += u;
                }
            }
        }
        Ok(out)
    }
}

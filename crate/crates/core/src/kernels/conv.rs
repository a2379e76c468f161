use rand::Rng;
use rayon::prelude::*;

use crate::error::{shape_err, Error, Result};

use super::map::{FeatureMap, OffsetField};
use super::sample::sample_into;

/// Convolution kernel in `[out, in, kh, kw]` order plus per-output bias.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvWeights {
    out_channels: usize,
    in_channels: usize,
    kernel_h: usize,
    kernel_w: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
    // [kh][kw][in][out], so the innermost loop walks output channels.
    packed: Vec<f64>,
}

impl ConvWeights {
    pub fn new(
        out_channels: usize,
        in_channels: usize,
        kernel_h: usize,
        kernel_w: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self> {
        if out_channels == 0 || in_channels == 0 {
            return Err(Error::InvalidArgument("conv channels must be positive".into()));
        }
        if kernel_h.is_multiple_of(2) || kernel_w.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "kernel dims must be odd, got {kernel_h}x{kernel_w}"
            )));
        }
        let n = out_channels * in_channels * kernel_h * kernel_w;
        if weights.len() != n {
            return Err(shape_err("ConvWeights weights", n, weights.len()));
        }
        if bias.len() != out_channels {
            return Err(shape_err("ConvWeights bias", out_channels, bias.len()));
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("ConvWeights"));
        }
        let mut packed = vec![0.0; n];
        for o in 0..out_channels {
            for i in 0..in_channels {
                for ky in 0..kernel_h {
                    for kx in 0..kernel_w {
                        let src = ((o * in_channels + i) * kernel_h + ky) * kernel_w + kx;
                        let dst = ((ky * kernel_w + kx) * in_channels + i) * out_channels + o;
                        packed[dst] = weights[src];
                    }
                }
            }
        }
        Ok(Self {
            out_channels,
            in_channels,
            kernel_h,
            kernel_w,
            weights,
            bias,
            packed,
        })
    }

    pub fn zeros(out_channels: usize, in_channels: usize, kernel_h: usize, kernel_w: usize) -> Self {
        let n = out_channels * in_channels * kernel_h * kernel_w;
        Self::new(
            out_channels,
            in_channels,
            kernel_h,
            kernel_w,
            vec![0.0; n],
            vec![0.0; out_channels],
        )
        .expect("valid zero kernel")
    }

    /// Kernel that copies input channel `c` to output channel `c` (square, odd size).
    pub fn identity(channels: usize, kernel: usize) -> Self {
        let mut w = vec![0.0; channels * channels * kernel * kernel];
        let centre = kernel / 2;
        for c in 0..channels {
            w[((c * channels + c) * kernel + centre) * kernel + centre] = 1.0;
        }
        Self::new(channels, channels, kernel, kernel, w, vec![0.0; channels]).expect("valid identity kernel")
    }

    /// Uniform init in `±1/√fan_in`, bias included. Values are rounded to
    /// `f32` so they survive a trip through the weights container unchanged.
    pub fn random<R: Rng>(
        rng: &mut R,
        out_channels: usize,
        in_channels: usize,
        kernel_h: usize,
        kernel_w: usize,
    ) -> Self {
        let fan_in = (in_channels * kernel_h * kernel_w) as f64;
        let bound = 1.0 / fan_in.sqrt();
        let n = out_channels * in_channels * kernel_h * kernel_w;
        let weights = (0..n).map(|_| rng.gen_range(-bound..bound) as f32 as f64).collect();
        let bias = (0..out_channels)
            .map(|_| rng.gen_range(-bound..bound) as f32 as f64)
            .collect();
        Self::new(out_channels, in_channels, kernel_h, kernel_w, weights, bias).expect("valid random kernel")
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn kernel_size(&self) -> (usize, usize) {
        (self.kernel_h, self.kernel_w)
    }

    pub fn taps(&self) -> usize {
        self.kernel_h * self.kernel_w
    }

    #[inline]
    pub fn weight(&self, o: usize, i: usize, ky: usize, kx: usize) -> f64 {
        self.weights[((o * self.in_channels + i) * self.kernel_h + ky) * self.kernel_w + kx]
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    /// Weights in `[out, in, kh, kw]` order.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    fn tap_block(&self, tap: usize, input: usize) -> &[f64] {
        let start = (tap * self.in_channels + input) * self.out_channels;
        &self.packed[start..start + self.out_channels]
    }

    fn check_input(&self, src: &FeatureMap, context: &'static str) -> Result<()> {
        if src.channels() != self.in_channels {
            return Err(shape_err(context, self.in_channels, src.channels()));
        }
        Ok(())
    }
}

/// Same-size cross-correlation with replicate padding.
pub fn conv2d(src: &FeatureMap, w: &ConvWeights) -> Result<FeatureMap> {
    conv2d_strided(src, w, 1)
}

/// Cross-correlation with replicate padding and the given stride.
/// Output dims are `⌈H/stride⌉×⌈W/stride⌉`.
pub fn conv2d_strided(src: &FeatureMap, w: &ConvWeights, stride: usize) -> Result<FeatureMap> {
    w.check_input(src, "conv2d")?;
    if stride == 0 {
        return Err(Error::InvalidArgument("stride must be positive".into()));
    }
    let (h, wd) = (src.height(), src.width());
    let (oh, ow) = (h.div_ceil(stride), wd.div_ceil(stride));
    let oc = w.out_channels;
    let (ph, pw) = ((w.kernel_h / 2) as isize, (w.kernel_w / 2) as isize);
    let mut out = vec![0.0; oh * ow * oc];
    out.par_chunks_mut(ow * oc).enumerate().for_each(|(y, row)| {
        for x in 0..ow {
            let acc = &mut row[x * oc..(x + 1) * oc];
            acc.copy_from_slice(&w.bias);
            for ky in 0..w.kernel_h {
                let sy = ((y * stride) as isize + ky as isize - ph).clamp(0, h as isize - 1) as usize;
                for kx in 0..w.kernel_w {
                    let sx = ((x * stride) as isize + kx as isize - pw).clamp(0, wd as isize - 1) as usize;
                    let px = src.pixel(sy, sx);
                    let tap = ky * w.kernel_w + kx;
                    for (i, &v) in px.iter().enumerate() {
                        for (a, &k) in acc.iter_mut().zip(w.tap_block(tap, i)) {
                            *a += v * k;
                        }
                    }
                }
            }
        }
    });
    Ok(FeatureMap::from_raw(oh, ow, oc, out))
}

/// Modulated deformable convolution (stride 1, same size).
///
/// For output `p` and tap `k` at nominal offset `r_k`, the input is sampled
/// bilinearly at `p + r_k + offset_k(p)`, scaled by `modulation_k(p)` and
/// multiplied by the tap's weights. Out-of-frame samples clamp to the border.
pub fn deformable_conv(src: &FeatureMap, offsets: &OffsetField, w: &ConvWeights) -> Result<FeatureMap> {
    w.check_input(src, "deformable_conv")?;
    if offsets.taps() != w.taps() {
        return Err(shape_err("deformable_conv taps", w.taps(), offsets.taps()));
    }
    if offsets.height() != src.height() || offsets.width() != src.width() {
        return Err(shape_err(
            "deformable_conv offsets",
            format!("{}x{}", src.height(), src.width()),
            format!("{}x{}", offsets.height(), offsets.width()),
        ));
    }
    let (h, wd, ic) = src.dims();
    let oc = w.out_channels;
    let (ph, pw) = ((w.kernel_h / 2) as f64, (w.kernel_w / 2) as f64);
    let mut out = vec![0.0; h * wd * oc];
    out.par_chunks_mut(wd * oc).enumerate().for_each(|(y, row)| {
        let mut sample = vec![0.0; ic];
        for x in 0..wd {
            let acc = &mut row[x * oc..(x + 1) * oc];
            acc.copy_from_slice(&w.bias);
            for ky in 0..w.kernel_h {
                for kx in 0..w.kernel_w {
                    let tap = ky * w.kernel_w + kx;
                    let [dy, dx] = offsets.offset(y, x, tap);
                    let m = offsets.modulation(y, x, tap);
                    let sy = y as f64 + ky as f64 - ph + dy;
                    let sx = x as f64 + kx as f64 - pw + dx;
                    sample_into(src, sy, sx, &mut sample);
                    for (i, &v) in sample.iter().enumerate() {
                        let v = v * m;
                        for (a, &k) in acc.iter_mut().zip(w.tap_block(tap, i)) {
                            *a += v * k;
                        }
                    }
                }
            }
        }
    });
    Ok(FeatureMap::from_raw(h, wd, oc, out))
}

/// Leaky ReLU with slope 0.1 for negative inputs.
#[inline]
pub fn leaky_relu(x: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        0.1 * x
    }
}

//! Mask-guided sparse window transformer block.
//!
//! Pre-norm block applied per frame:
//!
//! ```text
//! x₁ = x  + Wₒ·Attn(LN₁(x))      inside windows that touch the mask
//! x₁ = x                          elsewhere
//! x₂ = x₁ + FFN(LN₂(x₁))          everywhere
//! ```
//!
//! Attention is multi-head softmax attention within each selected window,
//! keys and values taken from the same frame.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{shape_err, Error, Result};
use crate::kernels::{select_masked_windows, sparse_window_attention, FeatureMap, MaskFrame};
use crate::tensorfile::{Tensor, TensorFile};

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MsvtConfig {
    pub window_size: usize,
    pub heads: usize,
    pub ffn_expansion: usize,
}

impl Default for MsvtConfig {
    fn default() -> Self {
        Self {
            window_size: 8,
            heads: 2,
            ffn_expansion: 2,
        }
    }
}

impl MsvtConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_size == 0 || self.heads == 0 || self.ffn_expansion == 0 {
            return Err(Error::InvalidArgument(format!(
                "MSVT config fields must be ≥ 1: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Dense layer `y = W·x + b` with `W` stored `[out, in]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    out_features: usize,
    in_features: usize,
    weight: Vec<f64>,
    bias: Vec<f64>,
}

impl Linear {
    pub fn new(out_features: usize, in_features: usize, weight: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if weight.len() != out_features * in_features || bias.len() != out_features {
            return Err(shape_err(
                "Linear",
                format!("{out_features}x{in_features} + {out_features}"),
                format!("{} + {}", weight.len(), bias.len()),
            ));
        }
        if weight.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Linear"));
        }
        Ok(Self {
            out_features,
            in_features,
            weight,
            bias,
        })
    }

    pub fn zeros(out_features: usize, in_features: usize) -> Self {
        Self::new(
            out_features,
            in_features,
            vec![0.0; out_features * in_features],
            vec![0.0; out_features],
        )
        .expect("valid shape")
    }

    pub fn random<R: Rng>(rng: &mut R, out_features: usize, in_features: usize) -> Self {
        let bound = 1.0 / (in_features as f64).sqrt();
        let mut draw = || rng.gen_range(-bound..bound) as f32 as f64;
        let weight = (0..out_features * in_features).map(|_| draw()).collect();
        let bias = (0..out_features).map(|_| draw()).collect();
        Self::new(out_features, in_features, weight, bias).expect("valid shape")
    }

    pub fn in_features(&self) -> usize {
        self.in_features
    }

    pub fn out_features(&self) -> usize {
        self.out_features
    }

    pub fn weight(&self) -> &[f64] {
        &self.weight
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, slot) in out.iter_mut().enumerate() {
            let row = &self.weight[o * self.in_features..(o + 1) * self.in_features];
            *slot = self.bias[o] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
    }

    /// Applies the layer at every position of a map.
    pub fn apply(&self, x: &FeatureMap) -> Result<FeatureMap> {
        if x.channels() != self.in_features {
            return Err(shape_err("Linear::apply", self.in_features, x.channels()));
        }
        let mut out = FeatureMap::zeros(x.height(), x.width(), self.out_features);
        for (src, dst) in x
            .data()
            .chunks_exact(self.in_features)
            .zip(out.data_mut().chunks_exact_mut(self.out_features))
        {
            self.apply_into(src, dst);
        }
        Ok(out)
    }

    fn write(&self, file: &mut TensorFile, name: &str) {
        file.insert(
            format!("{name}.weight"),
            Tensor::from_f64(vec![self.out_features, self.in_features], &self.weight).expect("consistent"),
        );
        file.insert(
            format!("{name}.bias"),
            Tensor::from_f64(vec![self.out_features], &self.bias).expect("consistent"),
        );
    }

    fn read(file: &TensorFile, name: &str) -> Result<Self> {
        let (r, c, w) = file.matrix(&format!("{name}.weight"))?;
        let b = file.vector(&format!("{name}.bias"), r)?;
        Self::new(r, c, w, b)
    }
}

/// Per-channel layer-norm scale and shift.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerNorm {
    pub scale: Vec<f64>,
    pub shift: Vec<f64>,
}

impl LayerNorm {
    pub fn identity(channels: usize) -> Self {
        Self {
            scale: vec![1.0; channels],
            shift: vec![0.0; channels],
        }
    }

    fn zeros(channels: usize) -> Self {
        Self {
            scale: vec![0.0; channels],
            shift: vec![0.0; channels],
        }
    }

    /// Normalises every position over its channels.
    pub fn apply(&self, x: &FeatureMap) -> Result<FeatureMap> {
        let c = x.channels();
        if self.scale.len() != c || self.shift.len() != c {
            return Err(shape_err("LayerNorm", c, self.scale.len()));
        }
        let mut out = x.clone();
        for px in out.data_mut().chunks_exact_mut(c) {
            let mean = px.iter().sum::<f64>() / c as f64;
            let var = px.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / c as f64;
            let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            for (i, v) in px.iter_mut().enumerate() {
                *v = (*v - mean) * inv * self.scale[i] + self.shift[i];
            }
        }
        Ok(out)
    }
}

/// GELU, tanh approximation.
#[inline]
pub fn gelu(x: f64) -> f64 {
    const K: f64 = 0.797_884_560_802_865_4; // √(2/π)
    0.5 * x * (1.0 + (K * (x + 0.044_715 * x * x * x)).tanh())
}

#[derive(Clone, Debug, PartialEq)]
pub struct MsvtWeights {
    pub heads: usize,
    pub norm1: LayerNorm,
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub norm2: LayerNorm,
    pub ffn_in: Linear,
    pub ffn_out: Linear,
}

impl MsvtWeights {
    /// Every parameter zero, including the layer-norm scales.
    pub fn zeros(channels: usize, cfg: &MsvtConfig) -> Self {
        let c = channels;
        let hidden = c * cfg.ffn_expansion;
        Self {
            heads: cfg.heads,
            norm1: LayerNorm::zeros(c),
            query: Linear::zeros(c, c),
            key: Linear::zeros(c, c),
            value: Linear::zeros(c, c),
            output: Linear::zeros(c, c),
            norm2: LayerNorm::zeros(c),
            ffn_in: Linear::zeros(hidden, c),
            ffn_out: Linear::zeros(c, hidden),
        }
    }

    pub fn seeded(seed: u64, channels: usize, cfg: &MsvtConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = channels;
        let hidden = c * cfg.ffn_expansion;
        let norm = |rng: &mut ChaCha8Rng| LayerNorm {
            scale: (0..c).map(|_| rng.gen_range(0.5..1.5) as f32 as f64).collect(),
            shift: (0..c).map(|_| rng.gen_range(-0.1..0.1) as f32 as f64).collect(),
        };
        let norm1 = norm(&mut rng);
        let norm2 = norm(&mut rng);
        Self {
            heads: cfg.heads,
            norm1,
            query: Linear::random(&mut rng, c, c),
            key: Linear::random(&mut rng, c, c),
            value: Linear::random(&mut rng, c, c),
            output: Linear::random(&mut rng, c, c),
            norm2,
            ffn_in: Linear::random(&mut rng, hidden, c),
            ffn_out: Linear::random(&mut rng, c, hidden),
        }
    }

    pub fn channels(&self) -> usize {
        self.query.in_features()
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.channels();
        if self.heads == 0 || !c.is_multiple_of(self.heads) {
            return Err(Error::InvalidArgument(format!(
                "{} heads do not divide {c} channels",
                self.heads
            )));
        }
        for (name, l) in [
            ("key", &self.key),
            ("value", &self.value),
            ("output", &self.output),
            ("query", &self.query),
        ] {
            if l.in_features() != c || l.out_features() != c {
                return Err(shape_err(
                    name,
                    format!("{c}x{c}"),
                    format!("{}x{}", l.out_features(), l.in_features()),
                ));
            }
        }
        if self.ffn_in.in_features() != c
            || self.ffn_out.out_features() != c
            || self.ffn_in.out_features() != self.ffn_out.in_features()
        {
            return Err(shape_err("ffn", c, self.ffn_in.in_features()));
        }
        for n in [&self.norm1, &self.norm2] {
            if n.scale.len() != c || n.shift.len() != c {
                return Err(shape_err("layer norm", c, n.scale.len()));
            }
        }
        Ok(())
    }

    pub fn write_tensors(&self, file: &mut TensorFile, prefix: &str) {
        file.insert(
            format!("{prefix}.heads"),
            Tensor::new(vec![1], vec![self.heads as f32]).expect("consistent"),
        );
        for (name, n) in [("norm1", &self.norm1), ("norm2", &self.norm2)] {
            let c = n.scale.len();
            file.insert(
                format!("{prefix}.{name}.scale"),
                Tensor::from_f64(vec![c], &n.scale).expect("consistent"),
            );
            file.insert(
                format!("{prefix}.{name}.shift"),
                Tensor::from_f64(vec![c], &n.shift).expect("consistent"),
            );
        }
        self.query.write(file, &format!("{prefix}.query"));
        self.key.write(file, &format!("{prefix}.key"));
        self.value.write(file, &format!("{prefix}.value"));
        self.output.write(file, &format!("{prefix}.output"));
        self.ffn_in.write(file, &format!("{prefix}.ffn_in"));
        self.ffn_out.write(file, &format!("{prefix}.ffn_out"));
    }

    pub fn read_tensors(file: &TensorFile, prefix: &str) -> Result<Self> {
        let heads = file.vector(&format!("{prefix}.heads"), 1)?[0];
        if heads < 1.0 || heads.fract() != 0.0 {
            return Err(Error::Weights(format!(
                "`{prefix}.heads` must be a positive integer, got {heads}"
            )));
        }
        let query = Linear::read(file, &format!("{prefix}.query"))?;
        let c = query.in_features();
        let norm = |name: &str| -> Result<LayerNorm> {
            Ok(LayerNorm {
                scale: file.vector(&format!("{prefix}.{name}.scale"), c)?,
                shift: file.vector(&format!("{prefix}.{name}.shift"), c)?,
            })
        };
        let w = Self {
            heads: heads as usize,
            norm1: norm("norm1")?,
            query,
            key: Linear::read(file, &format!("{prefix}.key"))?,
            value: Linear::read(file, &format!("{prefix}.value"))?,
            output: Linear::read(file, &format!("{prefix}.output"))?,
            norm2: norm("norm2")?,
            ffn_in: Linear::read(file, &format!("{prefix}.ffn_in"))?,
            ffn_out: Linear::read(file, &format!("{prefix}.ffn_out"))?,
        };
        w.validate().map_err(|e| Error::Weights(e.to_string()))?;
        Ok(w)
    }
}

fn block_one(x: &FeatureMap, mask: &MaskFrame, w: &MsvtWeights, cfg: &MsvtConfig) -> Result<FeatureMap> {
    if mask.height() != x.height() || mask.width() != x.width() {
        return Err(shape_err(
            "msvt_block mask",
            format!("{}x{}", x.height(), x.width()),
            format!("{}x{}", mask.height(), mask.width()),
        ));
    }
    if x.channels() != w.channels() {
        return Err(shape_err("msvt_block channels", w.channels(), x.channels()));
    }
    let grid = select_masked_windows(mask, cfg.window_size)?;
    let mut x1 = x.clone();
    if grid.selected_count() > 0 {
        let normed = w.norm1.apply(x)?;
        let q = w.query.apply(&normed)?;
        let k = w.key.apply(&normed)?;
        let v = w.value.apply(&normed)?;
        let attended = sparse_window_attention(&q, &k, &v, &grid, w.heads)?;
        let projected = w.output.apply(&attended)?;
        for index in grid.selected() {
            let (ys, xs) = grid.bounds(index);
            for y in ys {
                for xx in xs.clone() {
                    let delta = projected.pixel(y, xx);
                    for (a, d) in x1.pixel_mut(y, xx).iter_mut().zip(delta) {
                        *a += d;
                    }
                }
            }
        }
    }
    let normed = w.norm2.apply(&x1)?;
    let mut hidden = w.ffn_in.apply(&normed)?;
    hidden.map_inplace(gelu);
    x1.add(&w.ffn_out.apply(&hidden)?)
}

/// Applies one block to every frame. Masks must already be at feature
/// resolution.
pub fn msvt_block(
    features: &[FeatureMap],
    masks: &[MaskFrame],
    w: &MsvtWeights,
    cfg: &MsvtConfig,
) -> Result<Vec<FeatureMap>> {
    cfg.validate()?;
    w.validate()?;
    if w.heads != cfg.heads {
        return Err(Error::InvalidArgument(format!(
            "weights carry {} heads, config asks for {}",
            w.heads, cfg.heads
        )));
    }
    if features.len() != masks.len() {
        return Err(shape_err("msvt_block lengths", features.len(), masks.len()));
    }
    features
        .par_iter()
        .zip(masks.par_iter())
        .map(|(x, m)| block_one(x, m, w, cfg))
        .collect()
}

/// Applies blocks in sequence.
pub fn msvt_stack(
    features: &[FeatureMap],
    masks: &[MaskFrame],
    blocks: &[MsvtWeights],
    cfg: &MsvtConfig,
) -> Result<Vec<FeatureMap>> {
    let mut x = features.to_vec();
    for b in blocks {
        x = msvt_block(&x, masks, b, cfg)?;
    }
    Ok(x)
}

/// Number of query positions that fall inside windows touching the mask,
/// summed over frames.
pub fn count_attended_tokens(masks: &[MaskFrame], cfg: &MsvtConfig) -> Result<usize> {
    masks
        .iter()
        .map(|m| Ok(select_masked_windows(m, cfg.window_size)?.covered_positions()))
        .sum()
}

//! Recurrent flow completion over 8×-downsampled flow features.
//!
//! Each flow field is encoded to features at 1/8 resolution. A backward
//! recurrence then aligns the propagated features of frame `t+1` onto frame
//! `t` with a modulated deformable convolution whose offsets and modulation
//! are predicted from the channel concatenation of both, and fuses the
//! result with the current features:
//!
//! ```text
//! f̂_t = R(D(f̂_{t+1}; o, m), f_t),   R(a, f) = f + conv(lrelu(conv([a, f])))
//! ```
//!
//! A forward recurrence mirrors it over the backward outputs, and a decoder
//! upsamples back to full resolution. Outside the masks the input flow is
//! kept: `F̂ = F·(1−M) + F_dec·M`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{shape_err, Error, Result};
use crate::kernels::{
    conv2d, conv2d_strided, deformable_conv, leaky_relu, ConvWeights, FeatureMap, FlowField, MaskFrame, OffsetField,
};
use crate::tensorfile::TensorFile;

use super::FlowPair;

/// Spatial reduction between flows and flow features.
pub const FLOW_FEATURE_STRIDE: usize = 8;

/// Channel widths of the completion graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FlowGraphPlan {
    /// Width after the first stride-2 stage.
    pub hidden: usize,
    /// Feature width after the second stage; kept by the last encoder conv.
    pub features: usize,
    /// Side of the square deformable kernel.
    pub kernel: usize,
}

impl Default for FlowGraphPlan {
    fn default() -> Self {
        Self {
            hidden: 32,
            features: 64,
            kernel: 3,
        }
    }
}

/// Parameters of the recurrent completion graph.
///
/// Encoder: three stride-2 3×3 convs (2 → hidden → features → features).
/// Offset predictor: two 3×3 convs on `[current, propagated]` ending in
/// `3·taps` channels. Alignment: a deformable conv. Fusion: two 3×3 convs
/// on `[aligned, current]`. Decoder: three (2× nearest upsample, 3×3 conv)
/// stages mirroring the encoder.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowCompletionWeights {
    pub encoder: [ConvWeights; 3],
    pub offset_predictor: [ConvWeights; 2],
    pub alignment: ConvWeights,
    pub fusion: [ConvWeights; 2],
    pub decoder: [ConvWeights; 3],
}

fn chain(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(shape_err(context, expected, actual));
    }
    Ok(())
}

impl FlowCompletionWeights {
    pub fn seeded(seed: u64, plan: FlowGraphPlan) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (h, c, k) = (plan.hidden, plan.features, plan.kernel);
        let mut conv = |o, i, k| ConvWeights::random(&mut rng, o, i, k, k);
        let encoder = [conv(h, 2, 3), conv(c, h, 3), conv(c, c, 3)];
        let offset_predictor = [conv(c, 2 * c, 3), conv(3 * k * k, c, 3)];
        let alignment = conv(c, c, k);
        let fusion = [conv(c, 2 * c, 3), conv(c, c, 3)];
        let decoder = [conv(c, c, 3), conv(h, c, 3), conv(2, h, 3)];
        Self {
            encoder,
            offset_predictor,
            alignment,
            fusion,
            decoder,
        }
    }

    pub fn feature_channels(&self) -> usize {
        self.encoder[2].out_channels()
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.feature_channels();
        chain("flow encoder input", 2, self.encoder[0].in_channels())?;
        chain(
            "flow encoder 1",
            self.encoder[0].out_channels(),
            self.encoder[1].in_channels(),
        )?;
        chain(
            "flow encoder 2",
            self.encoder[1].out_channels(),
            self.encoder[2].in_channels(),
        )?;
        chain("flow offset input", 2 * c, self.offset_predictor[0].in_channels())?;
        chain(
            "flow offset hidden",
            self.offset_predictor[0].out_channels(),
            self.offset_predictor[1].in_channels(),
        )?;
        chain(
            "flow offset output",
            3 * self.alignment.taps(),
            self.offset_predictor[1].out_channels(),
        )?;
        chain("flow alignment input", c, self.alignment.in_channels())?;
        chain("flow alignment output", c, self.alignment.out_channels())?;
        chain("flow fusion input", 2 * c, self.fusion[0].in_channels())?;
        chain(
            "flow fusion hidden",
            self.fusion[0].out_channels(),
            self.fusion[1].in_channels(),
        )?;
        chain("flow fusion output", c, self.fusion[1].out_channels())?;
        chain("flow decoder input", c, self.decoder[0].in_channels())?;
        chain(
            "flow decoder 1",
            self.decoder[0].out_channels(),
            self.decoder[1].in_channels(),
        )?;
        chain(
            "flow decoder 2",
            self.decoder[1].out_channels(),
            self.decoder[2].in_channels(),
        )?;
        chain("flow decoder output", 2, self.decoder[2].out_channels())?;
        Ok(())
    }

    pub fn write_tensors(&self, file: &mut TensorFile, prefix: &str) {
        for (i, c) in self.encoder.iter().enumerate() {
            file.insert_conv(&format!("{prefix}.encoder.{i}"), c);
        }
        for (i, c) in self.offset_predictor.iter().enumerate() {
            file.insert_conv(&format!("{prefix}.offset.{i}"), c);
        }
        file.insert_conv(&format!("{prefix}.align"), &self.alignment);
        for (i, c) in self.fusion.iter().enumerate() {
            file.insert_conv(&format!("{prefix}.fusion.{i}"), c);
        }
        for (i, c) in self.decoder.iter().enumerate() {
            file.insert_conv(&format!("{prefix}.decoder.{i}"), c);
        }
    }

    pub fn read_tensors(file: &TensorFile, prefix: &str) -> Result<Self> {
        let conv = |name: String| file.conv(&name);
        let w = Self {
            encoder: [
                conv(format!("{prefix}.encoder.0"))?,
                conv(format!("{prefix}.encoder.1"))?,
                conv(format!("{prefix}.encoder.2"))?,
            ],
            offset_predictor: [conv(format!("{prefix}.offset.0"))?, conv(format!("{prefix}.offset.1"))?],
            alignment: conv(format!("{prefix}.align"))?,
            fusion: [conv(format!("{prefix}.fusion.0"))?, conv(format!("{prefix}.fusion.1"))?],
            decoder: [
                conv(format!("{prefix}.decoder.0"))?,
                conv(format!("{prefix}.decoder.1"))?,
                conv(format!("{prefix}.decoder.2"))?,
            ],
        };
        w.validate().map_err(|e| Error::Weights(e.to_string()))?;
        Ok(w)
    }

    /// Flow (zeroed inside the mask) → features at 1/8 resolution.
    pub fn encode(&self, flow: &FlowField, mask: &MaskFrame) -> Result<FeatureMap> {
        let mut x = flow.as_map().clone();
        for (i, px) in x.data_mut().chunks_exact_mut(2).enumerate() {
            if mask.data()[i] {
                px.fill(0.0);
            }
        }
        x = conv2d_strided(&x, &self.encoder[0], 2)?;
        x.map_inplace(leaky_relu);
        x = conv2d_strided(&x, &self.encoder[1], 2)?;
        x.map_inplace(leaky_relu);
        conv2d_strided(&x, &self.encoder[2], 2)
    }

    /// One recurrence step: aligns `propagated` onto `current` and fuses.
    pub fn step(&self, propagated: &FeatureMap, current: &FeatureMap) -> Result<FeatureMap> {
        align_and_fuse(
            &self.offset_predictor,
            &self.alignment,
            &self.fusion,
            propagated,
            current,
        )
    }

    pub fn decode(&self, features: &FeatureMap) -> Result<FeatureMap> {
        let mut x = features.upsample_nearest(2);
        x = conv2d(&x, &self.decoder[0])?;
        x.map_inplace(leaky_relu);
        x = conv2d(&x.upsample_nearest(2), &self.decoder[1])?;
        x.map_inplace(leaky_relu);
        conv2d(&x.upsample_nearest(2), &self.decoder[2])
    }

    /// Bidirectional recurrence over a feature sequence.
    pub fn propagate(&self, features: &[FeatureMap]) -> Result<Vec<FeatureMap>> {
        bidirectional(features, |prev, cur| self.step(prev, cur))
    }
}

/// Offset prediction, deformable alignment and residual fusion shared by the
/// flow and feature recurrences. Predictor input is `[current, propagated]`.
pub(crate) fn align_and_fuse(
    predictor: &[ConvWeights; 2],
    alignment: &ConvWeights,
    fusion: &[ConvWeights; 2],
    propagated: &FeatureMap,
    current: &FeatureMap,
) -> Result<FeatureMap> {
    let cond = FeatureMap::concat_channels(&[current, propagated])?;
    let mut hidden = conv2d(&cond, &predictor[0])?;
    hidden.map_inplace(leaky_relu);
    let pred = conv2d(&hidden, &predictor[1])?;
    let offsets = OffsetField::from_prediction(&pred, alignment.taps())?;
    let aligned = deformable_conv(propagated, &offsets, alignment)?;
    fuse(fusion, &aligned, current)
}

/// `R(a, f) = f + conv₂(lrelu(conv₁([a, f])))`.
pub(crate) fn fuse(fusion: &[ConvWeights; 2], aligned: &FeatureMap, current: &FeatureMap) -> Result<FeatureMap> {
    let mut x = conv2d(&FeatureMap::concat_channels(&[aligned, current])?, &fusion[0])?;
    x.map_inplace(leaky_relu);
    current.add(&conv2d(&x, &fusion[1])?)
}

/// Backward sweep (`t = n-1 … 0`, seeded with the last frame's features),
/// then a mirrored forward sweep over the backward outputs.
pub(crate) fn bidirectional(
    features: &[FeatureMap],
    mut step: impl FnMut(&FeatureMap, &FeatureMap) -> Result<FeatureMap>,
) -> Result<Vec<FeatureMap>> {
    let n = features.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut backward = features.to_vec();
    for t in (0..n - 1).rev() {
        backward[t] = step(&backward[t + 1], &features[t])?;
    }
    let mut forward = backward.clone();
    for t in 1..n {
        forward[t] = step(&forward[t - 1], &backward[t])?;
    }
    Ok(forward)
}

fn complete_direction(fields: &[&FlowField], masks: &[MaskFrame], w: &FlowCompletionWeights) -> Result<Vec<FlowField>> {
    let encoded = fields
        .iter()
        .zip(masks)
        .map(|(f, m)| w.encode(f, m))
        .collect::<Result<Vec<_>>>()?;
    let propagated = w.propagate(&encoded)?;
    fields
        .iter()
        .zip(masks)
        .zip(&propagated)
        .map(|((field, mask), feat)| {
            let decoded = w.decode(feat)?;
            let mut out = field.as_map().clone();
            for (i, px) in out.data_mut().chunks_exact_mut(2).enumerate() {
                if mask.data()[i] {
                    px.copy_from_slice(&decoded.data()[2 * i..2 * i + 2]);
                }
            }
            FlowField::from_map(out)
        })
        .collect()
}

/// Completes forward and backward flows inside `masks[i]` for every pair `i`
/// with the recurrent graph. Flow dims must be multiples of 8.
pub fn complete_flow_recurrent(
    flows: &[FlowPair],
    masks: &[MaskFrame],
    w: &FlowCompletionWeights,
) -> Result<Vec<FlowPair>> {
    if flows.len() != masks.len() {
        return Err(shape_err("complete_flow_recurrent lengths", flows.len(), masks.len()));
    }
    w.validate()?;
    let Some(first) = flows.first() else {
        return Ok(Vec::new());
    };
    let (h, wd) = (first.forward.height(), first.forward.width());
    if h % FLOW_FEATURE_STRIDE != 0 || wd % FLOW_FEATURE_STRIDE != 0 {
        return Err(shape_err(
            "complete_flow_recurrent dims",
            "multiples of 8",
            format!("{h}x{wd}"),
        ));
    }
    for (p, m) in flows.iter().zip(masks) {
        if p.forward.height() != h || p.forward.width() != wd || m.height() != h || m.width() != wd {
            return Err(shape_err(
                "complete_flow_recurrent dims",
                format!("{h}x{wd}"),
                format!("{}x{}", p.forward.height(), p.forward.width()),
            ));
        }
    }
    if masks.iter().all(MaskFrame::is_clear) {
        return Ok(flows.to_vec());
    }
    let forward: Vec<&FlowField> = flows.iter().map(|p| &p.forward).collect();
    let backward: Vec<&FlowField> = flows.iter().map(|p| &p.backward).collect();
    let (fwd, bwd) = rayon::join(
        || complete_direction(&forward, masks, w),
        || complete_direction(&backward, masks, w),
    );
    fwd?.into_iter().zip(bwd?).map(|(f, b)| FlowPair::new(f, b)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_plan() -> FlowGraphPlan {
        FlowGraphPlan {
            hidden: 4,
            features: 6,
            kernel: 3,
        }
    }

    #[test]
    fn seeded_weights_are_consistent() {
        FlowCompletionWeights::seeded(7, FlowGraphPlan::default())
            .validate()
            .unwrap();
        assert_eq!(
            FlowCompletionWeights::seeded(7, small_plan()),
            FlowCompletionWeights::seeded(7, small_plan())
        );
    }

    #[test]
    fn tensor_round_trip() {
        let w = FlowCompletionWeights::seeded(3, small_plan());
        let mut file = TensorFile::new();
        w.write_tensors(&mut file, "flow");
        let back = TensorFile::from_bytes(&file.to_bytes()).unwrap();
        assert_eq!(FlowCompletionWeights::read_tensors(&back, "flow").unwrap(), w);
    }

    #[test]
    fn empty_masks_are_identity() {
        let w = FlowCompletionWeights::seeded(1, small_plan());
        let pair = FlowPair::new(
            FlowField::from_fn(16, 16, |y, x| (x as f64 * 0.1, y as f64 * -0.2)),
            FlowField::constant(16, 16, 0.5, 0.25),
        )
        .unwrap();
        let out =
            complete_flow_recurrent(&[pair.clone(), pair.clone()], &vec![MaskFrame::empty(16, 16); 2], &w).unwrap();
        assert_eq!(out, vec![pair.clone(), pair]);
    }

    #[test]
    fn length_and_dim_errors() {
        let w = FlowCompletionWeights::seeded(1, small_plan());
        let pair = FlowPair::new(FlowField::zeros(16, 16), FlowField::zeros(16, 16)).unwrap();
        assert!(complete_flow_recurrent(std::slice::from_ref(&pair), &[], &w).is_err());
        let odd = FlowPair::new(FlowField::zeros(12, 16), FlowField::zeros(12, 16)).unwrap();
        assert!(complete_flow_recurrent(&[odd], &[MaskFrame::full(12, 16)], &w).is_err());
    }

    #[test]
    fn single_frame_uses_lone_decoder_output() {
        let w = FlowCompletionWeights::seeded(5, small_plan());
        let flow = FlowField::from_fn(16, 24, |y, x| ((x + y) as f64 * 0.05, 1.0));
        let mask = MaskFrame::from_fn(16, 24, |y, x| (4..10).contains(&y) && (6..14).contains(&x));
        let pair = FlowPair::new(flow.clone(), flow.clone()).unwrap();
        let out = complete_flow_recurrent(&[pair], std::slice::from_ref(&mask), &w).unwrap();
        let decoded = w.decode(&w.encode(&flow, &mask).unwrap()).unwrap();
        for y in 0..16 {
            for x in 0..24 {
                let expect = if mask.get(y, x) {
                    (decoded.get(y, x, 0), decoded.get(y, x, 1))
                } else {
                    (flow.u(y, x), flow.v(y, x))
                };
                assert_eq!((out[0].forward.u(y, x), out[0].forward.v(y, x)), expect);
            }
        }
    }
}

//! Dual-domain propagation.
//!
//! Image domain: hole pixels of frame `t` are replaced by the neighbour warped
//! along the completed flow wherever the reliable area holds,
//! `X̂_t = W(X_{t±1}, F̂) · A_r + X_t · (1 − A_r)`, restricted to the hole.
//!
//! Feature domain: features of the neighbour are aligned with a deformable
//! convolution whose offsets are the 8×-downsampled flow plus a predicted
//! residual, then fused with the current features.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{shape_err, Error, Result};
use crate::flow::{flow_consistency, fuse, FlowPair, FLOW_FEATURE_STRIDE};
use crate::kernels::{
    conv2d, deformable_conv, leaky_relu, sample_into, warp, BinaryMap, ConvWeights, FeatureMap, FlowField, Frame,
    MaskFrame, OffsetField,
};
use crate::tensorfile::TensorFile;

/// Pixels whose warped neighbour content is trusted (`true` = reliable).
pub type ReliableArea = BinaryMap;

/// Frames, their remaining holes and (optionally) their encoded features.
#[derive(Clone, Debug, PartialEq)]
pub struct PropagationState {
    pub frames: Vec<Frame>,
    pub masks: Vec<MaskFrame>,
    pub features: Vec<FeatureMap>,
}

impl PropagationState {
    pub fn new(frames: Vec<Frame>, masks: Vec<MaskFrame>) -> Result<Self> {
        if frames.len() != masks.len() {
            return Err(Error::CountMismatch {
                frames: frames.len(),
                masks: masks.len(),
            });
        }
        if let Some(first) = frames.first() {
            for (f, m) in frames.iter().zip(&masks) {
                if f.dims() != first.dims() || m.height() != f.height() || m.width() != f.width() {
                    return Err(shape_err(
                        "PropagationState",
                        format!("{:?}", first.dims()),
                        format!("{:?} / mask {}x{}", f.dims(), m.height(), m.width()),
                    ));
                }
            }
        }
        Ok(Self {
            frames,
            masks,
            features: Vec::new(),
        })
    }

    pub fn with_features(mut self, features: Vec<FeatureMap>) -> Result<Self> {
        if features.len() != self.frames.len() {
            return Err(shape_err(
                "PropagationState features",
                self.frames.len(),
                features.len(),
            ));
        }
        self.features = features;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Pixels still to be filled, over all frames.
    pub fn remaining_hole_pixels(&self) -> usize {
        self.masks.iter().map(MaskFrame::count).sum()
    }
}

/// `A_r(p)` = forward–backward consistent at `p` AND the rounded warp
/// endpoint `p + forward(p)` lies inside the frame on a known pixel.
pub fn compute_reliable_area(pair: &FlowPair, known_src: &BinaryMap, eps: f64) -> Result<ReliableArea> {
    let (h, w) = (pair.height(), pair.width());
    if known_src.height() != h || known_src.width() != w {
        return Err(shape_err(
            "compute_reliable_area",
            format!("{h}x{w}"),
            format!("{}x{}", known_src.height(), known_src.width()),
        ));
    }
    let consistent = flow_consistency(pair, eps)?;
    Ok(BinaryMap::from_fn(h, w, |y, x| {
        if !consistent.get(y, x) {
            return false;
        }
        let ey = (y as f64 + pair.forward.v(y, x)).round();
        let ex = (x as f64 + pair.forward.u(y, x)).round();
        if ey < 0.0 || ex < 0.0 || ey >= h as f64 || ex >= w as f64 {
            return false;
        }
        known_src.get(ey as usize, ex as usize)
    }))
}

/// Fills `target`'s hole from `source` along `pair.forward` (defined on the
/// target frame). Returns the number of pixels filled.
fn fill_from(
    target: &mut Frame,
    target_mask: &mut MaskFrame,
    source: &Frame,
    source_mask: &MaskFrame,
    pair: &FlowPair,
    eps: f64,
) -> Result<usize> {
    if target_mask.is_clear() {
        return Ok(0);
    }
    let reliable = compute_reliable_area(pair, &source_mask.invert(), eps)?;
    let mut filled = 0;
    let mut px = vec![0.0; source.channels()];
    for y in 0..target.height() {
        for x in 0..target.width() {
            if target_mask.get(y, x) && reliable.get(y, x) {
                let sy = y as f64 + pair.forward.v(y, x);
                let sx = x as f64 + pair.forward.u(y, x);
                sample_into(source, sy, sx, &mut px);
                target.pixel_mut(y, x).copy_from_slice(&px);
                target_mask.set(y, x, false);
                filled += 1;
            }
        }
    }
    Ok(filled)
}

/// Fills a single target frame from an arbitrary source frame (used for
/// global reference frames). `pair.forward` maps target → source.
pub fn fill_from_source(
    target: &Frame,
    target_mask: &MaskFrame,
    source: &Frame,
    source_mask: &MaskFrame,
    pair: &FlowPair,
    eps: f64,
) -> Result<(Frame, MaskFrame)> {
    if target.dims() != source.dims() || !target_mask.same_dims(source_mask) {
        return Err(shape_err(
            "fill_from_source",
            format!("{:?}", target.dims()),
            format!("{:?}", source.dims()),
        ));
    }
    let (mut frame, mut mask) = (target.clone(), target_mask.clone());
    fill_from(&mut frame, &mut mask, source, source_mask, pair, eps)?;
    Ok((frame, mask))
}

/// One backward sweep (`t = n-2 … 0`, pulling from `t+1`) followed by one
/// forward sweep (`t = 1 … n-1`, pulling from `t-1`). `completed_flows[t]`
/// links frames `t` and `t+1`. Only hole pixels change, and filled pixels
/// leave the hole mask.
pub fn propagate_image(state: &PropagationState, completed_flows: &[FlowPair], eps: f64) -> Result<PropagationState> {
    let n = state.len();
    if n <= 1 {
        return Ok(state.clone());
    }
    if completed_flows.len() != n - 1 {
        return Err(shape_err("propagate_image flows", n - 1, completed_flows.len()));
    }
    let (h, w) = (state.frames[0].height(), state.frames[0].width());
    if let Some(p) = completed_flows.iter().find(|p| p.height() != h || p.width() != w) {
        return Err(shape_err(
            "propagate_image flow dims",
            format!("{h}x{w}"),
            format!("{}x{}", p.height(), p.width()),
        ));
    }
    let mut out = state.clone();
    for t in (0..n - 1).rev() {
        let (head, tail) = out.frames.split_at_mut(t + 1);
        let (mhead, mtail) = out.masks.split_at_mut(t + 1);
        fill_from(
            &mut head[t],
            &mut mhead[t],
            &tail[0],
            &mtail[0],
            &completed_flows[t],
            eps,
        )?;
    }
    for t in 1..n {
        let (head, tail) = out.frames.split_at_mut(t);
        let (mhead, mtail) = out.masks.split_at_mut(t);
        let pair = completed_flows[t - 1].reversed();
        fill_from(&mut tail[0], &mut mtail[0], &head[t - 1], &mhead[t - 1], &pair, eps)?;
    }
    Ok(out)
}

/// Parameters of flow-guided deformable feature alignment.
///
/// The residual-offset predictor sees `[current, warp(propagated, F↓), F↓, M↓]`
/// (`2C + 3` channels) and emits `3·taps` channels: residual offsets and raw
/// modulation.
#[derive(Clone, Debug, PartialEq)]
pub struct FeaturePropagationWeights {
    pub offset_predictor: [ConvWeights; 2],
    pub alignment: ConvWeights,
    pub fusion: [ConvWeights; 2],
}

impl FeaturePropagationWeights {
    pub fn seeded(seed: u64, channels: usize, kernel: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = channels;
        let mut conv = |o, i, k| ConvWeights::random(&mut rng, o, i, k, k);
        Self {
            offset_predictor: [conv(c, 2 * c + 3, 3), conv(3 * kernel * kernel, c, 3)],
            alignment: conv(c, c, kernel),
            fusion: [conv(c, 2 * c, 3), conv(c, c, 3)],
        }
    }

    /// Weights whose predictor and fusion are all zero and whose alignment
    /// kernel is `alignment`. Residual offsets are then zero, modulation is
    /// 0.5 and fusion returns the current features.
    pub fn passthrough(channels: usize, alignment: ConvWeights) -> Self {
        let c = channels;
        let taps = alignment.taps();
        Self {
            offset_predictor: [
                ConvWeights::zeros(c, 2 * c + 3, 3, 3),
                ConvWeights::zeros(3 * taps, c, 3, 3),
            ],
            alignment,
            fusion: [ConvWeights::zeros(c, 2 * c, 3, 3), ConvWeights::zeros(c, c, 3, 3)],
        }
    }

    pub fn channels(&self) -> usize {
        self.alignment.out_channels()
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.channels();
        let checks = [
            ("feature alignment input", c, self.alignment.in_channels()),
            (
                "feature offset input",
                2 * c + 3,
                self.offset_predictor[0].in_channels(),
            ),
            (
                "feature offset hidden",
                self.offset_predictor[0].out_channels(),
                self.offset_predictor[1].in_channels(),
            ),
            (
                "feature offset output",
                3 * self.alignment.taps(),
                self.offset_predictor[1].out_channels(),
            ),
            ("feature fusion input", 2 * c, self.fusion[0].in_channels()),
            (
                "feature fusion hidden",
                self.fusion[0].out_channels(),
                self.fusion[1].in_channels(),
            ),
            ("feature fusion output", c, self.fusion[1].out_channels()),
        ];
        for (ctx, expected, actual) in checks {
            if expected != actual {
                return Err(shape_err(ctx, expected, actual));
            }
        }
        Ok(())
    }

    pub fn write_tensors(&self, file: &mut TensorFile, prefix: &str) {
        for (i, c) in self.offset_predictor.iter().enumerate() {
            file.insert_conv(&format!("{prefix}.offset.{i}"), c);
        }
        file.insert_conv(&format!("{prefix}.align"), &self.alignment);
        for (i, c) in self.fusion.iter().enumerate() {
            file.insert_conv(&format!("{prefix}.fusion.{i}"), c);
        }
    }

    pub fn read_tensors(file: &TensorFile, prefix: &str) -> Result<Self> {
        let w = Self {
            offset_predictor: [
                file.conv(&format!("{prefix}.offset.0"))?,
                file.conv(&format!("{prefix}.offset.1"))?,
            ],
            alignment: file.conv(&format!("{prefix}.align"))?,
            fusion: [
                file.conv(&format!("{prefix}.fusion.0"))?,
                file.conv(&format!("{prefix}.fusion.1"))?,
            ],
        };
        w.validate().map_err(|e| Error::Weights(e.to_string()))?;
        Ok(w)
    }

    /// Aligns `propagated` onto the current frame and fuses the two.
    pub fn step(
        &self,
        propagated: &FeatureMap,
        current: &FeatureMap,
        flow_ds: &FlowField,
        mask_ds: &MaskFrame,
    ) -> Result<FeatureMap> {
        let warped = warp(propagated, flow_ds)?;
        let cond = FeatureMap::concat_channels(&[current, &warped, flow_ds.as_map(), &mask_ds.to_feature_map()])?;
        let mut hidden = conv2d(&cond, &self.offset_predictor[0])?;
        hidden.map_inplace(leaky_relu);
        let pred = conv2d(&hidden, &self.offset_predictor[1])?;
        let residual = OffsetField::from_prediction(&pred, self.alignment.taps())?;
        let aligned = align_features(propagated, flow_ds, &residual, &self.alignment)?;
        fuse(&self.fusion, &aligned, current)
    }
}

/// Deformable alignment with total offset = downsampled flow + residual.
pub fn align_features(
    propagated: &FeatureMap,
    flow_ds: &FlowField,
    residual: &OffsetField,
    alignment: &ConvWeights,
) -> Result<FeatureMap> {
    deformable_conv(propagated, &residual.add_flow(flow_ds)?, alignment)
}

/// Bidirectional flow-guided feature propagation.
///
/// `state.features` must sit at 1/8 of the frame resolution;
/// `completed_flows` and `masks` are at frame resolution and are reduced
/// here (flows block-averaged with magnitudes divided by 8, masks by
/// any-pixel pooling).
pub fn propagate_features(
    state: &PropagationState,
    completed_flows: &[FlowPair],
    masks: &[MaskFrame],
    w: &FeaturePropagationWeights,
) -> Result<PropagationState> {
    w.validate()?;
    let n = state.len();
    if state.features.len() != n || masks.len() != n {
        return Err(shape_err(
            "propagate_features lengths",
            n,
            format!("{} features / {} masks", state.features.len(), masks.len()),
        ));
    }
    if n == 0 {
        return Ok(state.clone());
    }
    if completed_flows.len() + 1 != n {
        return Err(shape_err("propagate_features flows", n - 1, completed_flows.len()));
    }
    let (fh, fw) = (state.frames[0].height(), state.frames[0].width());
    let (eh, ew) = (fh.div_ceil(FLOW_FEATURE_STRIDE), fw.div_ceil(FLOW_FEATURE_STRIDE));
    for f in &state.features {
        if f.height() != eh || f.width() != ew || f.channels() != w.channels() {
            return Err(shape_err(
                "propagate_features resolution",
                format!("{eh}x{ew}x{}", w.channels()),
                format!("{:?}", f.dims()),
            ));
        }
    }
    let masks_ds: Vec<MaskFrame> = masks.iter().map(|m| m.downsample_any(FLOW_FEATURE_STRIDE)).collect();
    let fwd_ds: Vec<FlowField> = completed_flows
        .iter()
        .map(|p| p.forward.downsample(FLOW_FEATURE_STRIDE))
        .collect();
    let bwd_ds: Vec<FlowField> = completed_flows
        .iter()
        .map(|p| p.backward.downsample(FLOW_FEATURE_STRIDE))
        .collect();

    let feats = &state.features;
    let mut backward = feats.clone();
    for t in (0..n - 1).rev() {
        backward[t] = w.step(&backward[t + 1], &feats[t], &fwd_ds[t], &masks_ds[t])?;
    }
    let mut forward = backward.clone();
    for t in 1..n {
        forward[t] = w.step(&forward[t - 1], &backward[t], &bwd_ds[t - 1], &masks_ds[t])?;
    }
    let mut out = state.clone();
    out.features = forward;
    Ok(out)
}

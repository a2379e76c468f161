//! Chunked inpainting over a budgeted frame store.

use std::sync::Arc;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::flow::{
    complete_flow_harmonic, complete_flow_recurrent, harmonic_fill, FlowPair, HarmonicOptions, LucasKanade,
    FLOW_FEATURE_STRIDE,
};
use crate::kernels::{FlowField, Frame, MaskFrame};
use crate::msvt::{count_attended_tokens, msvt_stack, MsvtConfig};
use crate::neural::NeuralWeights;
use crate::propagation::{fill_from_source, propagate_features, propagate_image, PropagationState};

use super::config::{Mode, SceneConfig};
use super::plan::{plan_chunks, ChunkGroup, ChunkPlan};
use super::residency::{Backing, FrameStore, ResidencyTracker, Resident};

/// Dense flow between two frames of a sequence.
pub trait FlowSource: Send + Sync {
    /// Flow on frame `from` pointing into frame `to`: `a(p) ≈ b(p + flow(p))`.
    fn flow(&self, from: usize, to: usize, a: &Frame, b: &Frame) -> Result<FlowField>;

    /// Distance from a hole within which estimates may be contaminated by
    /// the hole's content.
    fn support_radius(&self, _height: usize, _width: usize) -> usize {
        0
    }
}

impl FlowSource for LucasKanade {
    fn flow(&self, _from: usize, _to: usize, a: &Frame, b: &Frame) -> Result<FlowField> {
        self.estimate(a, b)
    }

    fn support_radius(&self, height: usize, width: usize) -> usize {
        LucasKanade::support_radius(self, height, width)
    }
}

/// Wall time per stage.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StageTimings {
    pub flow_estimation: Duration,
    pub flow_completion: Duration,
    pub propagation: Duration,
    pub references: Duration,
    pub neural: Duration,
    pub residual_fill: Duration,
}

impl StageTimings {
    pub fn entries(&self) -> [(&'static str, Duration); 6] {
        [
            ("flow_estimation", self.flow_estimation),
            ("flow_completion", self.flow_completion),
            ("propagation", self.propagation),
            ("references", self.references),
            ("neural", self.neural),
            ("residual_fill", self.residual_fill),
        ]
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct InpaintStats {
    pub frames: usize,
    pub chunks: usize,
    /// Calls into flow completion (one per chunk or reference with holes).
    pub flow_completions: usize,
    pub peak_resident_frames: usize,
    pub residency_budget: usize,
    /// Query tokens inside mask-touching windows, over all frames.
    pub attended_tokens: usize,
    pub total_tokens: usize,
    /// Pixels left for the residual fill after propagation.
    pub residual_pixels: usize,
    #[serde(skip)]
    pub timings: StageTimings,
}

impl InpaintStats {
    pub fn attended_token_ratio(&self) -> f64 {
        if self.total_tokens == 0 {
            0.0
        } else {
            self.attended_tokens as f64 / self.total_tokens as f64
        }
    }
}

/// Harmonic fill of whatever is still masked; unmasked pixels untouched.
pub fn residual_fill(frame: &Frame, mask: &MaskFrame) -> Result<Frame> {
    harmonic_fill(frame, mask, HarmonicOptions::default())
}

fn timed<T>(slot: &mut Duration, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let out = f();
    *slot += start.elapsed();
    out
}

/// Inpainting engine: configuration, optional learned weights and the flow
/// estimator.
#[derive(Clone)]
pub struct Inpainter {
    cfg: SceneConfig,
    weights: Option<Arc<NeuralWeights>>,
    flow_source: Arc<dyn FlowSource>,
}

impl std::fmt::Debug for Inpainter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Inpainter")
            .field("cfg", &self.cfg)
            .field("weights", &self.weights.is_some())
            .finish_non_exhaustive()
    }
}

impl Inpainter {
    /// Validates `cfg` and loads weights from `cfg.weights_path` if set.
    pub fn new(cfg: SceneConfig) -> Result<Self> {
        cfg.validate()?;
        let weights = match &cfg.weights_path {
            Some(p) => Some(Arc::new(NeuralWeights::load(p)?)),
            None => None,
        };
        Ok(Self {
            cfg,
            weights,
            flow_source: Arc::new(LucasKanade::default()),
        })
    }

    pub fn with_weights(mut self, weights: NeuralWeights) -> Result<Self> {
        weights.validate()?;
        self.weights = Some(Arc::new(weights));
        Ok(self)
    }

    /// Replaces the flow estimator, e.g. with exact synthetic flows.
    pub fn with_flow_source(mut self, source: impl FlowSource + 'static) -> Self {
        self.flow_source = Arc::new(source);
        self
    }

    pub fn config(&self) -> &SceneConfig {
        &self.cfg
    }

    fn neural(&self) -> Result<Option<&NeuralWeights>> {
        match self.cfg.mode {
            Mode::Classical => Ok(None),
            Mode::Neural => self
                .weights
                .as_deref()
                .map(Some)
                .ok_or_else(|| Error::Weights("neural mode needs a weights file".into())),
        }
    }

    fn msvt_config(&self) -> MsvtConfig {
        self.weights.as_ref().map(|w| w.msvt_config).unwrap_or_default()
    }

    /// Budget for `plan`: the configured one or the plan's bound. One local
    /// window plus two transient frames must fit.
    pub fn budget(&self, plan: &ChunkPlan) -> Result<usize> {
        let budget = self.cfg.budget.unwrap_or_else(|| plan.residency_bound());
        let required = plan.max_locals() + 2;
        if budget < required {
            return Err(Error::Budget { budget, required });
        }
        Ok(budget)
    }

    /// Stores a preprocessed frame and accounts its attention tokens.
    pub fn ingest(
        &self,
        store: &mut FrameStore,
        index: usize,
        frame: &Frame,
        mask: &MaskFrame,
        stats: &mut InpaintStats,
    ) -> Result<()> {
        let ds = mask.downsample_any(FLOW_FEATURE_STRIDE);
        stats.attended_tokens += count_attended_tokens(std::slice::from_ref(&ds), &self.msvt_config())?;
        stats.total_tokens += ds.height() * ds.width();
        store.store(index, frame, mask)
    }

    /// Inpaints an in-memory preprocessed sequence.
    pub fn inpaint(&self, frames: Vec<Frame>, masks: Vec<MaskFrame>) -> Result<(Vec<Frame>, InpaintStats)> {
        let state = PropagationState::new(frames, masks)?;
        let n = state.len();
        if n == 0 {
            return Ok((Vec::new(), InpaintStats::default()));
        }
        let plan = plan_chunks(n, &self.cfg);
        let tracker = ResidencyTracker::new(self.budget(&plan)?);
        let mut store = FrameStore::new(Backing::memory(n), tracker);
        let mut stats = InpaintStats::default();
        for (i, (f, m)) in state.frames.iter().zip(&state.masks).enumerate() {
            self.ingest(&mut store, i, f, m, &mut stats)?;
        }
        drop(state);
        let mut out: Vec<Option<Frame>> = vec![None; n];
        self.process(&mut store, &plan, &mut stats, |_, t, r| {
            out[t] = Some(r.frame);
            Ok(())
        })?;
        let frames = out
            .into_iter()
            .map(|f| f.ok_or_else(|| Error::InvalidArgument("frame not emitted".into())))
            .collect::<Result<_>>()?;
        Ok((frames, stats))
    }

    /// Runs every chunk of `plan` over `store` and hands each finished frame
    /// to `emit` in order.
    pub fn process(
        &self,
        store: &mut FrameStore,
        plan: &ChunkPlan,
        stats: &mut InpaintStats,
        mut emit: impl FnMut(&mut FrameStore, usize, Resident) -> Result<()>,
    ) -> Result<()> {
        let neural = self.neural()?;
        if store.len() != plan.len() {
            return Err(Error::InvalidArgument(format!(
                "store holds {} frames, plan covers {}",
                store.len(),
                plan.len()
            )));
        }
        stats.frames = plan.len();
        stats.residency_budget = store.tracker().budget();
        for group in plan.groups() {
            stats.chunks += 1;
            self.process_group(store, &group, neural, stats, &mut emit)?;
        }
        store.flush()?;
        stats.peak_resident_frames = store.tracker().peak();
        Ok(())
    }

    fn process_group(
        &self,
        store: &mut FrameStore,
        group: &ChunkGroup,
        neural: Option<&NeuralWeights>,
        stats: &mut InpaintStats,
        emit: &mut impl FnMut(&mut FrameStore, usize, Resident) -> Result<()>,
    ) -> Result<()> {
        let l0 = group.locals.start;
        store.retain(|i| group.locals.contains(&i))?;
        let mut work = group
            .locals
            .clone()
            .map(|i| store.take(i))
            .collect::<Result<Vec<_>>>()?;
        let has_holes = |work: &[Resident]| group.outputs.clone().any(|t| !work[t - l0].mask.is_clear());

        let mut local_flows = Vec::new();
        let mut dirty = false;
        if has_holes(&work) {
            dirty = true;
            local_flows = self.local_flows(&work, l0, neural, stats)?;
            let state = PropagationState::new(
                work.iter().map(|r| r.frame.clone()).collect(),
                work.iter().map(|r| r.mask.clone()).collect(),
            )?;
            let filled = timed(&mut stats.timings.propagation, || {
                propagate_image(&state, &local_flows, self.cfg.eps_flow)
            })?;
            for ((r, f), m) in work.iter_mut().zip(filled.frames).zip(filled.masks) {
                r.frame = f;
                r.mask = m;
            }
            if has_holes(&work) {
                self.fill_from_references(store, group, &mut work, neural, stats)?;
            }
        }

        let decoded = match neural {
            Some(w) if has_holes(&work) => {
                let start = Instant::now();
                let d = self.neural_decode(w, &work, &local_flows, group)?;
                stats.timings.neural += start.elapsed();
                Some(d)
            }
            _ => None,
        };

        for t in group.outputs.clone() {
            let r = &work[t - l0];
            let mut frame = r.frame.clone();
            if let Some(d) = &decoded {
                let c = frame.channels();
                let dec = &d[t - group.outputs.start];
                for (i, (dst, src)) in frame
                    .data_mut()
                    .chunks_exact_mut(c)
                    .zip(dec.data().chunks_exact(c))
                    .enumerate()
                {
                    if r.mask.data()[i] {
                        dst.copy_from_slice(src);
                    }
                }
            } else if !r.mask.is_clear() {
                stats.residual_pixels += r.mask.count();
                frame = timed(&mut stats.timings.residual_fill, || residual_fill(&frame, &r.mask))?;
            }
            let ticket = store.transient()?;
            let out = Resident::new(frame, MaskFrame::empty(r.mask.height(), r.mask.width()), ticket);
            emit(store, t, out)?;
        }
        for (k, r) in work.into_iter().enumerate() {
            store.put(l0 + k, r, dirty);
        }
        Ok(())
    }

    /// Completion mask for a pair: both holes, widened by the estimator's
    /// support so contaminated estimates are replaced too.
    fn completion_mask(&self, a: &MaskFrame, b: &MaskFrame) -> Result<MaskFrame> {
        let radius = self.flow_source.support_radius(a.height(), a.width());
        Ok(a.union(b)?.dilate(radius))
    }

    /// Estimates and completes flows between consecutive frames of `work`.
    fn local_flows(
        &self,
        work: &[Resident],
        l0: usize,
        neural: Option<&NeuralWeights>,
        stats: &mut InpaintStats,
    ) -> Result<Vec<FlowPair>> {
        if work.len() < 2 {
            return Ok(Vec::new());
        }
        let raw = timed(&mut stats.timings.flow_estimation, || {
            (0..work.len() - 1)
                .into_par_iter()
                .map(|k| self.estimate_pair(l0 + k, l0 + k + 1, &work[k].frame, &work[k + 1].frame))
                .collect::<Result<Vec<_>>>()
        })?;
        let masks = (0..work.len() - 1)
            .map(|k| self.completion_mask(&work[k].mask, &work[k + 1].mask))
            .collect::<Result<Vec<_>>>()?;
        stats.flow_completions += 1;
        timed(&mut stats.timings.flow_completion, || {
            self.complete(raw, &masks, neural)
        })
    }

    fn estimate_pair(&self, i: usize, j: usize, a: &Frame, b: &Frame) -> Result<FlowPair> {
        let (forward, backward) = rayon::join(
            || self.flow_source.flow(i, j, a, b),
            || self.flow_source.flow(j, i, b, a),
        );
        FlowPair::new(forward?, backward?)
    }

    fn complete(
        &self,
        flows: Vec<FlowPair>,
        masks: &[MaskFrame],
        neural: Option<&NeuralWeights>,
    ) -> Result<Vec<FlowPair>> {
        if let Some(w) = neural {
            return complete_flow_recurrent(&flows, masks, &w.flow);
        }
        flows
            .into_par_iter()
            .zip(masks.par_iter())
            .map(|(pair, mask)| {
                if mask.is_clear() {
                    return Ok(pair);
                }
                if mask.is_full() {
                    let (h, w) = (mask.height(), mask.width());
                    return FlowPair::new(FlowField::zeros(h, w), FlowField::zeros(h, w));
                }
                let (f, b) = rayon::join(
                    || complete_flow_harmonic(&pair.forward, mask),
                    || complete_flow_harmonic(&pair.backward, mask),
                );
                FlowPair::new(f?, b?)
            })
            .collect()
    }

    /// Pulls content from global references, nearest first, into the output
    /// frames that still have holes. One reference is resident at a time.
    fn fill_from_references(
        &self,
        store: &mut FrameStore,
        group: &ChunkGroup,
        work: &mut [Resident],
        neural: Option<&NeuralWeights>,
        stats: &mut InpaintStats,
    ) -> Result<()> {
        let start = Instant::now();
        let l0 = group.locals.start;
        let centre = (group.outputs.start + group.outputs.end) / 2;
        let mut refs = group.references.clone();
        refs.sort_by_key(|&r| (r.abs_diff(centre), r));
        for r in refs {
            let pending: Vec<usize> = group
                .outputs
                .clone()
                .filter(|&t| !work[t - l0].mask.is_clear())
                .collect();
            if pending.is_empty() {
                break;
            }
            let reference = store.take(r)?;
            stats.flow_completions += 1;
            let results = pending
                .par_iter()
                .map(|&t| {
                    let target = &work[t - l0];
                    let pair = self.estimate_pair(t, r, &target.frame, &reference.frame)?;
                    let mask = self.completion_mask(&target.mask, &reference.mask)?;
                    let pair = self
                        .complete(vec![pair], std::slice::from_ref(&mask), neural)?
                        .remove(0);
                    fill_from_source(
                        &target.frame,
                        &target.mask,
                        &reference.frame,
                        &reference.mask,
                        &pair,
                        self.cfg.eps_flow,
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            for (t, (f, m)) in pending.into_iter().zip(results) {
                work[t - l0].frame = f;
                work[t - l0].mask = m;
            }
        }
        stats.timings.references += start.elapsed();
        Ok(())
    }

    /// Encodes the local window with holes zeroed, propagates features along
    /// the completed flows, applies the transformer blocks and decodes the
    /// output frames.
    fn neural_decode(
        &self,
        w: &NeuralWeights,
        work: &[Resident],
        flows: &[FlowPair],
        group: &ChunkGroup,
    ) -> Result<Vec<Frame>> {
        let (h, wd) = (work[0].frame.height(), work[0].frame.width());
        if h % FLOW_FEATURE_STRIDE != 0 || wd % FLOW_FEATURE_STRIDE != 0 {
            return Err(Error::InvalidArgument(format!(
                "neural mode needs dims divisible by 8, got {h}x{wd}"
            )));
        }
        let features = work
            .par_iter()
            .map(|r| {
                let mut zeroed = r.frame.clone();
                let c = zeroed.channels();
                for (i, px) in zeroed.data_mut().chunks_exact_mut(c).enumerate() {
                    if r.mask.data()[i] {
                        px.fill(0.0);
                    }
                }
                w.encoder.encode(&zeroed)
            })
            .collect::<Result<Vec<_>>>()?;
        let masks: Vec<MaskFrame> = work.iter().map(|r| r.mask.clone()).collect();
        let state = PropagationState::new(work.iter().map(|r| r.frame.clone()).collect(), masks.clone())?
            .with_features(features)?;
        let propagated = propagate_features(&state, flows, &masks, &w.features)?;
        let masks_ds: Vec<MaskFrame> = masks.iter().map(|m| m.downsample_any(FLOW_FEATURE_STRIDE)).collect();
        let attended = msvt_stack(&propagated.features, &masks_ds, &w.msvt, &w.msvt_config)?;
        let l0 = group.locals.start;
        group
            .outputs
            .clone()
            .into_par_iter()
            .map(|t| w.decoder.decode(&attended[t - l0]))
            .collect()
    }
}

/// Inpaints a preprocessed sequence with `cfg`.
pub fn inpaint_sequence(frames: Vec<Frame>, masks: Vec<MaskFrame>, cfg: &SceneConfig) -> Result<Vec<Frame>> {
    Ok(Inpainter::new(cfg.clone())?.inpaint(frames, masks)?.0)
}

//! Streaming directory-to-directory inpainting.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use crate::error::Result;

use super::config::SceneConfig;
use super::engine::{InpaintStats, Inpainter};
use super::io::{frame_file_name, probe_dims, write_frame, SceneFiles};
use super::plan::plan_chunks;
use super::preprocess::{postprocess_frame, preprocess_frame, preprocess_mask, PreprocessRecord};
use super::report::RunReport;
use super::residency::{Backing, FrameStore, ResidencyTracker};

#[derive(Clone, Debug)]
pub struct InpaintRequest {
    pub frames_dir: PathBuf,
    pub masks_dir: PathBuf,
    pub out_dir: PathBuf,
    /// Defaults to `report.json` in `out_dir`.
    pub report_path: Option<PathBuf>,
    pub cfg: SceneConfig,
}

impl InpaintRequest {
    pub fn report_path(&self) -> PathBuf {
        self.report_path
            .clone()
            .unwrap_or_else(|| self.out_dir.join("report.json"))
    }
}

/// Runs with the default flow estimator.
pub fn run_inpaint(req: &InpaintRequest) -> Result<RunReport> {
    run_inpaint_with(req, &Inpainter::new(req.cfg.clone())?)
}

/// Decodes frames one at a time into a disk-backed store, inpaints chunk by
/// chunk and writes each finished frame, restored to the input resolution
/// and composited over the original, as soon as it is done.
pub fn run_inpaint_with(req: &InpaintRequest, inpainter: &Inpainter) -> Result<RunReport> {
    let total = Instant::now();
    let cfg = inpainter.config();
    let files = SceneFiles::discover(&req.frames_dir, &req.masks_dir)?;
    let dims = probe_dims(&files.frames[0])?;
    let rec = PreprocessRecord::new(dims.0, dims.1, cfg.scale_factor)?;
    let plan = plan_chunks(files.len(), cfg);
    let tracker = ResidencyTracker::new(inpainter.budget(&plan)?);
    let mut store = FrameStore::new(Backing::disk(files.len())?, tracker);
    std::fs::create_dir_all(&req.out_dir)?;

    let mut stats = InpaintStats::default();
    let ingest = Instant::now();
    for i in 0..files.len() {
        let _decoded = store.transient()?;
        let (frame, mask) = files.read(i, dims)?;
        let _processed = store.transient()?;
        let f = preprocess_frame(&frame, &rec)?;
        let m = preprocess_mask(&mask, &rec, cfg.dilation_radius)?;
        inpainter.ingest(&mut store, i, &f, &m, &mut stats)?;
    }
    let ingest = ingest.elapsed();

    let mut post = Duration::ZERO;
    inpainter.process(&mut store, &plan, &mut stats, |store, t, inpainted| {
        let start = Instant::now();
        let _original = store.transient()?;
        let (frame, mask) = files.read(t, dims)?;
        let out = postprocess_frame(&inpainted.frame, &frame, &mask, &rec)?;
        write_frame(&req.out_dir.join(frame_file_name(t)), &out)?;
        post += start.elapsed();
        Ok(())
    })?;

    let report = RunReport::new(
        cfg.mode,
        &rec,
        &stats,
        plan.residency_bound(),
        &[("ingest", ingest), ("postprocess", post), ("total", total.elapsed())],
    );
    report.save(&req.report_path())?;
    Ok(report)
}

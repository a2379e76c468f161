use std::collections::BTreeMap;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::Result;

use super::config::Mode;
use super::engine::InpaintStats;
use super::preprocess::PreprocessRecord;

/// Summary of one `inpaint` run, written as JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub frames: usize,
    pub mode: Mode,
    /// `[height, width]` of the input frames.
    pub original_dims: [usize; 2],
    /// `[height, width]` after scaling and padding.
    pub processed_dims: [usize; 2],
    pub chunks: usize,
    pub flow_completions: usize,
    pub residual_pixels: usize,
    pub peak_resident_frames: usize,
    pub residency_budget: usize,
    /// `neighbor_count + |references| + 2`.
    pub residency_bound: usize,
    pub attended_tokens: usize,
    pub total_tokens: usize,
    pub attended_token_ratio: f64,
    pub timings_ms: BTreeMap<String, f64>,
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

impl RunReport {
    pub fn new(
        mode: Mode,
        rec: &PreprocessRecord,
        stats: &InpaintStats,
        residency_bound: usize,
        extra_timings: &[(&str, Duration)],
    ) -> Self {
        let mut timings_ms: BTreeMap<String, f64> = stats
            .timings
            .entries()
            .iter()
            .map(|(k, d)| (k.to_string(), ms(*d)))
            .collect();
        for (k, d) in extra_timings {
            timings_ms.insert(k.to_string(), ms(*d));
        }
        Self {
            frames: stats.frames,
            mode,
            original_dims: [rec.original.0, rec.original.1],
            processed_dims: [rec.padded.0, rec.padded.1],
            chunks: stats.chunks,
            flow_completions: stats.flow_completions,
            residual_pixels: stats.residual_pixels,
            peak_resident_frames: stats.peak_resident_frames,
            residency_budget: stats.residency_budget,
            residency_bound,
            attended_tokens: stats.attended_tokens,
            total_tokens: stats.total_tokens,
            attended_token_ratio: stats.attended_token_ratio(),
            timings_ms,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

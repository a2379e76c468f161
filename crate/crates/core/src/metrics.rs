//! Pixel metrics and the accuracy/consistency aggregation used for ranking.
//!
//! MAE and PSNR are reported on the 8-bit scale. Perceptual scores (FID,
//! LPIPS) are not computed here; their normalised values come from an
//! external JSON file. A-Error and C-Error are weighted sums of normalised,
//! lower-is-better scores.

use std::cmp::Ordering;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::kernels::{Frame, MaskFrame};

/// Reported PSNR when the compared pixels are identical.
pub const PSNR_CAP: f64 = 99.0;

const PEAK: f64 = 255.0;

/// Per-frame partial sums in 8-bit units.
#[derive(Clone, Copy, Debug, Default)]
struct Partial {
    abs: f64,
    sq: f64,
    count: usize,
}

/// Sums in a fixed binary-tree order, independent of thread scheduling.
fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        n => pairwise_sum(&values[..n / 2]) + pairwise_sum(&values[n / 2..]),
    }
}

fn partials(pred: &[Frame], gt: &[Frame], masks: Option<&[MaskFrame]>) -> Result<Partial> {
    if pred.len() != gt.len() {
        return Err(shape_err("metric sequence length", gt.len(), pred.len()));
    }
    if let Some(m) = masks {
        if m.len() != gt.len() {
            return Err(shape_err("metric mask count", gt.len(), m.len()));
        }
    }
    for (i, (p, g)) in pred.iter().zip(gt).enumerate() {
        if p.dims() != g.dims() {
            return Err(shape_err(
                "metric frame dims",
                format!("{:?}", g.dims()),
                format!("{:?} (frame {i})", p.dims()),
            ));
        }
        if let Some(m) = masks.map(|m| &m[i]) {
            if m.height() != g.height() || m.width() != g.width() {
                return Err(shape_err(
                    "metric mask dims",
                    format!("{}x{}", g.height(), g.width()),
                    format!("{}x{}", m.height(), m.width()),
                ));
            }
        }
    }
    let per_frame: Vec<Partial> = (0..pred.len())
        .into_par_iter()
        .map(|i| {
            let (p, g) = (&pred[i], &gt[i]);
            let c = g.channels();
            let mut acc = Partial::default();
            for (px, (a, b)) in p.data().chunks_exact(c).zip(g.data().chunks_exact(c)).enumerate() {
                if masks.is_some_and(|m| !m[i].data()[px]) {
                    continue;
                }
                for (x, y) in a.iter().zip(b) {
                    let d = (x - y) * PEAK;
                    acc.abs += d.abs();
                    acc.sq += d * d;
                }
                acc.count += c;
            }
            acc
        })
        .collect();
    let count: usize = per_frame.iter().map(|p| p.count).sum();
    if count == 0 {
        return Err(Error::Metrics("no pixels selected for evaluation".into()));
    }
    Ok(Partial {
        abs: pairwise_sum(&per_frame.iter().map(|p| p.abs).collect::<Vec<_>>()),
        sq: pairwise_sum(&per_frame.iter().map(|p| p.sq).collect::<Vec<_>>()),
        count,
    })
}

/// Mean absolute error over all channels of the included pixels (the
/// masked ones when `masks` is given), in 8-bit units.
pub fn mae(pred: &[Frame], gt: &[Frame], masks: Option<&[MaskFrame]>) -> Result<f64> {
    let p = partials(pred, gt, masks)?;
    Ok(p.abs / p.count as f64)
}

/// `10·log10(255² / MSE)` over the included pixels, capped at [`PSNR_CAP`].
pub fn psnr(pred: &[Frame], gt: &[Frame], masks: Option<&[MaskFrame]>) -> Result<f64> {
    let p = partials(pred, gt, masks)?;
    Ok(psnr_from_mse(p.sq / p.count as f64))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        return PSNR_CAP;
    }
    (10.0 * (PEAK * PEAK / mse).log10()).min(PSNR_CAP)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawMetrics {
    pub mae: f64,
    pub psnr: f64,
}

/// Challenge-normalised scores, lower is better.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizedScores {
    pub w_mae: f64,
    pub w_psnr: f64,
    pub w_fid: f64,
    pub w_lpips: f64,
}

impl NormalizedScores {
    fn check_finite(&self) -> Result<()> {
        if [self.w_mae, self.w_psnr, self.w_fid, self.w_lpips]
            .iter()
            .all(|v| v.is_finite())
        {
            Ok(())
        } else {
            Err(Error::Metrics("normalised scores must be finite".into()))
        }
    }
}

/// Externally computed scores. `w_fid` and `w_lpips` are required; the
/// pixel-metric normalisations may be supplied too, enabling aggregation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExternalScores {
    pub w_fid: f64,
    pub w_lpips: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_mae: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_psnr: Option<f64>,
}

impl ExternalScores {
    pub fn parse(json: &str) -> Result<Self> {
        let s: ExternalScores = serde_json::from_str(json)?;
        let values = [Some(s.w_fid), Some(s.w_lpips), s.w_mae, s.w_psnr];
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Metrics("external scores must be finite".into()));
        }
        Ok(s)
    }

    /// All four normalised scores, when the file carried them.
    pub fn normalized(&self) -> Option<NormalizedScores> {
        Some(NormalizedScores {
            w_mae: self.w_mae?,
            w_psnr: self.w_psnr?,
            w_fid: self.w_fid,
            w_lpips: self.w_lpips,
        })
    }
}

/// Reads externally computed perceptual scores from a JSON file.
pub fn ingest_external(path: impl AsRef<Path>) -> Result<ExternalScores> {
    ExternalScores::parse(&std::fs::read_to_string(path)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregationWeights {
    pub alpha_mae: f64,
    pub alpha_psnr: f64,
    pub beta_fid: f64,
    pub beta_lpips: f64,
}

impl Default for AggregationWeights {
    fn default() -> Self {
        Self {
            alpha_mae: 0.5,
            alpha_psnr: 0.5,
            beta_fid: 0.5,
            beta_lpips: 0.5,
        }
    }
}

impl AggregationWeights {
    pub fn new(alpha_mae: f64, alpha_psnr: f64, beta_fid: f64, beta_lpips: f64) -> Result<Self> {
        let w = Self {
            alpha_mae,
            alpha_psnr,
            beta_fid,
            beta_lpips,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.alpha_mae, self.alpha_psnr, self.beta_fid, self.beta_lpips];
        if all.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Metrics(format!(
                "aggregation weights must be finite and ≥ 0: {all:?}"
            )));
        }
        for (name, sum) in [
            ("alpha", self.alpha_mae + self.alpha_psnr),
            ("beta", self.beta_fid + self.beta_lpips),
        ] {
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Metrics(format!("{name} weights sum to {sum}, expected 1")));
            }
        }
        Ok(())
    }

    /// Parses `"alpha_mae,alpha_psnr,beta_fid,beta_lpips"`.
    pub fn parse(s: &str) -> Result<Self> {
        let parts = s
            .split(',')
            .map(|p| {
                p.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Metrics(format!("bad weight `{p}`: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let [a, b, c, d] = parts[..] else {
            return Err(Error::Metrics(format!("expected 4 weights, got {}", parts.len())));
        };
        Self::new(a, b, c, d)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub a_error: f64,
    pub c_error: f64,
}

/// `a_error = α_mae·w_mae + α_psnr·w_psnr`, `c_error = β_fid·w_fid + β_lpips·w_lpips`.
pub fn aggregate(norm: &NormalizedScores, w: &AggregationWeights) -> Result<Aggregates> {
    w.validate()?;
    norm.check_finite()?;
    Ok(Aggregates {
        a_error: w.alpha_mae * norm.w_mae + w.alpha_psnr * norm.w_psnr,
        c_error: w.beta_fid * norm.w_fid + w.beta_lpips * norm.w_lpips,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub raw: Option<RawMetrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub normalized: Option<NormalizedScores>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aggregates: Option<Aggregates>,
}

impl MetricReport {
    /// Builds a report; aggregates are present iff normalised scores are.
    pub fn new(
        name: impl Into<String>,
        raw: Option<RawMetrics>,
        normalized: Option<NormalizedScores>,
        weights: &AggregationWeights,
    ) -> Result<Self> {
        if let Some(r) = raw {
            if !r.mae.is_finite() || !r.psnr.is_finite() {
                return Err(Error::Metrics("raw metrics must be finite".into()));
            }
        }
        let aggregates = normalized.as_ref().map(|n| aggregate(n, weights)).transpose()?;
        Ok(Self {
            name: name.into(),
            raw,
            normalized,
            aggregates,
        })
    }
}

/// Indices of `reports` ordered by C-Error, then A-Error, then name.
pub fn rank(reports: &[MetricReport]) -> Result<Vec<usize>> {
    let keys = reports
        .iter()
        .map(|r| {
            r.aggregates
                .map(|a| (a.c_error, a.a_error))
                .ok_or_else(|| Error::Metrics(format!("report `{}` has no aggregates", r.name)))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut order: Vec<usize> = (0..reports.len()).collect();
    order.sort_by(|&i, &j| {
        keys[i]
            .0
            .total_cmp(&keys[j].0)
            .then(keys[i].1.total_cmp(&keys[j].1))
            .then_with(|| reports[i].name.cmp(&reports[j].name))
    });
    Ok(order)
}

/// Scores a directory of predictions against ground truth.
pub fn evaluate_dirs(
    pred_dir: &Path,
    gt_dir: &Path,
    masks_dir: Option<&Path>,
    external: Option<&Path>,
    weights: &AggregationWeights,
) -> Result<MetricReport> {
    use crate::pipeline::io::{list_pngs, read_frame, read_mask};

    let pred_files = list_pngs(pred_dir)?;
    let gt_files = list_pngs(gt_dir)?;
    if pred_files.len() != gt_files.len() {
        return Err(Error::CountMismatch {
            frames: pred_files.len(),
            masks: gt_files.len(),
        });
    }
    let pred = pred_files.iter().map(|p| read_frame(p)).collect::<Result<Vec<_>>>()?;
    let gt = gt_files.iter().map(|p| read_frame(p)).collect::<Result<Vec<_>>>()?;
    let masks = match masks_dir {
        Some(dir) => {
            let files = list_pngs(dir)?;
            if files.len() != gt.len() {
                return Err(Error::CountMismatch {
                    frames: gt.len(),
                    masks: files.len(),
                });
            }
            Some(files.iter().map(|p| read_mask(p)).collect::<Result<Vec<_>>>()?)
        }
        None => None,
    };
    let raw = RawMetrics {
        mae: mae(&pred, &gt, masks.as_deref())?,
        psnr: psnr(&pred, &gt, masks.as_deref())?,
    };
    let normalized = match external {
        Some(p) => ingest_external(p)?.normalized(),
        None => None,
    };
    let name = pred_dir
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "prediction".into());
    MetricReport::new(name, Some(raw), normalized, weights)
}

impl PartialOrd for Aggregates {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(
            self.c_error
                .total_cmp(&other.c_error)
                .then(self.a_error.total_cmp(&other.a_error)),
        )
    }
}

//! Downscaling, padding and mask dilation before processing, and the inverse
//! plus composite-back afterwards.

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::kernels::{sample_into, FeatureMap, Frame, MaskFrame};

use super::config::SceneConfig;

/// Processing dims must be multiples of this.
pub const PAD_MULTIPLE: usize = 8;
/// Smallest accepted scaled dimension.
pub const MIN_DIM: usize = 16;

/// Geometry of one preprocessing pass, enough to invert it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreprocessRecord {
    pub original: (usize, usize),
    pub scaled: (usize, usize),
    /// Scaled dims rounded up to [`PAD_MULTIPLE`]; padding is bottom/right.
    pub padded: (usize, usize),
}

impl PreprocessRecord {
    pub fn new(height: usize, width: usize, scale_factor: f64) -> Result<Self> {
        let sh = (height as f64 * scale_factor).round() as usize;
        let sw = (width as f64 * scale_factor).round() as usize;
        if sh < MIN_DIM || sw < MIN_DIM {
            return Err(Error::InvalidArgument(format!(
                "{height}x{width} at scale {scale_factor} gives {sh}x{sw}, below {MIN_DIM}"
            )));
        }
        Ok(Self {
            original: (height, width),
            scaled: (sh, sw),
            padded: (sh.next_multiple_of(PAD_MULTIPLE), sw.next_multiple_of(PAD_MULTIPLE)),
        })
    }

    pub fn pad(&self) -> (usize, usize) {
        (self.padded.0 - self.scaled.0, self.padded.1 - self.scaled.1)
    }
}

/// Bilinear resize with pixel centres at half-integers and clamped borders.
/// Returns a copy when the dims already match.
pub fn resize_bilinear(src: &FeatureMap, height: usize, width: usize) -> FeatureMap {
    let (h, w, c) = src.dims();
    if (h, w) == (height, width) {
        return src.clone();
    }
    let sy = h as f64 / height as f64;
    let sx = w as f64 / width as f64;
    let mut out = FeatureMap::zeros(height, width, c);
    let mut px = vec![0.0; c];
    for y in 0..height {
        let fy = (y as f64 + 0.5) * sy - 0.5;
        for x in 0..width {
            sample_into(src, fy, (x as f64 + 0.5) * sx - 0.5, &mut px);
            out.pixel_mut(y, x).copy_from_slice(&px);
        }
    }
    out
}

/// Nearest-neighbour resize using the pixel whose centre is closest.
pub fn resize_nearest(mask: &MaskFrame, height: usize, width: usize) -> MaskFrame {
    let (h, w) = (mask.height(), mask.width());
    if (h, w) == (height, width) {
        return mask.clone();
    }
    let pick =
        |i: usize, n_out: usize, n_in: usize| (((i as f64 + 0.5) * n_in as f64 / n_out as f64) as usize).min(n_in - 1);
    MaskFrame::from_fn(height, width, |y, x| mask.get(pick(y, height, h), pick(x, width, w)))
}

pub fn pad_replicate(src: &FeatureMap, height: usize, width: usize) -> FeatureMap {
    let (h, w, c) = src.dims();
    if (h, w) == (height, width) {
        return src.clone();
    }
    FeatureMap::from_fn(height, width, c, |y, x, k| src.get(y.min(h - 1), x.min(w - 1), k))
}

pub fn pad_mask_replicate(mask: &MaskFrame, height: usize, width: usize) -> MaskFrame {
    let (h, w) = (mask.height(), mask.width());
    MaskFrame::from_fn(height, width, |y, x| mask.get(y.min(h - 1), x.min(w - 1)))
}

pub fn preprocess_frame(frame: &Frame, rec: &PreprocessRecord) -> Result<Frame> {
    check_original(rec, frame.height(), frame.width())?;
    let scaled = resize_bilinear(frame, rec.scaled.0, rec.scaled.1);
    Ok(pad_replicate(&scaled, rec.padded.0, rec.padded.1))
}

pub fn preprocess_mask(mask: &MaskFrame, rec: &PreprocessRecord, dilation_radius: usize) -> Result<MaskFrame> {
    check_original(rec, mask.height(), mask.width())?;
    let scaled = resize_nearest(mask, rec.scaled.0, rec.scaled.1);
    Ok(pad_mask_replicate(&scaled, rec.padded.0, rec.padded.1).dilate(dilation_radius))
}

fn check_original(rec: &PreprocessRecord, h: usize, w: usize) -> Result<()> {
    if rec.original != (h, w) {
        return Err(shape_err(
            "preprocess record",
            format!("{}x{}", rec.original.0, rec.original.1),
            format!("{h}x{w}"),
        ));
    }
    Ok(())
}

/// Scales, pads and dilates a whole sequence. All frames must share dims.
pub fn preprocess(
    frames: &[Frame],
    masks: &[MaskFrame],
    cfg: &SceneConfig,
) -> Result<(Vec<Frame>, Vec<MaskFrame>, PreprocessRecord)> {
    cfg.validate()?;
    if frames.len() != masks.len() {
        return Err(Error::CountMismatch {
            frames: frames.len(),
            masks: masks.len(),
        });
    }
    let first = frames
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty sequence".into()))?;
    let rec = PreprocessRecord::new(first.height(), first.width(), cfg.scale_factor)?;
    let f = frames
        .iter()
        .map(|f| preprocess_frame(f, &rec))
        .collect::<Result<_>>()?;
    let m = masks
        .iter()
        .map(|m| preprocess_mask(m, &rec, cfg.dilation_radius))
        .collect::<Result<_>>()?;
    Ok((f, m, rec))
}

/// Crops the padding, resizes back to the original dims and composites:
/// original pixels outside `original_mask`, inpainted content inside.
pub fn postprocess_frame(
    inpainted: &Frame,
    original: &Frame,
    original_mask: &MaskFrame,
    rec: &PreprocessRecord,
) -> Result<Frame> {
    if (inpainted.height(), inpainted.width()) != rec.padded {
        return Err(shape_err(
            "postprocess inpainted dims",
            format!("{}x{}", rec.padded.0, rec.padded.1),
            format!("{}x{}", inpainted.height(), inpainted.width()),
        ));
    }
    check_original(rec, original.height(), original.width())?;
    check_original(rec, original_mask.height(), original_mask.width())?;
    if inpainted.channels() != original.channels() {
        return Err(shape_err(
            "postprocess channels",
            original.channels(),
            inpainted.channels(),
        ));
    }
    if original_mask.is_clear() {
        return Ok(original.clone());
    }
    let cropped = inpainted.crop(rec.scaled.0, rec.scaled.1)?;
    let resized = resize_bilinear(&cropped, rec.original.0, rec.original.1);
    let c = original.channels();
    let mut out = original.clone();
    for (i, (dst, src)) in out
        .data_mut()
        .chunks_exact_mut(c)
        .zip(resized.data().chunks_exact(c))
        .enumerate()
    {
        if original_mask.data()[i] {
            dst.copy_from_slice(src);
        }
    }
    Ok(out)
}

pub fn postprocess(
    inpainted: &[Frame],
    originals: &[Frame],
    original_masks: &[MaskFrame],
    rec: &PreprocessRecord,
) -> Result<Vec<Frame>> {
    if inpainted.len() != originals.len() || originals.len() != original_masks.len() {
        return Err(shape_err(
            "postprocess lengths",
            originals.len(),
            format!("{} inpainted / {} masks", inpainted.len(), original_masks.len()),
        ));
    }
    inpainted
        .iter()
        .zip(originals)
        .zip(original_masks)
        .map(|((i, o), m)| postprocess_frame(i, o, m, rec))
        .collect()
}

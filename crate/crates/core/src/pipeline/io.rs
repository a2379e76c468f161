//! Numbered PNG frame directories.

use std::path::{Path, PathBuf};

use image::{GrayImage, ImageReader, RgbImage};

use crate::error::{Error, Result};
use crate::kernels::{FeatureMap, Frame, MaskFrame};

/// Mask pixels at or above this 8-bit value are occluded.
pub const MASK_THRESHOLD: u8 = 128;

/// `%05d.png`.
pub fn frame_file_name(index: usize) -> String {
    format!("{index:05}.png")
}

/// PNG files of `dir`, sorted by name.
pub fn list_pngs(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::Unreadable {
        path: dir.to_path_buf(),
        reason: e.to_string(),
    })?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry?.path();
        if path.is_file() && path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn open(path: &Path) -> Result<image::DynamicImage> {
    let unreadable = |reason: String| Error::Unreadable {
        path: path.to_path_buf(),
        reason,
    };
    ImageReader::open(path)
        .map_err(|e| unreadable(e.to_string()))?
        .with_guessed_format()
        .map_err(|e| unreadable(e.to_string()))?
        .decode()
        .map_err(|e| unreadable(e.to_string()))
}

/// Reads an RGB frame, scaled to `[0, 1]`.
pub fn read_frame(path: &Path) -> Result<Frame> {
    let img = open(path)?.into_rgb8();
    let (w, h) = img.dimensions();
    let data = img.into_raw().into_iter().map(|v| v as f64 / 255.0).collect();
    FeatureMap::new(h as usize, w as usize, 3, data)
}

/// Reads a grayscale mask, binarised at [`MASK_THRESHOLD`].
pub fn read_mask(path: &Path) -> Result<MaskFrame> {
    let img = open(path)?.into_luma8();
    let (w, h) = img.dimensions();
    let data = img.into_raw().into_iter().map(|v| v >= MASK_THRESHOLD).collect();
    MaskFrame::new(h as usize, w as usize, data)
}

/// Image dimensions `(height, width)` without decoding pixels.
pub fn probe_dims(path: &Path) -> Result<(usize, usize)> {
    let (w, h) = image::image_dimensions(path).map_err(|e| Error::Unreadable {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    Ok((h as usize, w as usize))
}

pub fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn write_frame(path: &Path, frame: &Frame) -> Result<()> {
    if frame.channels() != 3 {
        return Err(Error::InvalidArgument(format!(
            "cannot write a {}-channel frame as RGB",
            frame.channels()
        )));
    }
    let bytes = frame.data().iter().map(|&v| to_u8(v)).collect();
    let img = RgbImage::from_raw(frame.width() as u32, frame.height() as u32, bytes).expect("buffer matches dims");
    img.save(path)?;
    Ok(())
}

pub fn write_mask(path: &Path, mask: &MaskFrame) -> Result<()> {
    let bytes = mask.data().iter().map(|&m| if m { 255 } else { 0 }).collect();
    let img = GrayImage::from_raw(mask.width() as u32, mask.height() as u32, bytes).expect("buffer matches dims");
    img.save(path)?;
    Ok(())
}

/// Frame and mask file lists of a scene, checked for equal counts.
#[derive(Clone, Debug)]
pub struct SceneFiles {
    pub frames: Vec<PathBuf>,
    pub masks: Vec<PathBuf>,
}

impl SceneFiles {
    pub fn discover(frames_dir: &Path, masks_dir: &Path) -> Result<Self> {
        let frames = list_pngs(frames_dir)?;
        let masks = list_pngs(masks_dir)?;
        if frames.len() != masks.len() {
            return Err(Error::CountMismatch {
                frames: frames.len(),
                masks: masks.len(),
            });
        }
        if frames.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "no PNG frames in {}",
                frames_dir.display()
            )));
        }
        Ok(Self { frames, masks })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Reads pair `i`, checking both against `dims = (height, width)`.
    pub fn read(&self, i: usize, dims: (usize, usize)) -> Result<(Frame, MaskFrame)> {
        let frame = read_frame(&self.frames[i])?;
        check_dims(&self.frames[i], dims, (frame.height(), frame.width()))?;
        let mask = read_mask(&self.masks[i])?;
        check_dims(&self.masks[i], dims, (mask.height(), mask.width()))?;
        Ok((frame, mask))
    }
}

fn check_dims(path: &Path, expected: (usize, usize), actual: (usize, usize)) -> Result<()> {
    if expected == actual {
        return Ok(());
    }
    Err(Error::DimensionMismatch {
        path: path.to_path_buf(),
        expected_w: expected.1,
        expected_h: expected.0,
        actual_w: actual.1,
        actual_h: actual.0,
    })
}

/// Loads a whole scene into memory.
pub fn load_scene(frames_dir: &Path, masks_dir: &Path) -> Result<(Vec<Frame>, Vec<MaskFrame>)> {
    let files = SceneFiles::discover(frames_dir, masks_dir)?;
    let dims = probe_dims(&files.frames[0])?;
    let mut frames = Vec::with_capacity(files.len());
    let mut masks = Vec::with_capacity(files.len());
    for i in 0..files.len() {
        let (f, m) = files.read(i, dims)?;
        frames.push(f);
        masks.push(m);
    }
    Ok((frames, masks))
}

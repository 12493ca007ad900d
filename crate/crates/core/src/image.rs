//! Float images and clips, the currency passed between pipeline stages.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::color::LogGammaParams;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ImageError {
    #[error("data length {actual} does not match {width}x{height}x3 = {expected}")]
    Length {
        width: usize,
        height: usize,
        expected: usize,
        actual: usize,
    },
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
    #[error("invalid clip: {0}")]
    Clip(String),
}

/// Row-major interleaved RGB image with `f32` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageF32 {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl ImageF32 {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self, ImageError> {
        let expected = width * height * 3;
        if data.len() != expected {
            return Err(ImageError::Length {
                width,
                height,
                expected,
                actual: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(ImageError::NonFinite(i));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [f32; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(&rgb);
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f32; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Mutable access to raw samples. Callers must keep them finite.
    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f32; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [f32; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.width * 3)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Colorspace {
    LinearRec709,
    /// Display-encoded 8-bit frames stored as `byte / 255`.
    Srgb8,
    LogGamma,
}

impl Colorspace {
    pub fn code(self) -> u8 {
        match self {
            Colorspace::LinearRec709 => 0,
            Colorspace::Srgb8 => 1,
            Colorspace::LogGamma => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Colorspace::LinearRec709),
            1 => Some(Colorspace::Srgb8),
            2 => Some(Colorspace::LogGamma),
            _ => None,
        }
    }
}

/// Free-form provenance record (source HDRI, camera path, degradation, seed...).
pub type Provenance = BTreeMap<String, serde_json::Value>;

#[derive(Debug, Clone, PartialEq)]
pub struct ClipMetadata {
    pub colorspace: Colorspace,
    pub log_gamma: Option<LogGammaParams>,
    /// Accumulated exposure offset in stops.
    pub exposure_offset: f64,
    pub provenance: Provenance,
}

impl ClipMetadata {
    pub fn linear() -> Self {
        Self::with_colorspace(Colorspace::LinearRec709)
    }

    pub fn with_colorspace(colorspace: Colorspace) -> Self {
        Self {
            colorspace,
            log_gamma: None,
            exposure_offset: 0.0,
            provenance: Provenance::new(),
        }
    }

    pub fn validate(&self) -> Result<(), ImageError> {
        if self.colorspace == Colorspace::LogGamma && self.log_gamma.is_none() {
            return Err(ImageError::Clip(
                "Log-Gamma clip is missing its gamma/M parameters".into(),
            ));
        }
        if let Some(p) = &self.log_gamma {
            p.validate().map_err(|e| ImageError::Clip(e.to_string()))?;
        }
        if !self.exposure_offset.is_finite() {
            return Err(ImageError::Clip("exposure offset is not finite".into()));
        }
        Ok(())
    }
}

/// Multi-frame float clip with uniform frame dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoClip {
    pub frames: Vec<ImageF32>,
    pub fps: f32,
    pub meta: ClipMetadata,
}

/// Frame count of the rendered training clips.
pub const DEFAULT_FRAME_COUNT: usize = 81;

impl VideoClip {
    pub fn new(frames: Vec<ImageF32>, fps: f32, meta: ClipMetadata) -> Result<Self, ImageError> {
        let clip = Self { frames, fps, meta };
        clip.validate()?;
        Ok(clip)
    }

    pub fn validate(&self) -> Result<(), ImageError> {
        let first = self
            .frames
            .first()
            .ok_or_else(|| ImageError::Clip("clip has no frames".into()))?;
        if let Some(i) = self
            .frames
            .iter()
            .position(|f| f.width() != first.width() || f.height() != first.height())
        {
            return Err(ImageError::Clip(format!(
                "frame {i} is {}x{}, expected {}x{}",
                self.frames[i].width(),
                self.frames[i].height(),
                first.width(),
                first.height()
            )));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(ImageError::Clip(format!("fps must be > 0, got {}", self.fps)));
        }
        self.meta.validate()
    }

    pub fn width(&self) -> usize {
        self.frames[0].width()
    }

    pub fn height(&self) -> usize {
        self.frames[0].height()
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn image_rejects_bad_lengths_and_nan() {
        assert!(matches!(
            ImageF32::new(2, 2, vec![0.0; 11]),
            Err(ImageError::Length { expected: 12, .. })
        ));
        let mut d = vec![0.0; 12];
        d[5] = f32::NAN;
        assert_eq!(ImageF32::new(2, 2, d), Err(ImageError::NonFinite(5)));
    }

    #[test]
    fn clip_invariants() {
        let a = ImageF32::filled(2, 2, [0.0; 3]);
        let b = ImageF32::filled(3, 2, [0.0; 3]);
        assert!(VideoClip::new(vec![], 24.0, ClipMetadata::linear()).is_err());
        assert!(VideoClip::new(vec![a.clone(), b], 24.0, ClipMetadata::linear()).is_err());
        assert!(VideoClip::new(vec![a.clone()], 0.0, ClipMetadata::linear()).is_err());
        let lg = ClipMetadata::with_colorspace(Colorspace::LogGamma);
        assert!(VideoClip::new(vec![a], 24.0, lg).is_err());
    }

    #[test]
    fn colorspace_codes_roundtrip() {
        for cs in [Colorspace::LinearRec709, Colorspace::Srgb8, Colorspace::LogGamma] {
            assert_eq!(Colorspace::from_code(cs.code()), Some(cs));
        }
        assert_eq!(Colorspace::from_code(9), None);
    }
}

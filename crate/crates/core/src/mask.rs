//! Over/under-exposure masks from 8-bit sRGB frames, temporal EMA
//! smoothing, and area pooling onto a token grid.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::color::{luminance_709, srgb_decode};
use crate::hdr_io::hfv::{read_hfv_raw, write_hfv_raw, Sidecar};
use crate::hdr_io::{HfvHeader, IoError, RawClip};
use crate::image::{ClipMetadata, Colorspace, VideoClip};

#[derive(Debug, Error)]
pub enum MaskError {
    #[error("invalid mask parameters: {0}")]
    Params(String),
    #[error("expected an sRGB clip, got {0:?}")]
    Colorspace(Colorspace),
    #[error("shape error: {0}")]
    Shape(String),
    #[error(transparent)]
    Io(#[from] IoError),
}

pub type Result<T> = std::result::Result<T, MaskError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaskParams {
    pub tau_high: f64,
    pub tau_low: f64,
    /// EMA weight of the current frame.
    pub alpha: f64,
}

impl Default for MaskParams {
    fn default() -> Self {
        Self {
            tau_high: 0.95,
            tau_low: 0.05,
            alpha: 0.7,
        }
    }
}

impl MaskParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.tau_low && self.tau_low < self.tau_high && self.tau_high <= 1.0) {
            return Err(MaskError::Params(format!(
                "need 0 <= tau_low < tau_high <= 1, got {} and {}",
                self.tau_low, self.tau_high
            )));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(MaskError::Params(format!("alpha {} outside (0, 1]", self.alpha)));
        }
        Ok(())
    }
}

/// Per-frame soft masks, row-major, one value per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct ExposureMasks {
    pub width: usize,
    pub height: usize,
    pub over: Vec<Vec<f32>>,
    pub under: Vec<Vec<f32>>,
    pub smoothed: bool,
}

impl ExposureMasks {
    pub fn frame_count(&self) -> usize {
        self.over.len()
    }

    /// Two-channel (over, under) interleaved container representation.
    pub fn to_raw(&self, fps: f32) -> RawClip {
        let frames = self
            .over
            .iter()
            .zip(&self.under)
            .map(|(o, u)| o.iter().zip(u).flat_map(|(a, b)| [*a, *b]).collect())
            .collect();
        RawClip {
            header: HfvHeader {
                width: self.width as u32,
                height: self.height as u32,
                frame_count: self.over.len() as u32,
                channels: 2,
                fps,
                colorspace: Colorspace::LinearRec709,
            },
            frames,
        }
    }

    pub fn from_raw(raw: &RawClip, smoothed: bool) -> Result<Self> {
        if raw.header.channels != 2 {
            return Err(MaskError::Shape(format!(
                "mask files have 2 channels, found {}",
                raw.header.channels
            )));
        }
        let split = |k: usize| -> Vec<Vec<f32>> {
            raw.frames
                .iter()
                .map(|f| f.iter().skip(k).step_by(2).copied().collect())
                .collect()
        };
        Ok(Self {
            width: raw.header.width as usize,
            height: raw.header.height as usize,
            over: split(0),
            under: split(1),
            smoothed,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>, fps: f32, params: &MaskParams) -> Result<()> {
        let mut sidecar = Sidecar::from_meta(&ClipMetadata::linear(), fps);
        sidecar.provenance.insert("content".into(), json!("exposure_masks"));
        sidecar.provenance.insert("channels".into(), json!(["over", "under"]));
        sidecar.provenance.insert("smoothed".into(), json!(self.smoothed));
        sidecar.provenance.insert("params".into(), json!(params));
        write_hfv_raw(path, &self.to_raw(fps), &sidecar)?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let (raw, sidecar) = read_hfv_raw(path)?;
        let smoothed = sidecar
            .and_then(|s| s.provenance.get("smoothed").and_then(|v| v.as_bool()))
            .unwrap_or(true);
        Self::from_raw(&raw, smoothed)
    }
}

/// Thresholds linearized Rec.709 luminance: `over = [Y > tau_high]`,
/// `under = [Y < tau_low]`.
pub fn detect_raw_masks(ldr: &VideoClip, params: &MaskParams) -> Result<ExposureMasks> {
    params.validate()?;
    if ldr.meta.colorspace != Colorspace::Srgb8 {
        return Err(MaskError::Colorspace(ldr.meta.colorspace));
    }
    let (over, under): (Vec<Vec<f32>>, Vec<Vec<f32>>) = ldr
        .frames
        .par_iter()
        .map(|f| {
            let mut o = Vec::with_capacity(f.pixel_count());
            let mut u = Vec::with_capacity(f.pixel_count());
            for px in f.data().chunks_exact(3) {
                let lin = std::array::from_fn(|c| {
                    srgb_decode(f64::from(px[c]).clamp(0.0, 1.0)).expect("clamped")
                });
                let y = luminance_709(lin);
                o.push(if y > params.tau_high { 1.0 } else { 0.0 });
                u.push(if y < params.tau_low { 1.0 } else { 0.0 });
            }
            (o, u)
        })
        .unzip();
    Ok(ExposureMasks {
        width: ldr.width(),
        height: ldr.height(),
        over,
        under,
        smoothed: false,
    })
}

/// `m~_t = alpha * m_t + (1 - alpha) * m~_{t-1}` with `m~_0 = m_0`.
pub fn ema(frames: &[Vec<f32>], alpha: f64) -> Vec<Vec<f32>> {
    let mut out: Vec<Vec<f32>> = Vec::with_capacity(frames.len());
    let mut state: Vec<f64> = match frames.first() {
        Some(f) => f.iter().map(|&v| f64::from(v)).collect(),
        None => return out,
    };
    out.push(frames[0].clone());
    for f in &frames[1..] {
        state
            .par_iter_mut()
            .zip(f.par_iter())
            .with_min_len(4096)
            .for_each(|(s, &m)| *s = alpha * f64::from(m) + (1.0 - alpha) * *s);
        out.push(state.iter().map(|&v| v as f32).collect());
    }
    out
}

/// Raw detection followed by EMA smoothing.
pub fn detect_masks(ldr: &VideoClip, params: &MaskParams) -> Result<ExposureMasks> {
    let raw = detect_raw_masks(ldr, params)?;
    Ok(smooth_masks(&raw, params.alpha))
}

pub fn smooth_masks(raw: &ExposureMasks, alpha: f64) -> ExposureMasks {
    ExposureMasks {
        width: raw.width,
        height: raw.height,
        over: ema(&raw.over, alpha),
        under: ema(&raw.under, alpha),
        smoothed: true,
    }
}

/// Masks averaged over each token's spatiotemporal cell, stored
/// `[t][y][x]` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenMasks {
    pub shape: (usize, usize, usize),
    pub over: Vec<f32>,
    pub under: Vec<f32>,
}

impl TokenMasks {
    pub fn zeros(shape: (usize, usize, usize)) -> Self {
        let n = shape.0 * shape.1 * shape.2;
        Self {
            shape,
            over: vec![0.0; n],
            under: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.over.len()
    }

    pub fn is_empty(&self) -> bool {
        self.over.is_empty()
    }
}

fn cell_bounds(i: usize, cells: usize, extent: usize) -> (usize, usize) {
    (i * extent / cells, (i + 1) * extent / cells)
}

/// Averages one frame stack over `(t', h', w')` cells. Cell edges are
/// `floor(i * N / n)`, so uneven sizes split as evenly as possible.
pub fn pool_frames(
    frames: &[Vec<f32>],
    width: usize,
    height: usize,
    shape: (usize, usize, usize),
) -> Result<Vec<f32>> {
    let (tt, th, tw) = shape;
    if tt == 0 || th == 0 || tw == 0 {
        return Err(MaskError::Shape(format!("token grid {shape:?} has a zero dimension")));
    }
    if tt > frames.len() || th > height || tw > width {
        return Err(MaskError::Shape(format!(
            "token grid {shape:?} exceeds mask extent {}x{height}x{width}",
            frames.len()
        )));
    }
    let mut out = Vec::with_capacity(tt * th * tw);
    for ti in 0..tt {
        let (t0, t1) = cell_bounds(ti, tt, frames.len());
        for yi in 0..th {
            let (y0, y1) = cell_bounds(yi, th, height);
            for xi in 0..tw {
                let (x0, x1) = cell_bounds(xi, tw, width);
                let mut sum = 0.0f64;
                for f in &frames[t0..t1] {
                    for y in y0..y1 {
                        sum += f[y * width + x0..y * width + x1]
                            .iter()
                            .map(|&v| f64::from(v))
                            .sum::<f64>();
                    }
                }
                let n = (t1 - t0) * (y1 - y0) * (x1 - x0);
                out.push((sum / n as f64).clamp(0.0, 1.0) as f32);
            }
        }
    }
    Ok(out)
}

pub fn pool_masks(masks: &ExposureMasks, shape: (usize, usize, usize)) -> Result<TokenMasks> {
    Ok(TokenMasks {
        shape,
        over: pool_frames(&masks.over, masks.width, masks.height, shape)?,
        under: pool_frames(&masks.under, masks.width, masks.height, shape)?,
    })
}

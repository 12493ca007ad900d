//! Conversion between clips and model latents (identity encoder: the latent
//! is the Log-Gamma clip area-averaged to the latent grid).

use hdrforge_core::color::{apply_exposure, linearize_srgb_clip, log_gamma_encode_clip, LogGammaParams};
use hdrforge_core::image::{ClipMetadata, Colorspace, ImageF32, VideoClip};
use hdrforge_core::mask::{pool_frames, pool_masks, ExposureMasks, TokenMasks};
use hdrforge_core::prompt::{ContextPrompt, Vocab};

use crate::model::{Conditioning, LatentShape, ModelConfig};
use crate::FlowError;

fn cell(i: usize, cells: usize, extent: usize) -> (usize, usize) {
    (i * extent / cells, (i + 1) * extent / cells)
}

/// Area-averages a clip (any colorspace) into a `(t, h, w, c)` latent.
pub fn pool_clip(clip: &VideoClip, shape: LatentShape) -> Result<Vec<f64>, FlowError> {
    let (w, h, n) = (clip.width(), clip.height(), clip.frame_count());
    if shape.c != 3 || shape.t == 0 || shape.h == 0 || shape.w == 0 || shape.t > n || shape.h > h || shape.w > w {
        return Err(FlowError::Shape(format!(
            "cannot pool a {n}x{h}x{w} clip to latent {}x{}x{}x{}",
            shape.t, shape.h, shape.w, shape.c
        )));
    }
    let mut out = Vec::with_capacity(shape.len());
    for ti in 0..shape.t {
        let (t0, t1) = cell(ti, shape.t, n);
        for yi in 0..shape.h {
            let (y0, y1) = cell(yi, shape.h, h);
            for xi in 0..shape.w {
                let (x0, x1) = cell(xi, shape.w, w);
                let mut sum = [0.0f64; 3];
                for f in &clip.frames[t0..t1] {
                    for y in y0..y1 {
                        for x in x0..x1 {
                            let p = f.pixel(x, y);
                            for c in 0..3 {
                                sum[c] += f64::from(p[c]);
                            }
                        }
                    }
                }
                let count = ((t1 - t0) * (y1 - y0) * (x1 - x0)) as f64;
                out.extend(sum.iter().map(|s| s / count));
            }
        }
    }
    Ok(out)
}

/// Linear latent values back to a clip at latent resolution.
pub fn latent_to_clip(latent: &[f64], shape: LatentShape, meta: ClipMetadata, fps: f32) -> Result<VideoClip, FlowError> {
    if latent.len() != shape.len() || shape.c != 3 {
        return Err(FlowError::Shape(format!(
            "latent has {} values, shape {:?} needs {}",
            latent.len(),
            shape,
            shape.len()
        )));
    }
    let frames = latent
        .chunks(shape.frame_len())
        .map(|f| ImageF32::new(shape.w, shape.h, f.iter().map(|&v| v as f32).collect()))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| FlowError::Shape(e.to_string()))?;
    VideoClip::new(frames, fps, meta).map_err(|e| FlowError::Shape(e.to_string()))
}

/// Log-Gamma latent of a linear HDR clip shifted by `stops`; radiance
/// above `M` is clamped.
pub fn hdr_latent(hdr: &VideoClip, stops: f64, lg: LogGammaParams, shape: LatentShape) -> Result<Vec<f64>, FlowError> {
    let shifted = apply_exposure(hdr, stops)?;
    pool_clip(&log_gamma_encode_clip(&shifted, lg, true)?, shape)
}

/// Log-Gamma latent of an sRGB LDR clip after linearization.
pub fn ldr_latent(ldr: &VideoClip, lg: LogGammaParams, shape: LatentShape) -> Result<Vec<f64>, FlowError> {
    let lin = linearize_srgb_clip(ldr)?;
    pool_clip(&log_gamma_encode_clip(&lin, lg, true)?, shape)
}

/// Maps a Log-Gamma latent to linear radiance.
pub fn decode_latent(latent: &[f64], lg: LogGammaParams) -> Vec<f64> {
    latent.iter().map(|&y| lg.inverse_clamped(y.clamp(0.0, 1.0))).collect()
}

/// Per-pixel weight of the union of over- and under-exposed masks at the
/// latent grid, broadcast to `(t, h, w, c)`.
pub fn mask_union_weights(masks: &ExposureMasks, shape: LatentShape) -> Result<Vec<f32>, FlowError> {
    let union: Vec<Vec<f32>> = masks
        .over
        .iter()
        .zip(&masks.under)
        .map(|(o, u)| o.iter().zip(u).map(|(a, b)| a.max(*b)).collect())
        .collect();
    let pooled = pool_frames(&union, masks.width, masks.height, (shape.t, shape.h, shape.w))?;
    Ok(pooled.iter().flat_map(|&m| std::iter::repeat(m).take(shape.c)).collect())
}

/// Token ids for each prompt role of a caption.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptIds {
    pub full: Vec<u32>,
    pub global: Vec<u32>,
    pub over: Vec<u32>,
    pub under: Vec<u32>,
    pub empty: Vec<u32>,
}

impl PromptIds {
    pub fn encode(caption: &ContextPrompt, vocab: &Vocab) -> Self {
        Self {
            full: vocab.encode(&caption.serialize()),
            global: vocab.encode(&caption.global_text),
            over: vocab.encode(&caption.over_text),
            under: vocab.encode(&caption.under_text),
            empty: vocab.encode(""),
        }
    }

    /// The prompts a training step may condition on.
    pub fn training_choices(&self) -> Vec<Vec<u32>> {
        vec![
            self.full.clone(),
            self.global.clone(),
            self.over.clone(),
            self.under.clone(),
            self.empty.clone(),
        ]
    }
}

/// A training/evaluation example in latent space.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    /// Target HDR latent.
    pub x1: Vec<f64>,
    pub cond: Conditioning,
    /// Prompts drawn from uniformly during training; empty means always
    /// use `cond.base_prompt`.
    pub prompt_choices: Vec<Vec<u32>>,
    /// Mask-union weights in latent layout, for masked metrics.
    pub mask_weights: Vec<f32>,
}

/// Everything needed to turn one curated clip into an [`Example`].
pub struct ClipBundle<'a> {
    pub hdr: &'a VideoClip,
    pub ldr: &'a VideoClip,
    pub raw_masks: &'a ExposureMasks,
    pub smoothed_masks: &'a ExposureMasks,
    pub caption: &'a ContextPrompt,
}

pub fn build_example(
    bundle: &ClipBundle<'_>,
    config: &ModelConfig,
    vocab: &Vocab,
    lg: LogGammaParams,
) -> Result<Example, FlowError> {
    if bundle.ldr.meta.colorspace != Colorspace::Srgb8 {
        return Err(FlowError::Shape("LDR clip must be sRGB".into()));
    }
    let shape = config.latent;
    let stops = bundle.ldr.meta.exposure_offset - bundle.hdr.meta.exposure_offset;
    let ids = PromptIds::encode(bundle.caption, vocab);
    let masks: TokenMasks = pool_masks(bundle.smoothed_masks, config.token_grid())?;
    Ok(Example {
        x1: hdr_latent(bundle.hdr, stops, lg, shape)?,
        cond: Conditioning {
            ldr: ldr_latent(bundle.ldr, lg, shape)?,
            masks,
            base_prompt: ids.global.clone(),
            over_prompt: ids.over.clone(),
            under_prompt: ids.under.clone(),
            reference: None,
        },
        prompt_choices: ids.training_choices(),
        mask_weights: mask_union_weights(bundle.raw_masks, shape)?,
    })
}

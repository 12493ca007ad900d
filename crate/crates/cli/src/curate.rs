//! Dataset curation: panorama → camera paths → HDR clips → degraded LDR
//! clips → exposure masks → captions, plus the on-disk layout and manifest.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use hdrforge_core::degrade::{degrade_clip, sample_degrade_params, DegradeParams};
use hdrforge_core::hdr_io::{read_hfv, read_ppm_dir, write_hfv, write_ppm_dir};
use hdrforge_core::hdr_io::ppm::frames_to_clip;
use hdrforge_core::image::VideoClip;
use hdrforge_core::mask::{detect_raw_masks, smooth_masks, ExposureMasks, MaskParams};
use hdrforge_core::pano::procedural::procedural_panorama;
use hdrforge_core::pano::{build_camera_path, render_clip, MotionPattern, Panorama};
use hdrforge_core::prompt::ContextPrompt;
use hdrforge_core::rng::{derive_key, label};

use crate::config::{CurateConfig, DegradeConfig, RunConfig};

/// One curated training clip held in memory.
#[derive(Debug, Clone)]
pub struct CuratedClip {
    pub clip_id: String,
    pub hdri_source: String,
    pub pattern: MotionPattern,
    pub seed: u64,
    pub hdr: VideoClip,
    pub ldr: VideoClip,
    pub raw_masks: ExposureMasks,
    pub masks: ExposureMasks,
    pub degrade: DegradeParams,
    pub caption: ContextPrompt,
}

pub fn degrade_params_for(seed: u64, cfg: &DegradeConfig) -> DegradeParams {
    let mut p = sample_degrade_params(seed);
    p.rho = cfg.rho;
    if let Some(d) = cfg.delta {
        p.delta = d;
    }
    if let Some(s) = cfg.sigma_s {
        p.sigma_s = s;
    }
    if let Some(c) = cfg.sigma_c {
        p.sigma_c = c;
    }
    p
}

/// Degrades `hdr` and derives raw and smoothed masks from the result.
pub fn degrade_and_mask(
    hdr: &VideoClip,
    params: &DegradeParams,
    mask: &MaskParams,
) -> Result<(VideoClip, ExposureMasks, ExposureMasks)> {
    let degraded = degrade_clip(hdr, params)?;
    let raw = detect_raw_masks(&degraded.ldr, mask)?;
    let smoothed = smooth_masks(&raw, mask.alpha);
    Ok((degraded.ldr, raw, smoothed))
}

/// Renders, degrades and masks every pattern of the recipe for one panorama.
/// `pano_seed` fixes the panorama-level choices; each clip derives its own
/// degradation seed from it.
pub fn curate_panorama(
    pano: &Panorama,
    caption: &ContextPrompt,
    pano_seed: u64,
    curate: &CurateConfig,
    degrade: &DegradeConfig,
    mask: &MaskParams,
) -> Result<Vec<CuratedClip>> {
    curate
        .recipe
        .iter()
        .map(|&pattern| {
            let path = build_camera_path(pattern, pano, pano_seed, curate.frames)?;
            let hdr = render_clip(pano, &path, curate.width, curate.height)?;
            let seed = derive_key(pano_seed, &[label("clip"), label(&pattern.slug())]);
            let params = degrade_params_for(seed, degrade);
            let (ldr, raw_masks, masks) = degrade_and_mask(&hdr, &params, mask)?;
            Ok(CuratedClip {
                clip_id: format!("{}_{}", pano.id, pattern.slug()),
                hdri_source: pano.id.clone(),
                pattern,
                seed,
                hdr,
                ldr,
                raw_masks,
                masks,
                degrade: params,
                caption: caption.clone(),
            })
        })
        .collect()
}

/// Seed of the `index`-th procedural panorama of a run.
pub fn panorama_seed(run_seed: u64, index: usize) -> u64 {
    derive_key(run_seed, &[label("panorama"), index as u64])
}

/// Curates `count` procedural panoramas into `count * recipe.len()` clips.
pub fn curate_procedural(count: usize, config: &RunConfig) -> Result<Vec<CuratedClip>> {
    curate_procedural_range(0..count, config)
}

/// Curates the procedural panoramas with the given run indices.
pub fn curate_procedural_range(indices: std::ops::Range<usize>, config: &RunConfig) -> Result<Vec<CuratedClip>> {
    let mut out = Vec::new();
    for i in indices {
        let seed = panorama_seed(config.seed, i);
        let scene = procedural_panorama(seed, config.curate.panorama_width)?;
        let caption = ContextPrompt::new(
            &scene.global_caption(),
            &scene.over_caption(),
            &scene.under_caption(),
        );
        out.extend(curate_panorama(
            &scene.panorama,
            &caption,
            seed,
            &config.curate,
            &config.degrade,
            &config.mask,
        )?);
    }
    Ok(out)
}

/// Default caption for a user-supplied HDRI.
pub fn generic_caption(hdri_id: &str) -> ContextPrompt {
    ContextPrompt::new(
        &format!("a scene captured in {}", hdri_id.replace(['_', '-'], " ")),
        "bright light source",
        "dark shadowed area",
    )
}

/// One manifest record; paths are relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClipRecord {
    pub clip_id: String,
    pub hdri_source: String,
    pub motion_pattern: MotionPattern,
    pub seed: u64,
    pub degrade_params: DegradeParams,
    pub caption: String,
    pub hdr: PathBuf,
    pub ldr: PathBuf,
    pub masks: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub version: u32,
    pub config: serde_json::Value,
    pub clips: Vec<ClipRecord>,
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

/// Writes `hdr.hfv`, `ldr/frame_*.ppm` and `masks.hfv` under
/// `root/<clip_id>/`.
pub fn write_clip(root: &Path, clip: &CuratedClip, mask: &MaskParams) -> Result<ClipRecord> {
    let rel = PathBuf::from(&clip.clip_id);
    let dir = root.join(&rel);
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    write_hfv(dir.join("hdr.hfv"), &clip.hdr)?;
    let bytes: Vec<_> = clip
        .ldr
        .frames
        .iter()
        .map(hdrforge_core::hdr_io::Rgb8Image::from_unit_float)
        .collect();
    write_ppm_dir(dir.join("ldr"), &bytes)?;
    clip.masks.write(dir.join("masks.hfv"), clip.hdr.fps, mask)?;
    Ok(ClipRecord {
        clip_id: clip.clip_id.clone(),
        hdri_source: clip.hdri_source.clone(),
        motion_pattern: clip.pattern,
        seed: clip.seed,
        degrade_params: clip.degrade,
        caption: clip.caption.serialize(),
        hdr: rel.join("hdr.hfv"),
        ldr: rel.join("ldr"),
        masks: rel.join("masks.hfv"),
    })
}

impl DatasetManifest {
    pub fn write(&self, root: &Path) -> Result<PathBuf> {
        let path = root.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let m: Self = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        if m.version != MANIFEST_VERSION {
            bail!("unsupported manifest version {}", m.version);
        }
        Ok(m)
    }

    /// Problems found when checking the manifest against the filesystem.
    pub fn problems(&self, root: &Path) -> Vec<String> {
        let mut out = Vec::new();
        let mut seen = std::collections::BTreeSet::new();
        for r in &self.clips {
            if !seen.insert(&r.clip_id) {
                out.push(format!("duplicate clip_id {}", r.clip_id));
            }
            for (what, p) in [("hdr", &r.hdr), ("ldr", &r.ldr), ("masks", &r.masks)] {
                if !root.join(p).exists() {
                    out.push(format!("{}: missing {what} at {}", r.clip_id, p.display()));
                }
            }
            if let Err(e) = ContextPrompt::parse(&r.caption) {
                out.push(format!("{}: caption does not parse: {e}", r.clip_id));
            }
        }
        out
    }
}

/// Loads one manifest record back into memory; raw masks are recomputed
/// from the LDR frames.
pub fn load_clip(root: &Path, record: &ClipRecord, mask: &MaskParams) -> Result<CuratedClip> {
    let hdr = read_hfv(root.join(&record.hdr))?;
    let mut ldr = frames_to_clip(&read_ppm_dir(root.join(&record.ldr))?, hdr.fps)?;
    ldr.meta.exposure_offset = hdr.meta.exposure_offset + record.degrade_params.delta;
    let masks = ExposureMasks::read(root.join(&record.masks))?;
    let raw_masks = detect_raw_masks(&ldr, mask)?;
    if ldr.frame_count() != hdr.frame_count() || ldr.width() != hdr.width() || ldr.height() != hdr.height() {
        bail!("{}: HDR and LDR clips differ in shape", record.clip_id);
    }
    Ok(CuratedClip {
        clip_id: record.clip_id.clone(),
        hdri_source: record.hdri_source.clone(),
        pattern: record.motion_pattern,
        seed: record.seed,
        hdr,
        ldr,
        raw_masks,
        masks,
        degrade: record.degrade_params,
        caption: ContextPrompt::parse(&record.caption)?,
    })
}

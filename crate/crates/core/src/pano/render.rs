//! Pinhole rendering of camera paths through a panorama.

use rayon::prelude::*;
use serde_json::json;

use super::{CameraPath, Panorama, PanoError, Result};
use crate::image::{ClipMetadata, ImageF32, VideoClip};

/// Frame rate stamped on rendered clips.
pub const DEFAULT_FPS: f32 = 16.0;

/// Renders one frame: one ray through each pixel centre, no supersampling.
pub fn render_frame(
    pano: &Panorama,
    pose: &super::CameraPose,
    focal_mm: f64,
    width: usize,
    height: usize,
) -> ImageF32 {
    let mut data = vec![0f32; width * height * 3];
    data.par_chunks_mut(width * 3)
        .enumerate()
        .for_each(|(y, row)| {
            for (x, px) in row.chunks_exact_mut(3).enumerate() {
                let d = pose.ray(focal_mm, width, height, x as f64 + 0.5, y as f64 + 0.5);
                let (u, v) = pano.direction_to_uv(d);
                px.copy_from_slice(&pano.sample_uv(u, v));
            }
        });
    ImageF32::new(width, height, data).expect("panorama samples are finite")
}

/// Renders every frame of `path` into a linear Rec.709 clip. Provenance
/// records the panorama id, motion pattern, seed and focal/yaw schedule.
pub fn render_clip(
    pano: &Panorama,
    path: &CameraPath,
    width: usize,
    height: usize,
) -> Result<VideoClip> {
    path.validate()?;
    if width == 0 || height == 0 {
        return Err(PanoError::Domain(format!("output size {width}x{height}")));
    }
    let frames: Vec<ImageF32> = path
        .poses
        .iter()
        .zip(&path.focals)
        .map(|(pose, &f)| render_frame(pano, pose, f, width, height))
        .collect();
    let mut meta = ClipMetadata::linear();
    meta.provenance.insert("hdri_id".into(), json!(pano.id));
    meta.provenance.insert("pattern".into(), json!(path.pattern));
    meta.provenance.insert("seed".into(), json!(path.seed));
    meta.provenance.insert(
        "focal_mm".into(),
        json!([path.focals[0], path.focals[path.focals.len() - 1]]),
    );
    meta.provenance.insert(
        "yaw_deg".into(),
        json!([path.poses[0].yaw, path.poses[path.poses.len() - 1].yaw]),
    );
    meta.provenance.insert("pitch_deg".into(), json!(path.poses[0].pitch));
    if path.pitch_clamped {
        meta.provenance.insert("pitch_clamped".into(), json!(true));
    }
    VideoClip::new(frames, DEFAULT_FPS, meta).map_err(|e| PanoError::Domain(e.to_string()))
}

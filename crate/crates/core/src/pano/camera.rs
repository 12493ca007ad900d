//! Camera poses, focal schedules and the three curation motion patterns.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{cross, normalize, Extreme, Panorama, PanoError, Result, Vec3};
use crate::rng::{label, seeded_chacha};

/// Horizontal sensor width in millimetres (full frame).
pub const SENSOR_WIDTH_MM: f64 = 36.0;
/// Wide end of a zoom, sampled from this open interval (mm).
pub const ZOOM_WIDE_MM: (f64, f64) = (18.0, 30.0);
/// Tele end of a zoom, sampled from this open interval (mm).
pub const ZOOM_TELE_MM: (f64, f64) = (50.0, 70.0);
/// Fixed focal for rotation sweeps, sampled once per panorama (mm).
pub const ROTATION_FOCAL_MM: (f64, f64) = (24.0, 35.0);
/// Yaw covered by each rotation segment.
pub const SEGMENT_DEGREES: f64 = 120.0;
/// Aiming pitch limit; avoids a degenerate yaw at the poles.
pub const MAX_AIM_PITCH: f64 = 85.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraPose {
    /// Azimuth in degrees; 0 looks down `-Z`, positive turns toward `+X`.
    pub yaw: f64,
    /// Elevation in degrees, `[-90, 90]`.
    pub pitch: f64,
}

impl CameraPose {
    pub fn new(yaw: f64, pitch: f64) -> Result<Self> {
        if !(-90.0..=90.0).contains(&pitch) || !yaw.is_finite() {
            return Err(PanoError::Path(format!("invalid pose yaw={yaw} pitch={pitch}")));
        }
        Ok(Self { yaw, pitch })
    }

    /// Pose that looks along `d` (roll is always zero).
    pub fn looking_at(d: Vec3) -> Self {
        let d = normalize(d).unwrap_or([0.0, 0.0, -1.0]);
        CameraPose {
            yaw: d[0].atan2(-d[2]).to_degrees(),
            pitch: d[1].clamp(-1.0, 1.0).asin().to_degrees(),
        }
    }

    pub fn forward(&self) -> Vec3 {
        let (sy, cy) = self.yaw.to_radians().sin_cos();
        let (sp, cp) = self.pitch.to_radians().sin_cos();
        [sy * cp, sp, -cy * cp]
    }

    pub fn right(&self) -> Vec3 {
        let (sy, cy) = self.yaw.to_radians().sin_cos();
        [cy, 0.0, sy]
    }

    pub fn up(&self) -> Vec3 {
        cross(self.right(), self.forward())
    }

    /// Ray through continuous pixel coordinates `(px, py)` of a
    /// `width x height` image, for a pinhole with focal `focal_mm`.
    pub fn ray(&self, focal_mm: f64, width: usize, height: usize, px: f64, py: f64) -> Vec3 {
        let half = SENSOR_WIDTH_MM / 2.0;
        let sx = (px / width as f64 * 2.0 - 1.0) * half;
        let sy = (1.0 - py / height as f64 * 2.0) * half * height as f64 / width as f64;
        let (f, r, u) = (self.forward(), self.right(), self.up());
        let d: Vec3 = std::array::from_fn(|i| f[i] * focal_mm + r[i] * sx + u[i] * sy);
        normalize(d).expect("pinhole ray is never zero")
    }
}

/// Horizontal field of view in degrees for a focal length in millimetres.
pub fn horizontal_fov_degrees(focal_mm: f64) -> f64 {
    (2.0 * (SENSOR_WIDTH_MM / (2.0 * focal_mm)).atan()).to_degrees()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "index", rename_all = "snake_case")]
pub enum MotionPattern {
    HighlightZoom,
    ShadowZoom,
    RotationSegment(u8),
}

impl MotionPattern {
    /// One highlight zoom, one shadow zoom and three rotation segments.
    pub const DEFAULT_RECIPE: [MotionPattern; 5] = [
        MotionPattern::HighlightZoom,
        MotionPattern::ShadowZoom,
        MotionPattern::RotationSegment(0),
        MotionPattern::RotationSegment(1),
        MotionPattern::RotationSegment(2),
    ];

    pub fn validate(&self) -> Result<()> {
        match self {
            MotionPattern::RotationSegment(i) if *i > 2 => {
                Err(PanoError::Path(format!("rotation segment {i} is not in 0..=2")))
            }
            _ => Ok(()),
        }
    }

    pub fn slug(&self) -> String {
        match self {
            MotionPattern::HighlightZoom => "highlight_zoom".into(),
            MotionPattern::ShadowZoom => "shadow_zoom".into(),
            MotionPattern::RotationSegment(i) => format!("rotation_{i}"),
        }
    }

    /// Yaw range `[start, end)` of rotation segment `index` from `base`.
    pub fn segment_yaw_range(base: f64, index: u8) -> (f64, f64) {
        (
            base + f64::from(index) * SEGMENT_DEGREES,
            base + f64::from(index + 1) * SEGMENT_DEGREES,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraPath {
    pub poses: Vec<CameraPose>,
    /// Focal length per frame in millimetres.
    pub focals: Vec<f64>,
    pub pattern: MotionPattern,
    pub seed: u64,
    /// Set when the aim direction was closer to a pole than the pitch limit.
    pub pitch_clamped: bool,
}

impl CameraPath {
    pub fn frame_count(&self) -> usize {
        self.poses.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.poses.is_empty() || self.poses.len() != self.focals.len() {
            return Err(PanoError::Path("poses and focals must be non-empty and aligned".into()));
        }
        if self.focals.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
            return Err(PanoError::Path("focal lengths must be > 0".into()));
        }
        if self.poses.iter().any(|p| !(-90.0..=90.0).contains(&p.pitch)) {
            return Err(PanoError::Path("pitch outside [-90, 90]".into()));
        }
        Ok(())
    }
}

fn open_uniform<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    loop {
        let v = rng.gen_range(lo..hi);
        if v > lo {
            return v;
        }
    }
}

fn lerp_schedule(start: f64, end: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![start];
    }
    (0..n)
        .map(|k| start + (end - start) * k as f64 / (n - 1) as f64)
        .collect()
}

/// Focal endpoints of a zoom: `(start, end)`, with the direction decided by
/// a fair coin.
pub fn sample_zoom_focals<R: Rng>(rng: &mut R) -> (f64, f64) {
    let wide = open_uniform(rng, ZOOM_WIDE_MM);
    let tele = open_uniform(rng, ZOOM_TELE_MM);
    if rng.gen_bool(0.5) {
        (wide, tele)
    } else {
        (tele, wide)
    }
}

/// Base yaw and focal shared by the three rotation segments of a panorama.
pub fn sample_rotation_setup(seed: u64) -> (f64, f64) {
    let mut rng = seeded_chacha(seed, &[label("rotation")]);
    let base = rng.gen_range(0.0..360.0);
    let focal = open_uniform(&mut rng, ROTATION_FOCAL_MM);
    (base, focal)
}

/// Builds the per-frame camera schedule for one clip. `seed` identifies the
/// panorama, so all rotation segments of one panorama share a base yaw and
/// focal length.
pub fn build_camera_path(
    pattern: MotionPattern,
    pano: &Panorama,
    seed: u64,
    frame_count: usize,
) -> Result<CameraPath> {
    pattern.validate()?;
    if frame_count == 0 {
        return Err(PanoError::Path("frame count must be >= 1".into()));
    }
    let path = match pattern {
        MotionPattern::HighlightZoom | MotionPattern::ShadowZoom => {
            let mode = if pattern == MotionPattern::HighlightZoom {
                Extreme::Brightest
            } else {
                Extreme::Darkest
            };
            let mut pose = CameraPose::looking_at(pano.find_extreme_direction(mode));
            let pitch_clamped = pose.pitch.abs() > MAX_AIM_PITCH;
            pose.pitch = pose.pitch.clamp(-MAX_AIM_PITCH, MAX_AIM_PITCH);
            let mut rng = seeded_chacha(seed, &[label("zoom"), label(&pattern.slug())]);
            let (start, end) = sample_zoom_focals(&mut rng);
            CameraPath {
                poses: vec![pose; frame_count],
                focals: lerp_schedule(start, end, frame_count),
                pattern,
                seed,
                pitch_clamped,
            }
        }
        MotionPattern::RotationSegment(i) => {
            let (base, focal) = sample_rotation_setup(seed);
            let (start, end) = MotionPattern::segment_yaw_range(base, i);
            let poses = lerp_schedule(start, end, frame_count)
                .into_iter()
                .map(|yaw| CameraPose { yaw, pitch: 0.0 })
                .collect();
            CameraPath {
                poses,
                focals: vec![focal; frame_count],
                pattern,
                seed,
                pitch_clamped: false,
            }
        }
    };
    path.validate()?;
    Ok(path)
}

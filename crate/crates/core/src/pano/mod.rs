//! Equirectangular panoramas and the clip renderer that stands in for a
//! full 3D renderer: the camera sits at the origin, the panorama is the
//! skybox, and every output pixel is one ray looked up in the map.
//!
//! Direction convention: `-Z` is forward at yaw 0, `+Y` is up, yaw grows
//! toward `+X`. Longitude `atan2(x, -z)` maps to `u = (lon / 2pi + 0.5) W`
//! and latitude `asin(y)` to `v = (0.5 - lat / pi) H`.

use std::f64::consts::{PI, TAU};

use thiserror::Error;

use crate::color::luminance_709_f32;
use crate::image::ImageF32;

pub mod camera;
pub mod procedural;
pub mod render;

pub use camera::{build_camera_path, CameraPath, CameraPose, MotionPattern};
pub use render::render_clip;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PanoError {
    #[error("panorama must be 2:1, got {width}x{height}")]
    Aspect { width: usize, height: usize },
    #[error("panorama radiance must be >= 0 (found {0})")]
    NegativeRadiance(f32),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid camera path: {0}")]
    Path(String),
}

pub type Result<T> = std::result::Result<T, PanoError>;

pub type Vec3 = [f64; 3];

pub(crate) fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(crate) fn normalize(v: Vec3) -> Option<Vec3> {
    let n = dot(v, v).sqrt();
    (n > 0.0 && n.is_finite()).then(|| [v[0] / n, v[1] / n, v[2] / n])
}

/// Full-sphere HDR environment map in linear radiance.
#[derive(Debug, Clone, PartialEq)]
pub struct Panorama {
    /// Identifier recorded in clip provenance (usually the source file stem).
    pub id: String,
    image: ImageF32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extreme {
    Brightest,
    Darkest,
}

/// Box-downsampling factor applied to luminance before picking extremes.
pub const EXTREME_CELL: usize = 16;

impl Panorama {
    pub fn new(id: impl Into<String>, image: ImageF32) -> Result<Self> {
        if image.width() != 2 * image.height() {
            return Err(PanoError::Aspect {
                width: image.width(),
                height: image.height(),
            });
        }
        if let Some(v) = image.data().iter().find(|v| **v < 0.0) {
            return Err(PanoError::NegativeRadiance(*v));
        }
        Ok(Self {
            id: id.into(),
            image,
        })
    }

    pub fn image(&self) -> &ImageF32 {
        &self.image
    }

    pub fn width(&self) -> usize {
        self.image.width()
    }

    pub fn height(&self) -> usize {
        self.image.height()
    }

    /// Continuous texel coordinates `(u, v)` of a unit direction.
    pub fn direction_to_uv(&self, d: Vec3) -> (f64, f64) {
        let lon = d[0].atan2(-d[2]);
        let lat = d[1].clamp(-1.0, 1.0).asin();
        (
            (lon / TAU + 0.5) * self.width() as f64,
            (0.5 - lat / PI) * self.height() as f64,
        )
    }

    /// Unit direction for continuous texel coordinates.
    pub fn uv_to_direction(&self, u: f64, v: f64) -> Vec3 {
        let lon = (u / self.width() as f64 - 0.5) * TAU;
        let lat = (0.5 - v / self.height() as f64) * PI;
        [lat.cos() * lon.sin(), lat.sin(), -lat.cos() * lon.cos()]
    }

    /// Bilinear lookup with longitude wrap-around and latitude clamping.
    pub fn sample(&self, direction: Vec3) -> Result<[f32; 3]> {
        let d = normalize(direction).ok_or_else(|| {
            PanoError::Domain(format!("cannot sample along direction {direction:?}"))
        })?;
        let (u, v) = self.direction_to_uv(d);
        Ok(self.sample_uv(u, v))
    }

    pub(crate) fn sample_uv(&self, u: f64, v: f64) -> [f32; 3] {
        let (w, h) = (self.width(), self.height());
        let x = u - 0.5;
        let y = (v - 0.5).clamp(0.0, (h - 1) as f64);
        let x0f = x.floor();
        let y0f = y.floor();
        let fx = x - x0f;
        let fy = y - y0f;
        let x0 = (x0f as i64).rem_euclid(w as i64) as usize;
        let x1 = (x0 + 1) % w;
        let y0 = y0f as usize;
        let y1 = (y0 + 1).min(h - 1);
        let p00 = self.image.pixel(x0, y0);
        let p10 = self.image.pixel(x1, y0);
        let p01 = self.image.pixel(x0, y1);
        let p11 = self.image.pixel(x1, y1);
        std::array::from_fn(|c| {
            let top = p00[c] as f64 * (1.0 - fx) + p10[c] as f64 * fx;
            let bottom = p01[c] as f64 * (1.0 - fx) + p11[c] as f64 * fx;
            (top * (1.0 - fy) + bottom * fy) as f32
        })
    }

    /// Direction of the brightest or darkest region, after area-averaging
    /// luminance over `EXTREME_CELL`-sized cells. Ties go to the first cell
    /// in row-major order.
    pub fn find_extreme_direction(&self, mode: Extreme) -> Vec3 {
        self.find_extreme_direction_with_cell(mode, EXTREME_CELL)
    }

    pub fn find_extreme_direction_with_cell(&self, mode: Extreme, cell: usize) -> Vec3 {
        let (cx, cy) = self.extreme_cell(mode, cell);
        let (w, h) = (self.width(), self.height());
        let x_lo = cx * cell;
        let x_hi = (x_lo + cell).min(w);
        let y_lo = cy * cell;
        let y_hi = (y_lo + cell).min(h);
        self.uv_to_direction((x_lo + x_hi) as f64 / 2.0, (y_lo + y_hi) as f64 / 2.0)
    }

    /// Cell indices `(column, row)` of the extreme downsampled cell.
    pub fn extreme_cell(&self, mode: Extreme, cell: usize) -> (usize, usize) {
        let cell = cell.max(1);
        let (w, h) = (self.width(), self.height());
        let cols = w.div_ceil(cell);
        let rows = h.div_ceil(cell);
        let mut sums = vec![0.0f64; cols * rows];
        let mut counts = vec![0usize; cols * rows];
        for (y, row) in self.image.rows().enumerate() {
            for (x, px) in row.chunks_exact(3).enumerate() {
                let i = (y / cell) * cols + x / cell;
                sums[i] += luminance_709_f32(px);
                counts[i] += 1;
            }
        }
        let mut best = 0;
        let mut best_val = sums[0] / counts[0] as f64;
        for i in 1..sums.len() {
            let v = sums[i] / counts[i] as f64;
            let better = match mode {
                Extreme::Brightest => v > best_val,
                Extreme::Darkest => v < best_val,
            };
            if better {
                best = i;
                best_val = v;
            }
        }
        (best % cols, best / cols)
    }
}

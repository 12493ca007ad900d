//! Seeded synthetic panoramas with known highlights and shadows, used when
//! no HDRI files are available and as test fixtures.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Panorama, Result};
use crate::image::ImageF32;
use crate::rng::{label, seeded_chacha};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SunTint {
    Warm,
    White,
    Cool,
}

impl SunTint {
    fn rgb(self) -> [f32; 3] {
        match self {
            SunTint::Warm => [1.0, 0.78, 0.5],
            SunTint::White => [1.0, 1.0, 1.0],
            SunTint::Cool => [0.75, 0.85, 1.0],
        }
    }

    pub fn word(self) -> &'static str {
        match self {
            SunTint::Warm => "warm",
            SunTint::White => "white",
            SunTint::Cool => "cool",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OccluderKind {
    Rocks,
    Trees,
    Cliffs,
}

impl OccluderKind {
    pub fn word(self) -> &'static str {
        match self {
            OccluderKind::Rocks => "rocks",
            OccluderKind::Trees => "trees",
            OccluderKind::Cliffs => "cliffs",
        }
    }
}

/// A generated panorama with the facts needed to caption it.
#[derive(Debug, Clone)]
pub struct ProceduralScene {
    pub panorama: Panorama,
    pub tint: SunTint,
    pub occluder: OccluderKind,
    pub sun_count: usize,
}

impl ProceduralScene {
    pub fn global_caption(&self) -> String {
        format!(
            "an outdoor landscape with a bright sky above and dark {} on the ground",
            self.occluder.word()
        )
    }

    pub fn over_caption(&self) -> String {
        format!("{} sun disk glowing in the sky", self.tint.word())
    }

    pub fn under_caption(&self) -> String {
        format!("dark {} in deep shadow", self.occluder.word())
    }
}

struct Disk {
    lon: f64,
    lat: f64,
    radius: f64,
    radiance: f32,
}

fn angular_distance(lon_a: f64, lat_a: f64, lon_b: f64, lat_b: f64) -> f64 {
    let c = lat_a.sin() * lat_b.sin() + lat_a.cos() * lat_b.cos() * (lon_a - lon_b).cos();
    c.clamp(-1.0, 1.0).acos()
}

/// Builds a `width x width/2` panorama from `seed`: a sky gradient, one to
/// three sun disks of radiance 8 to 40, and near-black occluders below the
/// horizon.
pub fn procedural_panorama(seed: u64, width: usize) -> Result<ProceduralScene> {
    let height = (width / 2).max(1);
    let width = height * 2;
    let mut rng = seeded_chacha(seed, &[label("procedural")]);
    let tint = [SunTint::Warm, SunTint::White, SunTint::Cool][rng.gen_range(0..3)];
    let occluder = [OccluderKind::Rocks, OccluderKind::Trees, OccluderKind::Cliffs][rng.gen_range(0..3)];
    let sky_top = rng.gen_range(0.4f32..1.2);
    let ground = rng.gen_range(0.05f32..0.2);
    let sun_count = rng.gen_range(1..=3);
    let disks: Vec<Disk> = (0..sun_count)
        .map(|_| Disk {
            lon: rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
            lat: rng.gen_range(0.1..1.1),
            radius: rng.gen_range(0.12..0.25),
            radiance: rng.gen_range(8.0f32..40.0),
        })
        .collect();
    let occluders: Vec<Disk> = (0..rng.gen_range(2..=4))
        .map(|_| Disk {
            lon: rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
            lat: rng.gen_range(-0.9..-0.15),
            radius: rng.gen_range(0.3..0.5),
            radiance: 0.005,
        })
        .collect();
    let sun_rgb = tint.rgb();
    let image = ImageF32::from_fn(width, height, |x, y| {
        let lon = ((x as f64 + 0.5) / width as f64 - 0.5) * std::f64::consts::TAU;
        let lat = (0.5 - (y as f64 + 0.5) / height as f64) * std::f64::consts::PI;
        let mut rgb = if lat >= 0.0 {
            let t = (lat / std::f64::consts::FRAC_PI_2) as f32;
            let l = 0.35 + (sky_top - 0.35) * t;
            [l * 0.7, l * 0.85, l]
        } else {
            let ripple = 1.0 + 0.3 * ((lon * 7.0).sin() * (lat * 11.0).cos()) as f32;
            [ground * ripple, ground * 0.8 * ripple, ground * 0.6 * ripple]
        };
        for d in &disks {
            let dist = angular_distance(lon, lat, d.lon, d.lat);
            if dist < d.radius {
                let falloff = 1.0 - (dist / d.radius).powi(4) as f32;
                for c in 0..3 {
                    rgb[c] = rgb[c].max(d.radiance * sun_rgb[c] * falloff);
                }
            }
        }
        for o in &occluders {
            let shape = match occluder {
                OccluderKind::Trees => ((lon - o.lon).abs() * 3.0).hypot(lat - o.lat),
                OccluderKind::Cliffs => (lon - o.lon).abs().hypot((lat - o.lat) * 3.0),
                OccluderKind::Rocks => angular_distance(lon, lat, o.lon, o.lat),
            };
            if shape < o.radius {
                rgb = [o.radiance, o.radiance * 0.9, o.radiance * 0.8];
            }
        }
        rgb
    });
    Ok(ProceduralScene {
        panorama: Panorama::new(format!("procedural_{seed:04}"), image)?,
        tint,
        occluder,
        sun_count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::color::luminance_709;
    use crate::pano::Extreme;

    #[test]
    fn deterministic_and_valid() {
        let a = procedural_panorama(3, 128).unwrap();
        let b = procedural_panorama(3, 128).unwrap();
        assert_eq!(a.panorama, b.panorama);
        assert_eq!(a.panorama.width(), 128);
        assert_eq!(a.panorama.height(), 64);
        assert_ne!(procedural_panorama(4, 128).unwrap().panorama, a.panorama);
    }

    #[test]
    fn extremes_land_on_sun_and_occluder() {
        for seed in 0..5 {
            let s = procedural_panorama(seed, 512).unwrap();
            let p = &s.panorama;
            let lum = |d| {
                let c = p.sample(d).unwrap();
                luminance_709([c[0] as f64, c[1] as f64, c[2] as f64])
            };
            assert!(lum(p.find_extreme_direction(Extreme::Brightest)) > 2.0);
            assert!(lum(p.find_extreme_direction(Extreme::Darkest)) < 0.05);
        }
    }

    #[test]
    fn captions_mention_scene() {
        let s = procedural_panorama(1, 64).unwrap();
        assert!(s.over_caption().contains(s.tint.word()));
        assert!(s.under_caption().contains(s.occluder.word()));
    }
}

//! PSNR/SSIM scores and radiance-range statistics.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::color::luminance_709_f32;
use crate::image::{ImageF32, VideoClip};
use crate::mask::ExposureMasks;

pub const SSIM_WINDOW: usize = 8;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
pub const LUMINANCE_FLOOR: f64 = 1e-8;
/// Histogram bins per stop.
pub const BINS_PER_STOP: f64 = 4.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("data range must be > 0, got {0}")]
    Range(f64),
}

pub type Result<T> = std::result::Result<T, MetricsError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameScore {
    /// Decibels; `inf` for identical inputs (serialized as `null` in JSON).
    pub psnr: f64,
    pub ssim: f64,
}

fn check_pair(a: &ImageF32, b: &ImageF32, range: f64) -> Result<()> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(MetricsError::Shape(format!(
            "{}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    if !(range > 0.0 && range.is_finite()) {
        return Err(MetricsError::Range(range));
    }
    Ok(())
}

pub fn psnr_from_mse(mse: f64, range: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (range * range / mse).log10()
    }
}

pub fn mse(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (f64::from(*x) - f64::from(*y)).powi(2))
        .sum::<f64>()
        / a.len() as f64
}

pub fn psnr(a: &ImageF32, b: &ImageF32, range: f64) -> Result<f64> {
    check_pair(a, b, range)?;
    Ok(psnr_from_mse(mse(a.data(), b.data()), range))
}

/// PSNR restricted to pixels whose weight is positive; each weight scales
/// that pixel's three squared errors. Returns `None` when no pixel is
/// selected.
pub fn psnr_weighted(a: &[f32], b: &[f32], weights: &[f32], range: f64) -> Option<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for ((pa, pb), &w) in a.chunks_exact(3).zip(b.chunks_exact(3)).zip(weights) {
        if w > 0.0 {
            let w = f64::from(w);
            for c in 0..3 {
                num += w * (f64::from(pa[c]) - f64::from(pb[c])).powi(2);
            }
            den += 3.0 * w;
        }
    }
    (den > 0.0).then(|| psnr_from_mse(num / den, range))
}

/// Single-scale SSIM with uniform `8x8` windows at stride 1, averaged over
/// windows and channels. Images smaller than the window use one window
/// covering the whole image.
pub fn ssim(a: &ImageF32, b: &ImageF32, range: f64) -> Result<f64> {
    check_pair(a, b, range)?;
    let (w, h) = (a.width(), a.height());
    let (ww, wh) = (SSIM_WINDOW.min(w), SSIM_WINDOW.min(h));
    let c1 = (SSIM_K1 * range).powi(2);
    let c2 = (SSIM_K2 * range).powi(2);
    let n = (ww * wh) as f64;
    let total: f64 = (0..=h - wh)
        .into_par_iter()
        .map(|y0| {
            let mut acc = 0.0;
            for x0 in 0..=w - ww {
                for c in 0..3 {
                    let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                    for y in y0..y0 + wh {
                        for x in x0..x0 + ww {
                            let i = (y * w + x) * 3 + c;
                            let (p, q) = (f64::from(a.data()[i]), f64::from(b.data()[i]));
                            sa += p;
                            sb += q;
                            saa += p * p;
                            sbb += q * q;
                            sab += p * q;
                        }
                    }
                    let (ma, mb) = (sa / n, sb / n);
                    let va = saa / n - ma * ma;
                    let vb = sbb / n - mb * mb;
                    let cov = sab / n - ma * mb;
                    acc += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                        / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                }
            }
            acc
        })
        .sum();
    Ok(total / ((h - wh + 1) * (w - ww + 1) * 3) as f64)
}

pub fn frame_metrics(a: &ImageF32, b: &ImageF32, range: f64) -> Result<FrameScore> {
    Ok(FrameScore {
        psnr: psnr(a, b, range)?,
        ssim: ssim(a, b, range)?,
    })
}

/// Per-frame scores and their means over a pair of clips.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipScore {
    pub frames: Vec<FrameScore>,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
}

pub fn clip_metrics(a: &VideoClip, b: &VideoClip, range: f64) -> Result<ClipScore> {
    if a.frame_count() != b.frame_count() {
        return Err(MetricsError::Shape(format!(
            "{} frames vs {} frames",
            a.frame_count(),
            b.frame_count()
        )));
    }
    let frames = a
        .frames
        .iter()
        .zip(&b.frames)
        .map(|(x, y)| frame_metrics(x, y, range))
        .collect::<Result<Vec<_>>>()?;
    let n = frames.len() as f64;
    Ok(ClipScore {
        mean_psnr: frames.iter().map(|s| s.psnr).sum::<f64>() / n,
        mean_ssim: frames.iter().map(|s| s.ssim).sum::<f64>() / n,
        frames,
    })
}

/// Histogram of `log2` luminance in quarter-stop bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHistogram {
    pub bins_per_stop: f64,
    /// Index of the first bin: bin `k` covers `[k, k + 1) / bins_per_stop` stops.
    pub first_bin: i64,
    pub counts: Vec<u64>,
}

impl LogHistogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadianceStats {
    pub histogram: LogHistogram,
    /// Stops between the 0.1% and 99.9% luminance percentiles.
    pub dynamic_range: f64,
    pub p001: f64,
    pub p999: f64,
    pub over_frac: Option<f64>,
    pub under_frac: Option<f64>,
    /// Unique RGB values along the middle scanline of the first frame.
    pub distinct_levels: usize,
}

/// Nearest-rank percentile of sorted data, `p` in `[0, 1]`.
pub fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let rank = (p * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

/// Unique RGB triples along row `y`.
pub fn distinct_levels(image: &ImageF32, y: usize) -> usize {
    let row = &image.data()[y * image.width() * 3..(y + 1) * image.width() * 3];
    row.chunks_exact(3)
        .map(|p| [p[0].to_bits(), p[1].to_bits(), p[2].to_bits()])
        .collect::<BTreeSet<_>>()
        .len()
}

fn mask_mean(frames: &[Vec<f32>]) -> f64 {
    let (sum, n) = frames.iter().fold((0.0, 0usize), |(s, n), f| {
        (s + f.iter().map(|&v| f64::from(v)).sum::<f64>(), n + f.len())
    });
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

pub fn radiance_stats(clip: &VideoClip, masks: Option<&ExposureMasks>) -> RadianceStats {
    let mut lum: Vec<f64> = clip
        .frames
        .par_iter()
        .flat_map_iter(|f| {
            f.data()
                .chunks_exact(3)
                .map(|p| luminance_709_f32(p).max(LUMINANCE_FLOOR))
                .collect::<Vec<_>>()
        })
        .collect();
    lum.sort_by(f64::total_cmp);
    let bin = |y: f64| (y.log2() * BINS_PER_STOP).floor() as i64;
    let first_bin = bin(lum[0]);
    let last_bin = bin(lum[lum.len() - 1]);
    let mut counts = vec![0u64; (last_bin - first_bin + 1) as usize];
    for &y in &lum {
        counts[(bin(y) - first_bin) as usize] += 1;
    }
    let p001 = percentile_sorted(&lum, 0.001);
    let p999 = percentile_sorted(&lum, 0.999);
    RadianceStats {
        histogram: LogHistogram {
            bins_per_stop: BINS_PER_STOP,
            first_bin,
            counts,
        },
        dynamic_range: (p999 / p001).log2(),
        p001,
        p999,
        over_frac: masks.map(|m| mask_mean(&m.over)),
        under_frac: masks.map(|m| mask_mean(&m.under)),
        distinct_levels: distinct_levels(&clip.frames[0], clip.height() / 2),
    }
}

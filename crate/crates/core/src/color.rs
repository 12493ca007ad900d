//! Per-pixel color transforms.
//!
//! Everything here is a pure scalar function lifted over images: the sRGB
//! transfer curves, Rec.709 luminance, exposure scaling in stops, the
//! Log-Gamma radiance coding and its inverse, display tone mapping, and a
//! bfloat16 rounding emulation used to study banding.
//!
//! Scalar routines work in `f64` so that roundtrip tolerances hold well
//! below `f32` resolution; image-level wrappers store `f32`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::{Colorspace, ImageF32, VideoClip};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ColorError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("radiance {value} exceeds the representable maximum {max}; clamp explicitly first")]
    OutOfGamut { value: f64, max: f64 },
    #[error("expected {expected:?} input, got {actual:?}")]
    Colorspace {
        expected: Colorspace,
        actual: Colorspace,
    },
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
}

pub type Result<T> = std::result::Result<T, ColorError>;

/// Rec.709 luma coefficients for linear RGB.
pub const REC709_LUMA: [f64; 3] = [0.2126, 0.7152, 0.0722];

const SRGB_LINEAR_BREAK: f64 = 0.003_130_8;
const SRGB_ENCODED_BREAK: f64 = 0.040_45;

/// Linear light to sRGB-encoded value. Values above 1 follow the power branch.
pub fn srgb_encode(linear: f64) -> Result<f64> {
    if !(linear >= 0.0) {
        return Err(ColorError::Domain(format!(
            "sRGB encode expects a non-negative value, got {linear}"
        )));
    }
    Ok(if linear <= SRGB_LINEAR_BREAK {
        12.92 * linear
    } else {
        1.055 * linear.powf(1.0 / 2.4) - 0.055
    })
}

/// sRGB-encoded value to linear light.
pub fn srgb_decode(encoded: f64) -> Result<f64> {
    if !(encoded >= 0.0) {
        return Err(ColorError::Domain(format!(
            "sRGB decode expects a non-negative value, got {encoded}"
        )));
    }
    Ok(if encoded <= SRGB_ENCODED_BREAK {
        encoded / 12.92
    } else {
        ((encoded + 0.055) / 1.055).powf(2.4)
    })
}

pub fn luminance_709(rgb: [f64; 3]) -> f64 {
    REC709_LUMA[0] * rgb[0] + REC709_LUMA[1] * rgb[1] + REC709_LUMA[2] * rgb[2]
}

pub(crate) fn luminance_709_f32(rgb: &[f32]) -> f64 {
    luminance_709([rgb[0] as f64, rgb[1] as f64, rgb[2] as f64])
}

/// Gain for an exposure change of `stops`.
pub fn exposure_gain(stops: f64) -> f64 {
    stops.exp2()
}

/// Scales every sample by `2^stops` and accumulates the offset in metadata.
pub fn apply_exposure(clip: &VideoClip, stops: f64) -> Result<VideoClip> {
    let mut out = clip.clone();
    apply_exposure_in_place(&mut out, stops)?;
    Ok(out)
}

pub fn apply_exposure_in_place(clip: &mut VideoClip, stops: f64) -> Result<()> {
    if clip.meta.colorspace != Colorspace::LinearRec709 {
        return Err(ColorError::Colorspace {
            expected: Colorspace::LinearRec709,
            actual: clip.meta.colorspace,
        });
    }
    if !stops.is_finite() {
        return Err(ColorError::Domain(format!("exposure offset {stops} is not finite")));
    }
    let gain = exposure_gain(stops) as f32;
    for frame in &mut clip.frames {
        for v in frame.data_mut() {
            *v *= gain;
        }
    }
    clip.meta.exposure_offset += stops;
    Ok(())
}

/// Decodes an sRGB clip to linear Rec.709, keeping its metadata.
pub fn linearize_srgb_clip(clip: &VideoClip) -> Result<VideoClip> {
    expect_colorspace(clip, Colorspace::Srgb8)?;
    let mut out = clip.clone();
    for frame in &mut out.frames {
        for v in frame.data_mut() {
            *v = srgb_decode(f64::from(*v))? as f32;
        }
    }
    out.meta.colorspace = Colorspace::LinearRec709;
    Ok(out)
}

/// Parameters of the Log-Gamma radiance coding.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LogGammaParams {
    pub gamma: f64,
    /// Maximum representable radiance; maps to code value 1.
    pub max_radiance: f64,
}

impl Default for LogGammaParams {
    fn default() -> Self {
        Self {
            gamma: 2.2,
            max_radiance: 64.0,
        }
    }
}

impl LogGammaParams {
    pub fn new(gamma: f64, max_radiance: f64) -> Result<Self> {
        let p = Self {
            gamma,
            max_radiance,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(ColorError::InvalidParams(format!(
                "gamma must be finite and > 0, got {}",
                self.gamma
            )));
        }
        if !(self.max_radiance.is_finite() && self.max_radiance > 0.0) {
            return Err(ColorError::InvalidParams(format!(
                "max radiance must be finite and > 0, got {}",
                self.max_radiance
            )));
        }
        Ok(())
    }

    fn log_span(&self) -> f64 {
        (self.gamma * self.max_radiance).ln_1p()
    }

    /// Linear radiance in `[0, M]` to a code value in `[0, 1]`.
    pub fn forward(&self, x: f64) -> Result<f64> {
        if !(x >= 0.0) {
            return Err(ColorError::Domain(format!(
                "Log-Gamma forward expects radiance >= 0, got {x}"
            )));
        }
        if x > self.max_radiance {
            return Err(ColorError::OutOfGamut {
                value: x,
                max: self.max_radiance,
            });
        }
        let ratio = (self.gamma * x).ln_1p() / self.log_span();
        Ok(ratio.powf(1.0 / self.gamma).min(1.0))
    }

    /// Code value in `[0, 1]` back to linear radiance.
    pub fn inverse(&self, y: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&y) {
            return Err(ColorError::Domain(format!(
                "Log-Gamma inverse expects a code value in [0, 1], got {y}"
            )));
        }
        // exp_m1 keeps precision for small code values.
        Ok((y.powf(self.gamma) * self.log_span()).exp_m1() / self.gamma)
    }

    /// Forward mapping that clamps to `[0, M]` first.
    pub fn forward_clamped(&self, x: f64) -> f64 {
        let x = if x.is_nan() { 0.0 } else { x.clamp(0.0, self.max_radiance) };
        self.forward(x).expect("clamped radiance is in range")
    }

    /// Inverse mapping that clamps the code value to `[0, 1]` first.
    pub fn inverse_clamped(&self, y: f64) -> f64 {
        let y = if y.is_nan() { 0.0 } else { y.clamp(0.0, 1.0) };
        self.inverse(y).expect("clamped code value is in range")
    }
}

/// Log-Gamma encodes a linear clip. With `clamp` set, radiance above `M`
/// (and any negative noise residue) is clamped instead of rejected.
pub fn log_gamma_encode_clip(
    clip: &VideoClip,
    params: LogGammaParams,
    clamp: bool,
) -> Result<VideoClip> {
    params.validate()?;
    expect_colorspace(clip, Colorspace::LinearRec709)?;
    let mut out = clip.clone();
    for frame in &mut out.frames {
        for v in frame.data_mut() {
            let x = *v as f64;
            *v = if clamp {
                params.forward_clamped(x)
            } else {
                params.forward(x)?
            } as f32;
        }
    }
    out.meta.colorspace = Colorspace::LogGamma;
    out.meta.log_gamma = Some(params);
    Ok(out)
}

/// Inverse of [`log_gamma_encode_clip`] using the parameters carried by the clip.
pub fn log_gamma_decode_clip(clip: &VideoClip) -> Result<VideoClip> {
    expect_colorspace(clip, Colorspace::LogGamma)?;
    let params = clip.meta.log_gamma.ok_or_else(|| {
        ColorError::InvalidParams("Log-Gamma clip carries no gamma/M parameters".into())
    })?;
    let mut out = clip.clone();
    for frame in &mut out.frames {
        for v in frame.data_mut() {
            *v = params.inverse(*v as f64)? as f32;
        }
    }
    out.meta.colorspace = Colorspace::LinearRec709;
    out.meta.log_gamma = None;
    Ok(out)
}

fn expect_colorspace(clip: &VideoClip, expected: Colorspace) -> Result<()> {
    if clip.meta.colorspace != expected {
        return Err(ColorError::Colorspace {
            expected,
            actual: clip.meta.colorspace,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum ToneOperator {
    /// `L / (1 + L)` on luminance, chroma ratios preserved.
    Reinhard,
    /// `log(1 + mu x) / log(1 + mu)` per channel.
    MuLaw { mu: f64 },
}

impl ToneOperator {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ToneOperator::Reinhard => Ok(()),
            ToneOperator::MuLaw { mu } if mu.is_finite() && mu > 0.0 => Ok(()),
            ToneOperator::MuLaw { mu } => Err(ColorError::InvalidParams(format!(
                "mu-law strength must be finite and > 0, got {mu}"
            ))),
        }
    }

    /// Tone maps one linear RGB triple into `[0, 1]`.
    pub fn map_rgb(&self, rgb: [f64; 3]) -> Result<[f64; 3]> {
        if rgb.iter().any(|c| !(*c >= 0.0)) {
            return Err(ColorError::Domain(format!(
                "tone mapping expects non-negative radiance, got {rgb:?}"
            )));
        }
        Ok(match *self {
            ToneOperator::Reinhard => {
                let y = luminance_709(rgb);
                if y <= 0.0 {
                    [0.0; 3]
                } else {
                    // c * (Y / (1 + Y)) / Y
                    let scale = 1.0 / (1.0 + y);
                    rgb.map(|c| (c * scale).min(1.0))
                }
            }
            ToneOperator::MuLaw { mu } => {
                let denom = mu.ln_1p();
                rgb.map(|c| ((mu * c).ln_1p() / denom).min(1.0))
            }
        })
    }

    /// Reinhard curve on a luminance value.
    pub fn reinhard_luminance(y: f64) -> f64 {
        y / (1.0 + y)
    }
}

impl std::str::FromStr for ToneOperator {
    type Err = ColorError;

    /// Parses `reinhard` or `mulaw:<mu>`.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        if lower == "reinhard" {
            return Ok(ToneOperator::Reinhard);
        }
        if let Some(mu) = lower.strip_prefix("mulaw:") {
            let mu: f64 = mu
                .parse()
                .map_err(|_| ColorError::InvalidParams(format!("bad mu-law strength '{mu}'")))?;
            let op = ToneOperator::MuLaw { mu };
            op.validate()?;
            return Ok(op);
        }
        Err(ColorError::InvalidParams(format!(
            "unknown tone operator '{s}' (expected reinhard or mulaw:<mu>)"
        )))
    }
}

pub fn tonemap_image(image: &ImageF32, op: ToneOperator) -> Result<ImageF32> {
    op.validate()?;
    let mut out = image.clone();
    for px in out.data_mut().chunks_exact_mut(3) {
        let mapped = op.map_rgb([px[0] as f64, px[1] as f64, px[2] as f64])?;
        for (dst, v) in px.iter_mut().zip(mapped) {
            *dst = v as f32;
        }
    }
    Ok(out)
}

/// Tone maps a linear clip; the result is display-linear in `[0, 1]`.
pub fn tonemap_clip(clip: &VideoClip, op: ToneOperator) -> Result<VideoClip> {
    expect_colorspace(clip, Colorspace::LinearRec709)?;
    let frames = clip
        .frames
        .iter()
        .map(|f| tonemap_image(f, op))
        .collect::<Result<Vec<_>>>()?;
    let mut out = clip.clone();
    out.frames = frames;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StorageFormat {
    Bf16,
    F32,
}

/// Rounds an `f32` to the nearest bfloat16 (ties to even) and widens it back.
pub fn round_to_bf16(x: f32) -> f32 {
    if x.is_nan() {
        return x;
    }
    let bits = x.to_bits();
    let lsb = (bits >> 16) & 1;
    let rounded = bits.wrapping_add(0x7FFF + lsb) & 0xFFFF_0000;
    f32::from_bits(rounded)
}

pub fn emulate_reduced_precision(image: &ImageF32, format: StorageFormat) -> ImageF32 {
    let mut out = image.clone();
    if format == StorageFormat::Bf16 {
        for v in out.data_mut() {
            *v = round_to_bf16(*v);
        }
    }
    out
}

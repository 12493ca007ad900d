//! LDR formation from linear HDR clips: exposure shift, temporally
//! correlated signal-dependent sensor noise, sRGB encoding, clipping and
//! 8-bit quantization.
//!
//! Noise for sample `i` (pixel-major, channel-minor) is
//! `sqrt(L * sigma_s^2 + sigma_c^2) * eps_t[i]`, where `eps` follows a
//! stationary AR(1) chain over frames. Each chain draws from its own
//! counter stream keyed by `(seed, i)`, so results do not depend on how the
//! work is split across threads.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::color::{apply_exposure_in_place, srgb_encode, ColorError};
use crate::hdr_io::Rgb8Image;
use crate::image::{ClipMetadata, Colorspace, ImageF32, VideoClip};
use crate::rng::{derive_key, label, seeded_chacha, CounterRng};

pub const DELTA_RANGE: (f64, f64) = (-2.0, 2.0);
pub const SIGMA_S_MAX: f64 = 8.5e-4;
pub const SIGMA_C_MAX: f64 = 1.5e-5;
pub const DEFAULT_RHO: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DegradeError {
    #[error("invalid degradation parameters: {0}")]
    Params(String),
    #[error("expected a linear Rec.709 clip, got {0:?}")]
    Colorspace(Colorspace),
    #[error("negative radiance {value} at frame {frame}")]
    NegativeRadiance { frame: usize, value: f32 },
    #[error(transparent)]
    Color(#[from] ColorError),
}

pub type Result<T> = std::result::Result<T, DegradeError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegradeParams {
    /// Exposure offset in stops.
    pub delta: f64,
    pub sigma_s: f64,
    pub sigma_c: f64,
    pub rho: f64,
    /// Keys the noise streams.
    pub seed: u64,
}

impl DegradeParams {
    /// Parameters with both noise terms switched off.
    pub fn noiseless(delta: f64, seed: u64) -> Self {
        Self {
            delta,
            sigma_s: 0.0,
            sigma_c: 0.0,
            rho: DEFAULT_RHO,
            seed,
        }
    }

    /// Accepts the closed ranges so that the interval maxima (and zero, for
    /// noiseless runs) can be requested explicitly.
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, what: String| if ok { Ok(()) } else { Err(DegradeError::Params(what)) };
        check(
            (DELTA_RANGE.0..=DELTA_RANGE.1).contains(&self.delta),
            format!("delta {} outside [-2, 2]", self.delta),
        )?;
        check(
            (0.0..=SIGMA_S_MAX).contains(&self.sigma_s),
            format!("sigma_s {} outside [0, {SIGMA_S_MAX}]", self.sigma_s),
        )?;
        check(
            (0.0..=SIGMA_C_MAX).contains(&self.sigma_c),
            format!("sigma_c {} outside [0, {SIGMA_C_MAX}]", self.sigma_c),
        )?;
        check(
            (0.0..1.0).contains(&self.rho),
            format!("rho {} outside [0, 1)", self.rho),
        )
    }

    pub fn is_noiseless(&self) -> bool {
        self.sigma_s == 0.0 && self.sigma_c == 0.0
    }
}

fn open_unit_scaled<R: Rng>(rng: &mut R, max: f64) -> f64 {
    loop {
        let v: f64 = rng.gen::<f64>() * max;
        if v > 0.0 && v < max {
            return v;
        }
    }
}

/// Draws `delta ~ U[-2, 2]`, `sigma_s ~ U(0, 8.5e-4)`, `sigma_c ~ U(0, 1.5e-5)`
/// with `rho = 0.5`. The noise seed is derived from `seed`.
pub fn sample_degrade_params(seed: u64) -> DegradeParams {
    let mut rng = seeded_chacha(seed, &[label("degrade")]);
    let delta = rng.gen_range(DELTA_RANGE.0..=DELTA_RANGE.1);
    let sigma_s = open_unit_scaled(&mut rng, SIGMA_S_MAX);
    let sigma_c = open_unit_scaled(&mut rng, SIGMA_C_MAX);
    DegradeParams {
        delta,
        sigma_s,
        sigma_c,
        rho: DEFAULT_RHO,
        seed: derive_key(seed, &[label("noise-seed")]),
    }
}

/// Standard-normal field evolving as `eps_t = rho * eps_{t-1} + sqrt(1 - rho^2) * u_t`.
#[derive(Debug, Clone)]
pub struct NoiseField {
    seed: u64,
    rho: f64,
    t: u64,
    eps: Vec<f64>,
}

impl NoiseField {
    /// Field of `len` independent chains, initialised with `eps_0 ~ N(0, I)`.
    pub fn new(seed: u64, rho: f64, len: usize) -> Self {
        let base = derive_key(seed, &[label("eps")]);
        let mut eps = vec![0.0; len];
        eps.par_iter_mut().enumerate().with_min_len(4096).for_each(|(i, e)| {
            *e = CounterRng::new(derive_key(base, &[i as u64])).normal(0);
        });
        Self { seed: base, rho, t: 0, eps }
    }

    pub fn frame(&self) -> usize {
        self.t as usize
    }

    pub fn eps(&self) -> &[f64] {
        &self.eps
    }

    /// Advances every chain by one frame.
    pub fn advance(&mut self) {
        self.t += 1;
        let (rho, t, base) = (self.rho, self.t, self.seed);
        let innov = (1.0 - rho * rho).sqrt();
        self.eps.par_iter_mut().enumerate().with_min_len(4096).for_each(|(i, e)| {
            let u = CounterRng::new(derive_key(base, &[i as u64])).normal(t);
            *e = rho * *e + innov * u;
        });
    }
}

/// Adds heteroscedastic, temporally correlated noise to a linear clip in place.
pub fn add_camera_noise_in_place(clip: &mut VideoClip, params: &DegradeParams) -> Result<()> {
    params.validate()?;
    if clip.meta.colorspace != Colorspace::LinearRec709 {
        return Err(DegradeError::Colorspace(clip.meta.colorspace));
    }
    for (t, f) in clip.frames.iter().enumerate() {
        if let Some(&v) = f.data().iter().find(|v| **v < 0.0) {
            return Err(DegradeError::NegativeRadiance { frame: t, value: v });
        }
    }
    let n = clip.frames[0].data().len();
    let mut field = NoiseField::new(params.seed, params.rho, n);
    let (ss, sc) = (params.sigma_s * params.sigma_s, params.sigma_c * params.sigma_c);
    for (t, frame) in clip.frames.iter_mut().enumerate() {
        if t > 0 {
            field.advance();
        }
        frame
            .data_mut()
            .par_iter_mut()
            .zip(field.eps().par_iter())
            .with_min_len(4096)
            .for_each(|(v, e)| {
                let l = f64::from(*v);
                *v = (l + (l * ss + sc).sqrt() * e) as f32;
            });
    }
    Ok(())
}

pub fn add_camera_noise(clip: &VideoClip, params: &DegradeParams) -> Result<VideoClip> {
    let mut out = clip.clone();
    add_camera_noise_in_place(&mut out, params)?;
    Ok(out)
}

/// Clamp negatives, sRGB-encode, clip to 1 and round to the nearest byte.
pub fn quantize_srgb8(linear: f32) -> u8 {
    let v = f64::from(linear.max(0.0));
    let enc = srgb_encode(v).expect("non-negative input").min(1.0);
    (enc * 255.0).round() as u8
}

/// Result of [`degrade_clip`]: the LDR clip (samples are `byte / 255`),
/// its raw bytes, and the parameters used.
#[derive(Debug, Clone)]
pub struct Degraded {
    pub ldr: VideoClip,
    pub bytes: Vec<Rgb8Image>,
    pub params: DegradeParams,
}

/// Exposure shift, noise, sRGB encode, clip and 8-bit quantization.
pub fn degrade_clip(clip: &VideoClip, params: &DegradeParams) -> Result<Degraded> {
    params.validate()?;
    let mut work = clip.clone();
    apply_exposure_in_place(&mut work, params.delta)?;
    if !params.is_noiseless() {
        add_camera_noise_in_place(&mut work, params)?;
    } else if let Some((t, &v)) = work
        .frames
        .iter()
        .enumerate()
        .find_map(|(t, f)| f.data().iter().find(|v| **v < 0.0).map(|v| (t, v)))
    {
        return Err(DegradeError::NegativeRadiance { frame: t, value: v });
    }
    let bytes: Vec<Rgb8Image> = work
        .frames
        .par_iter()
        .map(|f| Rgb8Image {
            width: f.width(),
            height: f.height(),
            data: f.data().iter().map(|&v| quantize_srgb8(v)).collect(),
        })
        .collect();
    let frames: Vec<ImageF32> = bytes.iter().map(Rgb8Image::to_unit_float).collect();
    let mut meta = ClipMetadata::with_colorspace(Colorspace::Srgb8);
    meta.provenance = clip.meta.provenance.clone();
    meta.exposure_offset = work.meta.exposure_offset;
    meta.provenance.insert(
        "degrade".into(),
        serde_json::to_value(params).expect("params serialize"),
    );
    let ldr = VideoClip::new(frames, clip.fps, meta).expect("shape preserved");
    Ok(Degraded {
        ldr,
        bytes,
        params: *params,
    })
}

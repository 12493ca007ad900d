//! HFV float-video container.
//!
//! Layout, all little-endian:
//!
//! ```text
//! offset  size  field
//!      0     4  magic "HFV1"
//!      4     4  u32 width
//!      8     4  u32 height
//!     12     4  u32 frame_count
//!     16     4  u32 channels
//!     20     4  f32 fps
//!     24     1  u8 colorspace code (0 linear Rec.709, 1 sRGB 8-bit, 2 Log-Gamma)
//!     25     3  reserved, zero
//!     28     -  frame-major interleaved f32 samples
//! ```
//!
//! Colour clips use three channels. Exposure masks are stored as
//! two-channel files (over, under). Metadata lives in a JSON sidecar at
//! `<file>.json`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{read_file, write_file, IoError, Result};
use crate::color::LogGammaParams;
use crate::image::{ClipMetadata, Colorspace, ImageF32, Provenance, VideoClip};

pub const MAGIC: &[u8; 4] = b"HFV1";
pub const HEADER_LEN: usize = 28;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HfvHeader {
    pub width: u32,
    pub height: u32,
    pub frame_count: u32,
    pub channels: u32,
    pub fps: f32,
    pub colorspace: Colorspace,
}

impl HfvHeader {
    pub fn samples_per_frame(&self) -> u64 {
        u64::from(self.width) * u64::from(self.height) * u64::from(self.channels)
    }

    /// Byte length of the sample payload that follows the header.
    pub fn payload_len(&self) -> u64 {
        self.samples_per_frame() * u64::from(self.frame_count) * 4
    }

    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut out = [0u8; HEADER_LEN];
        out[..4].copy_from_slice(MAGIC);
        out[4..8].copy_from_slice(&self.width.to_le_bytes());
        out[8..12].copy_from_slice(&self.height.to_le_bytes());
        out[12..16].copy_from_slice(&self.frame_count.to_le_bytes());
        out[16..20].copy_from_slice(&self.channels.to_le_bytes());
        out[20..24].copy_from_slice(&self.fps.to_le_bytes());
        out[24] = self.colorspace.code();
        out
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(IoError::parse(0, "magic mismatch: expected HFV1"));
        }
        if bytes.len() < HEADER_LEN {
            return Err(IoError::parse(bytes.len(), "truncated HFV header"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let fps = f32::from_le_bytes(bytes[20..24].try_into().unwrap());
        let colorspace = Colorspace::from_code(bytes[24])
            .ok_or_else(|| IoError::parse(24, format!("unknown colorspace code {}", bytes[24])))?;
        if bytes[25..28] != [0, 0, 0] {
            return Err(IoError::parse(25, "reserved header bytes must be zero"));
        }
        let header = HfvHeader {
            width: u32_at(4),
            height: u32_at(8),
            frame_count: u32_at(12),
            channels: u32_at(16),
            fps,
            colorspace,
        };
        if header.width == 0 || header.height == 0 || header.frame_count == 0 {
            return Err(IoError::parse(4, "zero dimension or frame count"));
        }
        if !(1..=4).contains(&header.channels) {
            return Err(IoError::parse(16, format!("unsupported channel count {}", header.channels)));
        }
        if !(fps.is_finite() && fps > 0.0) {
            return Err(IoError::parse(20, format!("fps must be > 0, got {fps}")));
        }
        let fits = u64::from(header.width)
            .checked_mul(u64::from(header.height))
            .and_then(|n| n.checked_mul(u64::from(header.channels)))
            .and_then(|n| n.checked_mul(u64::from(header.frame_count)))
            .and_then(|n| n.checked_mul(4))
            .is_some_and(|n| n <= usize::MAX as u64);
        if !fits {
            return Err(IoError::parse(4, "declared payload size overflows"));
        }
        Ok(header)
    }
}

/// Raw container contents with any channel count.
#[derive(Debug, Clone, PartialEq)]
pub struct RawClip {
    pub header: HfvHeader,
    /// One interleaved sample buffer per frame.
    pub frames: Vec<Vec<f32>>,
}

pub fn encode_hfv(raw: &RawClip) -> Result<Vec<u8>> {
    let per_frame = raw.header.samples_per_frame() as usize;
    if raw.frames.len() != raw.header.frame_count as usize
        || raw.frames.iter().any(|f| f.len() != per_frame)
    {
        return Err(IoError::Image("frame buffers disagree with the HFV header".into()));
    }
    let mut out = Vec::with_capacity(HEADER_LEN + raw.header.payload_len() as usize);
    out.extend_from_slice(&raw.header.to_bytes());
    for frame in &raw.frames {
        for v in frame {
            if !v.is_finite() {
                return Err(IoError::Image("HFV payload must be finite".into()));
            }
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_hfv(bytes: &[u8]) -> Result<RawClip> {
    let header = HfvHeader::parse(bytes)?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() as u64 != header.payload_len() {
        return Err(IoError::parse(
            HEADER_LEN + payload.len().min(header.payload_len() as usize),
            format!(
                "payload is {} bytes, header declares {}",
                payload.len(),
                header.payload_len()
            ),
        ));
    }
    let per_frame = header.samples_per_frame() as usize;
    let mut frames = Vec::with_capacity(header.frame_count as usize);
    for (fi, chunk) in payload.chunks_exact(per_frame * 4).enumerate() {
        let mut frame = Vec::with_capacity(per_frame);
        for (si, b) in chunk.chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes(b.try_into().unwrap());
            if !v.is_finite() {
                let offset = HEADER_LEN + (fi * per_frame + si) * 4;
                return Err(IoError::parse(offset, "non-finite sample"));
            }
            frame.push(v);
        }
        frames.push(frame);
    }
    Ok(RawClip { header, frames })
}

/// JSON sidecar written next to every HFV file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sidecar {
    pub colorspace: Colorspace,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(rename = "M", default, skip_serializing_if = "Option::is_none")]
    pub max_radiance: Option<f64>,
    #[serde(default)]
    pub exposure_offset: f64,
    pub fps: f32,
    #[serde(default)]
    pub provenance: Provenance,
}

impl Sidecar {
    pub fn from_meta(meta: &ClipMetadata, fps: f32) -> Self {
        Sidecar {
            colorspace: meta.colorspace,
            gamma: meta.log_gamma.map(|p| p.gamma),
            max_radiance: meta.log_gamma.map(|p| p.max_radiance),
            exposure_offset: meta.exposure_offset,
            fps,
            provenance: meta.provenance.clone(),
        }
    }

    pub fn to_meta(&self) -> Result<ClipMetadata> {
        let log_gamma = match (self.gamma, self.max_radiance) {
            (Some(gamma), Some(max_radiance)) => Some(
                LogGammaParams::new(gamma, max_radiance)
                    .map_err(|e| IoError::Metadata(e.to_string()))?,
            ),
            (None, None) => None,
            _ => return Err(IoError::Metadata("gamma and M must be given together".into())),
        };
        let meta = ClipMetadata {
            colorspace: self.colorspace,
            log_gamma,
            exposure_offset: self.exposure_offset,
            provenance: self.provenance.clone(),
        };
        meta.validate().map_err(|e| IoError::Metadata(e.to_string()))?;
        Ok(meta)
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn write_sidecar(path: &Path, sidecar: &Sidecar) -> Result<()> {
    let json = serde_json::to_string_pretty(sidecar)
        .map_err(|e| IoError::Metadata(e.to_string()))?;
    write_file(&sidecar_path(path), json.as_bytes())
}

/// Reads the sidecar if one exists.
pub fn read_sidecar(path: &Path) -> Result<Option<Sidecar>> {
    let p = sidecar_path(path);
    if !p.exists() {
        return Ok(None);
    }
    let bytes = read_file(&p)?;
    serde_json::from_slice(&bytes)
        .map(Some)
        .map_err(|e| IoError::Metadata(format!("{}: {e}", p.display())))
}

pub fn write_hfv_raw(path: impl AsRef<Path>, raw: &RawClip, sidecar: &Sidecar) -> Result<()> {
    let path = path.as_ref();
    write_file(path, &encode_hfv(raw)?)?;
    write_sidecar(path, sidecar)
}

pub fn read_hfv_raw(path: impl AsRef<Path>) -> Result<(RawClip, Option<Sidecar>)> {
    let path = path.as_ref();
    let raw = decode_hfv(&read_file(path)?)?;
    let sidecar = read_sidecar(path)?;
    Ok((raw, sidecar))
}

pub fn clip_to_raw(clip: &VideoClip) -> Result<RawClip> {
    let dim = |v: usize| u32::try_from(v).map_err(|_| IoError::Image(format!("dimension {v} too large")));
    Ok(RawClip {
        header: HfvHeader {
            width: dim(clip.width())?,
            height: dim(clip.height())?,
            frame_count: dim(clip.frame_count())?,
            channels: 3,
            fps: clip.fps,
            colorspace: clip.meta.colorspace,
        },
        frames: clip.frames.iter().map(|f| f.data().to_vec()).collect(),
    })
}

pub fn write_hfv(path: impl AsRef<Path>, clip: &VideoClip) -> Result<()> {
    clip.validate().map_err(|e| IoError::Image(e.to_string()))?;
    write_hfv_raw(path, &clip_to_raw(clip)?, &Sidecar::from_meta(&clip.meta, clip.fps))
}

/// Reads a three-channel clip. A missing sidecar is tolerated except for
/// Log-Gamma clips, whose parameters only live there.
pub fn read_hfv(path: impl AsRef<Path>) -> Result<VideoClip> {
    let (raw, sidecar) = read_hfv_raw(path)?;
    raw_to_clip(raw, sidecar.as_ref())
}

pub fn raw_to_clip(raw: RawClip, sidecar: Option<&Sidecar>) -> Result<VideoClip> {
    let h = raw.header;
    if h.channels != 3 {
        return Err(IoError::parse(16, format!("expected 3 channels, found {}", h.channels)));
    }
    let meta = match sidecar {
        Some(s) => {
            if s.colorspace != h.colorspace {
                return Err(IoError::Metadata(format!(
                    "sidecar colorspace {:?} disagrees with header {:?}",
                    s.colorspace, h.colorspace
                )));
            }
            s.to_meta()?
        }
        None => ClipMetadata::with_colorspace(h.colorspace),
    };
    if meta.colorspace == Colorspace::LogGamma && meta.log_gamma.is_none() {
        return Err(IoError::Metadata(
            "Log-Gamma clip without gamma/M in its sidecar".into(),
        ));
    }
    let frames = raw
        .frames
        .into_iter()
        .map(|d| ImageF32::new(h.width as usize, h.height as usize, d))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| IoError::Image(e.to_string()))?;
    VideoClip::new(frames, h.fps, meta).map_err(|e| IoError::Metadata(e.to_string()))
}

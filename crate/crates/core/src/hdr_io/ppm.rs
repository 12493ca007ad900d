//! Binary PPM (P6, maxval 255) frames and frame-sequence directories.

use std::path::{Path, PathBuf};

use super::{read_file, write_file, IoError, Result};
use crate::image::{ClipMetadata, Colorspace, ImageF32, VideoClip};

/// 8-bit interleaved RGB image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rgb8Image {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl Rgb8Image {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(IoError::Image(format!(
                "{} bytes do not fill a {width}x{height} RGB image",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Samples as `byte / 255`.
    pub fn to_unit_float(&self) -> ImageF32 {
        let data = self.data.iter().map(|&b| f32::from(b) / 255.0).collect();
        ImageF32::new(self.width, self.height, data).expect("bytes are finite")
    }

    /// Quantizes `[0, 1]` samples with round-to-nearest.
    pub fn from_unit_float(image: &ImageF32) -> Self {
        let data = image
            .data()
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        Self {
            width: image.width(),
            height: image.height(),
            data,
        }
    }
}

pub fn encode_ppm(image: &Rgb8Image) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", image.width, image.height).into_bytes();
    out.extend_from_slice(&image.data);
    out
}

pub fn decode_ppm(bytes: &[u8]) -> Result<Rgb8Image> {
    if bytes.len() < 2 || &bytes[..2] != b"P6" {
        let found = String::from_utf8_lossy(&bytes[..bytes.len().min(2)]).into_owned();
        return Err(IoError::parse(
            0,
            format!("unsupported magic '{found}'; supported: P6 (binary RGB, maxval 255)"),
        ));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for (i, field) in fields.iter_mut().enumerate() {
        // Whitespace and '#' comments may separate header tokens.
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(IoError::parse(pos, "truncated PPM header")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos || pos - start > 9 {
            return Err(IoError::parse(start, "expected a decimal header field"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .expect("ascii digits")
            .parse()
            .expect("at most nine digits");
        if i < 2 && *field == 0 {
            return Err(IoError::parse(start, "zero image dimension"));
        }
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(IoError::parse(pos, format!("maxval {maxval} unsupported; expected 255")));
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(IoError::parse(pos, "missing whitespace after maxval"));
    }
    pos += 1;
    let expected = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(3))
        .ok_or_else(|| IoError::parse(pos, "image dimensions overflow"))?;
    let payload = &bytes[pos..];
    if payload.len() != expected {
        return Err(IoError::parse(
            pos + payload.len().min(expected),
            format!("payload is {} bytes, header declares {expected}", payload.len()),
        ));
    }
    Rgb8Image::new(width, height, payload.to_vec())
}

pub fn read_ppm(path: impl AsRef<Path>) -> Result<Rgb8Image> {
    decode_ppm(&read_file(path.as_ref())?)
}

pub fn write_ppm(path: impl AsRef<Path>, image: &Rgb8Image) -> Result<()> {
    write_file(path.as_ref(), &encode_ppm(image))
}

pub fn frame_file_name(index: usize) -> String {
    format!("frame_{index:04}.ppm")
}

/// Writes `frame_0000.ppm`, `frame_0001.ppm`, ... into `dir`.
pub fn write_ppm_dir(dir: impl AsRef<Path>, frames: &[Rgb8Image]) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| IoError::io(dir, e))?;
    frames
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let p = dir.join(frame_file_name(i));
            write_ppm(&p, f)?;
            Ok(p)
        })
        .collect()
}

/// Reads every `*.ppm` in `dir`, in file-name order.
pub fn read_ppm_dir(dir: impl AsRef<Path>) -> Result<Vec<Rgb8Image>> {
    let dir = dir.as_ref();
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| IoError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "ppm"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(IoError::Image(format!("no .ppm frames in {}", dir.display())));
    }
    paths.iter().map(read_ppm).collect()
}

/// Builds an sRGB clip from 8-bit frames.
pub fn frames_to_clip(frames: &[Rgb8Image], fps: f32) -> Result<VideoClip> {
    VideoClip::new(
        frames.iter().map(Rgb8Image::to_unit_float).collect(),
        fps,
        ClipMetadata::with_colorspace(Colorspace::Srgb8),
    )
    .map_err(|e| IoError::Image(e.to_string()))
}

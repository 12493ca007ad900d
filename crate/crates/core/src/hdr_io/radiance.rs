//! Radiance `.hdr` files.
//!
//! Reads flat and new-style run-length scanlines; writes flat scanlines only.
//! The only accepted orientation is the standard `-Y H +X W`.

use std::path::Path;

use super::rgbe::Rgbe;
use super::{read_file, write_file, IoError, Result};
use crate::image::ImageF32;

pub fn read_radiance(path: impl AsRef<Path>) -> Result<ImageF32> {
    decode_radiance(&read_file(path.as_ref())?)
}

pub fn write_radiance(path: impl AsRef<Path>, image: &ImageF32) -> Result<()> {
    write_file(path.as_ref(), &encode_radiance(image)?)
}

pub fn encode_radiance(image: &ImageF32) -> Result<Vec<u8>> {
    let header = format!(
        "#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n\n-Y {} +X {}\n",
        image.height(),
        image.width()
    );
    let mut out = Vec::with_capacity(header.len() + image.pixel_count() * 4);
    out.extend_from_slice(header.as_bytes());
    for px in image.data().chunks_exact(3) {
        out.extend_from_slice(&Rgbe::encode([px[0], px[1], px[2]])?.to_bytes());
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn line(&mut self) -> Result<&'a str> {
        let start = self.pos;
        let rest = &self.bytes[start..];
        let end = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| IoError::parse(start, "unterminated header line"))?;
        self.pos = start + end + 1;
        std::str::from_utf8(&rest[..end])
            .map(|s| s.trim_end_matches('\r'))
            .map_err(|_| IoError::parse(start, "header line is not valid UTF-8"))
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(IoError::parse(
                self.bytes.len(),
                format!("truncated {what}: needed {n} bytes at offset {}", self.pos),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn byte(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }
}

pub fn decode_radiance(bytes: &[u8]) -> Result<ImageF32> {
    if bytes.is_empty() {
        return Err(IoError::parse(0, "empty file"));
    }
    let mut cur = Cursor { bytes, pos: 0 };
    let magic = cur.line()?;
    if !(magic.starts_with("#?RADIANCE") || magic.starts_with("#?RGBE")) {
        return Err(IoError::parse(0, "missing #?RADIANCE or #?RGBE signature"));
    }
    loop {
        let at = cur.pos;
        let line = cur.line()?;
        if line.is_empty() {
            break;
        }
        if let Some(fmt) = line.strip_prefix("FORMAT=") {
            if fmt.trim() != "32-bit_rle_rgbe" {
                return Err(IoError::parse(at, format!("unsupported pixel format '{fmt}'")));
            }
        }
    }
    let res_at = cur.pos;
    let res = cur.line()?;
    let (width, height) = parse_resolution(res).map_err(|m| IoError::parse(res_at, m))?;

    // Cheapest possible scanline: an RLE header plus one two-byte run per
    // 127 pixels in each channel.
    let min_scanline = if (8..=0x7fff).contains(&width) {
        4 + 8 * width.div_ceil(127)
    } else {
        4 * width
    };
    if (bytes.len() - cur.pos) / min_scanline < height {
        return Err(IoError::parse(
            bytes.len(),
            format!("truncated pixel data for {width}x{height} image"),
        ));
    }
    let mut data = Vec::with_capacity(width * height * 3);
    let mut scanline = vec![[0u8; 4]; width];
    for y in 0..height {
        read_scanline(&mut cur, &mut scanline, y)?;
        for q in &scanline {
            data.extend_from_slice(&Rgbe::from_bytes(*q).decode());
        }
    }
    if cur.pos != bytes.len() {
        return Err(IoError::parse(
            cur.pos,
            format!("{} trailing bytes after the last scanline", bytes.len() - cur.pos),
        ));
    }
    ImageF32::new(width, height, data).map_err(|e| IoError::Image(e.to_string()))
}

fn parse_resolution(line: &str) -> std::result::Result<(usize, usize), String> {
    let parts: Vec<&str> = line.split_whitespace().collect();
    if parts.len() != 4 {
        return Err(format!("malformed resolution string '{line}'"));
    }
    if parts[0] != "-Y" || parts[2] != "+X" {
        return Err(format!(
            "unsupported resolution orientation '{line}' (only -Y H +X W)"
        ));
    }
    let dim = |s: &str| {
        s.parse::<usize>()
            .ok()
            .filter(|v| *v > 0 && *v <= 1 << 20)
            .ok_or_else(|| format!("bad dimension '{s}'"))
    };
    Ok((dim(parts[3])?, dim(parts[1])?))
}

fn read_scanline(cur: &mut Cursor<'_>, out: &mut [[u8; 4]], y: usize) -> Result<()> {
    let width = out.len();
    let head = cur.take(4, &format!("scanline {y}"))?;
    let is_rle = (8..=0x7fff).contains(&width)
        && head[0] == 2
        && head[1] == 2
        && head[2] & 0x80 == 0
        && ((head[2] as usize) << 8 | head[3] as usize) == width;
    if !is_rle {
        out[0].copy_from_slice(head);
        let rest = cur.take(4 * (width - 1), &format!("scanline {y}"))?;
        for (px, chunk) in out[1..].iter_mut().zip(rest.chunks_exact(4)) {
            px.copy_from_slice(chunk);
        }
        return Ok(());
    }
    for channel in 0..4 {
        let mut x = 0;
        while x < width {
            let at = cur.pos;
            let count = cur.byte("run length")? as usize;
            if count > 128 {
                let run = count - 128;
                if x + run > width {
                    return Err(IoError::parse(at, format!("run overflows scanline {y}")));
                }
                let v = cur.byte("run value")?;
                out[x..x + run].iter_mut().for_each(|px| px[channel] = v);
                x += run;
            } else {
                if count == 0 || x + count > width {
                    return Err(IoError::parse(at, format!("bad literal count in scanline {y}")));
                }
                let lit = cur.take(count, "literal run")?;
                for (px, v) in out[x..x + count].iter_mut().zip(lit) {
                    px[channel] = *v;
                }
                x += count;
            }
        }
    }
    Ok(())
}

/// Encodes one scanline with new-style RLE. Used to produce test inputs;
/// the writer itself emits flat scanlines.
pub fn rle_encode_scanline(pixels: &[[u8; 4]]) -> Vec<u8> {
    let width = pixels.len();
    assert!((8..=0x7fff).contains(&width), "RLE needs 8..=32767 pixels");
    let mut out = vec![2, 2, (width >> 8) as u8, (width & 0xff) as u8];
    for channel in 0..4 {
        let vals: Vec<u8> = pixels.iter().map(|p| p[channel]).collect();
        let mut i = 0;
        while i < width {
            let mut run = 1;
            while i + run < width && run < 127 && vals[i + run] == vals[i] {
                run += 1;
            }
            if run >= 3 {
                out.push(128 + run as u8);
                out.push(vals[i]);
                i += run;
                continue;
            }
            let start = i;
            while i < width && i - start < 128 {
                let r = vals[i..].iter().take_while(|&&v| v == vals[i]).count();
                if r >= 3 {
                    break;
                }
                i += 1;
            }
            out.push((i - start) as u8);
            out.extend_from_slice(&vals[start..i]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random_image(w: usize, h: usize, seed: u64) -> ImageF32 {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        ImageF32::from_fn(w, h, |_, _| std::array::from_fn(|_| rng.gen_range(0.0..50.0)))
    }

    #[test]
    fn roundtrip_64x32() {
        let img = random_image(64, 32, 1);
        let back = decode_radiance(&encode_radiance(&img).unwrap()).unwrap();
        assert_eq!((back.width(), back.height()), (64, 32));
        for (a, b) in img.data().chunks(3).zip(back.data().chunks(3)) {
            let m = a.iter().cloned().fold(0.0f32, f32::max);
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() <= m * 2.0 / 256.0);
            }
        }
    }

    #[test]
    fn known_two_pixel_file() {
        let mut bytes = b"#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n\n-Y 1 +X 2\n".to_vec();
        bytes.extend_from_slice(&[128, 128, 128, 129, 0, 0, 0, 0]);
        let img = decode_radiance(&bytes).unwrap();
        assert_eq!(img.pixel(0, 0), [128.5 / 128.0; 3]);
        assert_eq!(img.pixel(1, 0), [0.0; 3]);
        // The writer reproduces the same bytes.
        let exact = ImageF32::new(2, 1, vec![1.0, 1.0, 1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(encode_radiance(&exact).unwrap(), bytes);
    }

    #[test]
    fn rle_scanlines_decode() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let (w, h) = (40, 3);
        let rows: Vec<Vec<[u8; 4]>> = (0..h)
            .map(|_| {
                (0..w)
                    .map(|x| {
                        if x < 20 {
                            [200, 10, 10, 130]
                        } else {
                            [rng.gen_range(128..=255), rng.gen(), rng.gen(), 128]
                        }
                    })
                    .collect()
            })
            .collect();
        let mut bytes = format!("#?RGBE\n\n-Y {h} +X {w}\n").into_bytes();
        for row in &rows {
            bytes.extend(rle_encode_scanline(row));
        }
        let img = decode_radiance(&bytes).unwrap();
        for (y, row) in rows.iter().enumerate() {
            for (x, q) in row.iter().enumerate() {
                assert_eq!(img.pixel(x, y), Rgbe::from_bytes(*q).decode());
            }
        }
    }

    #[test]
    fn parse_errors_carry_offsets() {
        assert!(matches!(decode_radiance(b""), Err(IoError::Parse { offset: 0, .. })));
        assert!(matches!(
            decode_radiance(b"P6\n1 1\n255\n"),
            Err(IoError::Parse { offset: 0, .. })
        ));
        let header = b"#?RADIANCE\n\n+Y 1 +X 2\n";
        match decode_radiance(header) {
            Err(IoError::Parse { offset, message }) => {
                assert_eq!(offset, 12);
                assert!(message.contains("orientation"));
            }
            other => panic!("{other:?}"),
        }
        let mut truncated = b"#?RADIANCE\n\n-Y 1 +X 2\n".to_vec();
        truncated.extend_from_slice(&[128, 128, 128, 129, 0]);
        assert!(matches!(decode_radiance(&truncated), Err(IoError::Parse { .. })));
        let xyze = b"#?RADIANCE\nFORMAT=32-bit_rle_xyze\n\n-Y 1 +X 1\n\0\0\0\0";
        assert!(decode_radiance(xyze).is_err());
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.hdr");
        let img = random_image(16, 8, 2);
        write_radiance(&p, &img).unwrap();
        let back = read_radiance(&p).unwrap();
        assert_eq!(back.width(), 16);
        assert!(read_radiance(dir.path().join("missing.hdr")).is_err());
    }
}

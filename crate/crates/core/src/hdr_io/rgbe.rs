//! Shared-exponent RGBE pixels.
//!
//! Decoding follows the Radiance reference convention of sampling the
//! centre of each mantissa bucket: `component = (m + 0.5) * 2^(e - 136)`.

use super::{IoError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Rgbe {
    pub r: u8,
    pub g: u8,
    pub b: u8,
    pub e: u8,
}

/// Splits a positive finite `x` into `(mantissa, exp)` with
/// `x = mantissa * 2^exp` and `mantissa` in `[0.5, 1)`.
fn frexp(x: f64) -> (f64, i32) {
    let bits = x.to_bits();
    let raw_exp = ((bits >> 52) & 0x7ff) as i32;
    if raw_exp == 0 {
        // Subnormal: renormalise first.
        let (m, e) = frexp(x * 2f64.powi(64));
        return (m, e - 64);
    }
    let mantissa = f64::from_bits((bits & !(0x7ffu64 << 52)) | (1022u64 << 52));
    (mantissa, raw_exp - 1022)
}

impl Rgbe {
    pub const BLACK: Rgbe = Rgbe {
        r: 0,
        g: 0,
        b: 0,
        e: 0,
    };

    pub fn from_bytes(b: [u8; 4]) -> Self {
        Rgbe {
            r: b[0],
            g: b[1],
            b: b[2],
            e: b[3],
        }
    }

    pub fn to_bytes(self) -> [u8; 4] {
        [self.r, self.g, self.b, self.e]
    }

    pub fn encode(rgb: [f32; 3]) -> Result<Rgbe> {
        if let Some(c) = rgb.iter().find(|c| !c.is_finite() || **c < 0.0) {
            return Err(IoError::InvalidRadiance(format!(
                "RGBE components must be finite and >= 0, got {c}"
            )));
        }
        let [r, g, b] = rgb.map(f64::from);
        let max = r.max(g).max(b);
        if max == 0.0 {
            return Ok(Rgbe::BLACK);
        }
        let (mantissa, exp) = frexp(max);
        if exp > 127 {
            return Err(IoError::InvalidRadiance(format!("{max} overflows RGBE")));
        }
        if exp < -127 {
            return Ok(Rgbe::BLACK);
        }
        let scale = mantissa * 256.0 / max;
        let q = |c: f64| (c * scale).floor().clamp(0.0, 255.0) as u8;
        Ok(Rgbe {
            r: q(r),
            g: q(g),
            b: q(b),
            e: (exp + 128) as u8,
        })
    }

    pub fn decode(self) -> [f32; 3] {
        if self.e == 0 {
            return [0.0; 3];
        }
        let scale = 2f64.powi(i32::from(self.e) - 136);
        [self.r, self.g, self.b].map(|m| ((f64::from(m) + 0.5) * scale) as f32)
    }

    /// Canonical quadruples: zero exponent only for black, otherwise the
    /// largest mantissa uses the top bit.
    pub fn is_canonical(self) -> bool {
        if self.e == 0 {
            self.r == 0 && self.g == 0 && self.b == 0
        } else {
            self.r.max(self.g).max(self.b) >= 128
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    /// Independent reference codec: exponent from `log2`, not from float bits.
    fn reference_encode(rgb: [f32; 3]) -> [u8; 4] {
        let [r, g, b] = rgb.map(f64::from);
        let v = r.max(g).max(b);
        if v == 0.0 {
            return [0; 4];
        }
        let mut e = v.log2().floor() as i32 + 1;
        // Guard log2 rounding at exact powers of two.
        if v >= 2f64.powi(e) {
            e += 1;
        }
        if v < 2f64.powi(e - 1) {
            e -= 1;
        }
        if e < -127 {
            return [0; 4];
        }
        let f = 256.0 / 2f64.powi(e);
        [
            (r * f) as u8,
            (g * f) as u8,
            (b * f) as u8,
            (e + 128) as u8,
        ]
    }

    #[test]
    fn zero_convention() {
        assert_eq!(Rgbe::encode([0.0; 3]).unwrap(), Rgbe::BLACK);
        assert_eq!(Rgbe::BLACK.decode(), [0.0; 3]);
    }

    #[test]
    fn unit_roundtrip() {
        let q = Rgbe::encode([1.0; 3]).unwrap();
        assert_eq!(q.to_bytes(), [128, 128, 128, 129]);
        for c in q.decode() {
            assert!((c - 1.0).abs() <= 2.0 / 256.0);
        }
    }

    #[test]
    fn rejects_invalid() {
        assert!(Rgbe::encode([-1.0, 0.0, 0.0]).is_err());
        assert!(Rgbe::encode([f32::NAN, 0.0, 0.0]).is_err());
        assert!(Rgbe::encode([f32::INFINITY, 0.0, 0.0]).is_err());
    }

    #[test]
    fn matches_reference_on_random_grid() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10_000 {
            let rgb: [f32; 3] = std::array::from_fn(|_| rng.gen_range(0.0f32..1e4));
            let ours = Rgbe::encode(rgb).unwrap();
            assert_eq!(ours.to_bytes(), reference_encode(rgb), "rgb={rgb:?}");
            let back = ours.decode();
            let m = rgb.iter().cloned().fold(0.0f32, f32::max);
            for (a, b) in back.iter().zip(rgb) {
                assert!((a - b).abs() <= m * 2.0 / 256.0);
            }
        }
    }

    #[test]
    fn frexp_matches_definition() {
        for x in [1.0, 0.75, 3.0, 1e-300, 1e300] {
            let (m, e) = frexp(x);
            assert!((0.5..1.0).contains(&m), "x={x} m={m}");
            assert_eq!(m * 2f64.powi(e), x);
        }
    }

    proptest! {
        #[test]
        fn roundtrip_bound(r in 0.0f32..1e6, g in 0.0f32..1e6, b in 0.0f32..1e6) {
            let back = Rgbe::encode([r, g, b]).unwrap().decode();
            let m = r.max(g).max(b);
            for (a, c) in back.iter().zip([r, g, b]) {
                prop_assert!((a - c).abs() <= m * 2.0 / 256.0);
            }
        }

        #[test]
        fn decode_encode_fixed_point(r: u8, g: u8, b: u8, e in 1u8..=255) {
            let q = Rgbe { r, g, b, e };
            prop_assume!(q.is_canonical());
            prop_assert_eq!(Rgbe::encode(q.decode()).unwrap(), q);
        }
    }
}

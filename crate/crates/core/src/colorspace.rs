//! Exact color-space math: the clipping + gamma tone curve and its inverse,
//! and RGB <-> HSV with an unbounded value channel.
//!
//! The gamma curve follows IEC 61966-2-1 with the linear segment below
//! 0.0031308. HDR inputs are clipped to [0, 1] per channel before the curve
//! is applied, which is what makes over-bright emitters and their bright
//! reflections indistinguishable in LDR pixels.

use crate::error::{Error, Result};
use crate::math::Vec3;

pub const SRGB_LINEAR_CUTOFF: f64 = 0.0031308;
const SRGB_LINEAR_SLOPE: f64 = 12.92;
const SRGB_A: f64 = 1.055;
const SRGB_B: f64 = 0.055;
const SRGB_GAMMA: f64 = 2.4;

/// Nonnegative HDR linear radiance per channel.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct LinearRGB(pub Vec3);

impl LinearRGB {
    pub fn new(r: f64, g: f64, b: f64) -> Result<LinearRGB> {
        let v = Vec3::new(r, g, b);
        if !v.is_finite() || v.min_component() < 0.0 {
            return Err(Error::ColorRange(format!(
                "linear RGB must be finite and nonnegative, got ({r}, {g}, {b})"
            )));
        }
        Ok(LinearRGB(v))
    }
}

/// Display-referred value with every channel in [0, 1].
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct SrgbRGB(pub Vec3);

impl SrgbRGB {
    pub fn new(r: f64, g: f64, b: f64) -> Result<SrgbRGB> {
        let v = Vec3::new(r, g, b);
        if !v.is_finite() || v.min_component() < 0.0 || v.max_component() > 1.0 {
            return Err(Error::ColorRange(format!(
                "sRGB channels must lie in [0, 1], got ({r}, {g}, {b})"
            )));
        }
        Ok(SrgbRGB(v))
    }
}

/// Hue in [0, 1), saturation in [0, 1], unbounded nonnegative value.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct HsvColor {
    pub h: f64,
    pub s: f64,
    pub v: f64,
}

impl HsvColor {
    pub fn new(h: f64, s: f64, v: f64) -> Result<HsvColor> {
        if !(0.0..1.0).contains(&h) || !(0.0..=1.0).contains(&s) || v < 0.0 || !v.is_finite() {
            return Err(Error::ColorRange(format!(
                "HSV requires h in [0,1), s in [0,1], v >= 0, got ({h}, {s}, {v})"
            )));
        }
        Ok(HsvColor { h, s, v })
    }
}

/// Scalar clipping + gamma curve: clip to [0, 1], then the piecewise IEC
/// encoding. Monotone nondecreasing in its input.
pub fn tone_curve_scalar(c: f64) -> f64 {
    let c = c.clamp(0.0, 1.0);
    if c <= SRGB_LINEAR_CUTOFF {
        SRGB_LINEAR_SLOPE * c
    } else {
        SRGB_A * c.powf(1.0 / SRGB_GAMMA) - SRGB_B
    }
}

/// Derivative of `tone_curve_scalar`; zero in the clipped regions.
pub fn tone_curve_deriv(c: f64) -> f64 {
    if !(0.0..=1.0).contains(&c) {
        0.0
    } else if c <= SRGB_LINEAR_CUTOFF {
        SRGB_LINEAR_SLOPE
    } else {
        SRGB_A / SRGB_GAMMA * c.powf(1.0 / SRGB_GAMMA - 1.0)
    }
}

fn srgb_decode_scalar(c: f64) -> f64 {
    if c <= SRGB_LINEAR_SLOPE * SRGB_LINEAR_CUTOFF {
        c / SRGB_LINEAR_SLOPE
    } else {
        ((c + SRGB_B) / SRGB_A).powf(SRGB_GAMMA)
    }
}

pub fn linear_to_srgb(c: LinearRGB) -> SrgbRGB {
    SrgbRGB(c.0.map(tone_curve_scalar))
}

pub fn srgb_to_linear(c: SrgbRGB) -> LinearRGB {
    LinearRGB(c.0.map(srgb_decode_scalar))
}

/// Unchecked per-channel helpers for hot paths and image I/O.
pub fn tone_curve_vec(c: Vec3) -> Vec3 {
    c.map(tone_curve_scalar)
}

pub fn srgb_decode_vec(c: Vec3) -> Vec3 {
    c.map(srgb_decode_scalar)
}

/// RGB -> HSV with unbounded value channel. Hue branches are tested in
/// R, G, B order and the first match wins on ties.
pub fn rgb_to_hsv(c: LinearRGB) -> HsvColor {
    let Vec3 { x: r, y: g, z: b } = c.0;
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let chroma = max - min;
    let v = max;
    let h_prime = if chroma == 0.0 {
        0.0
    } else if max == r {
        (g - b) / chroma
    } else if max == g {
        (b - r) / chroma + 2.0
    } else {
        (r - g) / chroma + 4.0
    };
    let h = (h_prime / 6.0).rem_euclid(1.0);
    let s = if v == 0.0 { 0.0 } else { chroma / v };
    HsvColor { h, s, v }
}

/// HSV -> RGB, linear in the value channel for fixed hue/saturation.
pub fn hsv_to_rgb(c: HsvColor) -> LinearRGB {
    let chroma = c.s * c.v;
    let h_prime = c.h * 6.0;
    let x = chroma * (1.0 - (h_prime.rem_euclid(2.0) - 1.0).abs());
    let (r1, g1, b1) = match h_prime {
        h if h < 1.0 => (chroma, x, 0.0),
        h if h < 2.0 => (x, chroma, 0.0),
        h if h < 3.0 => (0.0, chroma, x),
        h if h < 4.0 => (0.0, x, chroma),
        h if h < 5.0 => (x, 0.0, chroma),
        _ => (chroma, 0.0, x),
    };
    let m = c.v - chroma;
    LinearRGB(Vec3::new(r1 + m, g1 + m, b1 + m))
}

/// Quantize a [0,1] sRGB value to 8 bits.
pub fn srgb_to_u8(c: f64) -> u8 {
    (c * 255.0).round().clamp(0.0, 255.0) as u8
}

pub fn u8_to_srgb(v: u8) -> f64 {
    v as f64 / 255.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::Stream;

    fn lin(r: f64, g: f64, b: f64) -> LinearRGB {
        LinearRGB::new(r, g, b).unwrap()
    }

    #[test]
    fn gamma_anchor_values() {
        assert_eq!(tone_curve_scalar(0.0), 0.0);
        assert!((tone_curve_scalar(1.0) - 1.0).abs() < 1e-12);
        assert!((tone_curve_scalar(0.002) - 0.02584).abs() < 1e-12);
        // High-precision evaluation of 1.055 * 0.5^(1/2.4) - 0.055.
        assert!((tone_curve_scalar(0.5) - 0.735357).abs() < 1e-6);
    }

    #[test]
    fn gamma_clips_hdr_input() {
        assert_eq!(tone_curve_scalar(5.0), tone_curve_scalar(1.0));
        let c = linear_to_srgb(lin(2.0, 0.5, 7.0));
        assert!((c.0.x - 1.0).abs() < 1e-12);
        assert!((c.0.z - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gamma_branch_point_continuity() {
        let c = SRGB_LINEAR_CUTOFF;
        let linear_side = SRGB_LINEAR_SLOPE * c;
        let gamma_side = SRGB_A * c.powf(1.0 / SRGB_GAMMA) - SRGB_B;
        assert!((linear_side - gamma_side).abs() < 2e-4);
    }

    #[test]
    fn gamma_monotone_on_dense_grid() {
        let mut prev = -1.0;
        for i in 0..=10_000 {
            let v = tone_curve_scalar(i as f64 / 10_000.0);
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn srgb_round_trip_dense() {
        let mut rng = Stream::new(&[101]);
        for _ in 0..10_000 {
            let x = rng.next_f64();
            let back = srgb_decode_scalar(tone_curve_scalar(x));
            assert!((back - x).abs() < 1e-6, "{x} -> {back}");
        }
        assert!((srgb_decode_scalar(0.02584) - 0.002).abs() < 1e-9);
        assert_eq!(srgb_decode_scalar(0.0), 0.0);
        assert!((srgb_decode_scalar(1.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn linear_rgb_rejects_bad_input() {
        assert!(LinearRGB::new(-0.1, 0.0, 0.0).is_err());
        assert!(LinearRGB::new(f64::NAN, 0.0, 0.0).is_err());
        assert!(SrgbRGB::new(0.0, 1.2, 0.0).is_err());
        assert!(HsvColor::new(1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn hsv_known_values() {
        let red = rgb_to_hsv(lin(1.0, 0.0, 0.0));
        assert_eq!((red.h, red.s, red.v), (0.0, 1.0, 1.0));

        let gray = rgb_to_hsv(lin(0.5, 0.5, 0.5));
        assert_eq!((gray.h, gray.s, gray.v), (0.0, 0.0, 0.5));

        // Max attained by G and B: branch order picks G, H' = (B-R)/C + 2 = 3.
        let cyan = rgb_to_hsv(lin(0.0, 2.0, 2.0));
        assert_eq!((cyan.h, cyan.s, cyan.v), (0.5, 1.0, 2.0));
    }

    #[test]
    fn hsv_to_rgb_known_values() {
        let red = hsv_to_rgb(HsvColor::new(0.0, 1.0, 1.0).unwrap());
        assert_eq!(red.0, Vec3::new(1.0, 0.0, 0.0));

        let gray = hsv_to_rgb(HsvColor::new(0.0, 0.0, 0.5).unwrap());
        assert_eq!(gray.0, Vec3::new(0.5, 0.5, 0.5));

        let cyan = hsv_to_rgb(HsvColor::new(0.5, 1.0, 2.0).unwrap());
        assert!((cyan.0 - Vec3::new(0.0, 2.0, 2.0)).norm() < 1e-12);
    }

    #[test]
    fn hsv_round_trip_random() {
        let mut rng = Stream::new(&[77]);
        let mut tested = 0;
        while tested < 5_000 {
            let c = Vec3::new(
                rng.next_range(0.01, 4.0),
                rng.next_range(0.01, 4.0),
                rng.next_range(0.01, 4.0),
            );
            // Round trip is only exact for distinct channels with V > 0.
            let distinct = (c.x - c.y).abs() > 1e-3
                && (c.y - c.z).abs() > 1e-3
                && (c.x - c.z).abs() > 1e-3;
            if !distinct {
                continue;
            }
            let back = hsv_to_rgb(rgb_to_hsv(LinearRGB(c)));
            assert!((back.0 - c).norm() < 1e-6, "{c:?} -> {:?}", back.0);
            tested += 1;
        }
    }
}

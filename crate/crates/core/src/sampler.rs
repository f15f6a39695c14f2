//! Counter-based deterministic sampling.
//!
//! Every stochastic decision in the engine is keyed by integers (seed, ray
//! id, sample index, training step, ...) rather than drawn from shared
//! mutable RNG state. Results are therefore independent of worker count and
//! scheduling, and two runs with the same seed are bitwise identical.

use crate::math::Vec3;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mix an arbitrary key tuple into a single 64-bit state.
pub fn mix(parts: &[u64]) -> u64 {
    let mut h = 0x51_7c_c1_b7_27_22_0a_95u64;
    for &p in parts {
        h = splitmix(h ^ p);
    }
    h
}

/// Uniform f64 in [0, 1) from a hash value.
pub fn unit_f64(h: u64) -> f64 {
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform f64 in [0, 1) keyed directly by a tuple.
pub fn uniform(parts: &[u64]) -> f64 {
    unit_f64(mix(parts))
}

/// A tiny stateful stream for the places that need a sequence (shuffles,
/// parameter init). Seeded from a key tuple; advancing is splitmix64.
#[derive(Clone, Debug)]
pub struct Stream {
    state: u64,
}

impl Stream {
    pub fn new(parts: &[u64]) -> Stream {
        Stream { state: mix(parts) }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        splitmix(self.state)
    }

    pub fn next_f64(&mut self) -> f64 {
        unit_f64(self.next_u64())
    }

    /// Uniform in [lo, hi).
    pub fn next_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    pub fn next_usize(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        (self.next_u64() % n as u64) as usize
    }

    /// Standard-normal-ish value via the sum of 4 uniforms (Irwin-Hall),
    /// adequate for weight init.
    pub fn next_gauss(&mut self) -> f64 {
        let s: f64 = (0..4).map(|_| self.next_f64()).sum();
        (s - 2.0) * (3.0f64).sqrt()
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.next_usize(i + 1);
            items.swap(i, j);
        }
    }
}

/// Uniform direction on the hemisphere around unit normal `n` (pdf 1/2pi),
/// keyed by a tuple so the stream is reproducible per (ray, sample, step).
pub fn hemisphere_dir(n: Vec3, parts: &[u64]) -> Vec3 {
    let h = mix(parts);
    let u1 = unit_f64(h);
    let u2 = unit_f64(splitmix(h ^ 0xabcd_ef01_2345_6789));
    hemisphere_from_uv(n, u1, u2)
}

/// Map (u1, u2) in [0,1)^2 to a uniform hemisphere direction about `n`.
pub fn hemisphere_from_uv(n: Vec3, u1: f64, u2: f64) -> Vec3 {
    let z = u1;
    let r = (1.0 - z * z).max(0.0).sqrt();
    let phi = 2.0 * std::f64::consts::PI * u2;
    let (t, b) = n.orthonormal_basis();
    t * (r * phi.cos()) + b * (r * phi.sin()) + n * z
}

/// Random unit vector on the full sphere.
pub fn sphere_dir(parts: &[u64]) -> Vec3 {
    let h = mix(parts);
    let u1 = unit_f64(h);
    let u2 = unit_f64(splitmix(h ^ 0x1357_9bdf_2468_ace0));
    let z = 2.0 * u1 - 1.0;
    let r = (1.0 - z * z).max(0.0).sqrt();
    let phi = 2.0 * std::f64::consts::PI * u2;
    Vec3::new(r * phi.cos(), r * phi.sin(), z)
}

//! Spherical-Gaussian mixture environment map with analytic parameter
//! gradients.
//!
//! S(w) = softplus( sum_k mu_k * exp(lambda_k * (w . xi_k - 1)) ) per channel.
//!
//! Parameters are stored flat, seven per lobe: [mu_r, mu_g, mu_b, lambda,
//! xi_x, xi_y, xi_z]. The xi gradient is projected onto the tangent plane of
//! the unit sphere; the optimizer renormalizes xi after each step.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{sigmoid, softplus, Vec3};
use crate::sampler::Stream;

pub const LOBE_STRIDE: usize = 7;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SgLobe {
    /// Lobe amplitude; unconstrained, mapped as-is into the pre-activation sum.
    pub mu: Vec3,
    /// Sharpness, positive.
    pub lambda: f64,
    /// Unit axis.
    pub xi: Vec3,
}

impl SgLobe {
    pub fn validate(&self) -> Result<()> {
        if self.lambda <= 0.0 {
            return Err(Error::Config(format!("SG lambda must be > 0, got {}", self.lambda)));
        }
        if !self.xi.is_unit(1e-6) {
            return Err(Error::NonUnitDirection(self.xi.norm()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct EnvMap {
    pub lobes: Vec<SgLobe>,
}

impl EnvMap {
    pub fn to_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.lobes.len() * LOBE_STRIDE);
        for l in &self.lobes {
            out.extend_from_slice(&[l.mu.x, l.mu.y, l.mu.z, l.lambda, l.xi.x, l.xi.y, l.xi.z]);
        }
        out
    }

    pub fn from_params(params: &[f64]) -> EnvMap {
        let lobes = params
            .chunks_exact(LOBE_STRIDE)
            .map(|c| SgLobe {
                mu: Vec3::new(c[0], c[1], c[2]),
                lambda: c[3],
                xi: Vec3::new(c[4], c[5], c[6]),
            })
            .collect();
        EnvMap { lobes }
    }
}

/// Pre-activation sum over lobes.
pub fn pre_activation(params: &[f64], dir: Vec3) -> Vec3 {
    let mut acc = Vec3::ZERO;
    for c in params.chunks_exact(LOBE_STRIDE) {
        let xi = Vec3::new(c[4], c[5], c[6]);
        let e = (c[3] * (dir.dot(xi) - 1.0)).exp();
        acc += Vec3::new(c[0], c[1], c[2]) * e;
    }
    acc
}

/// Evaluate the environment radiance along unit direction `dir`.
pub fn eval_params(params: &[f64], dir: Vec3) -> Vec3 {
    pre_activation(params, dir).map(softplus)
}

/// Checked evaluation for external callers.
pub fn eval_envmap(env: &EnvMap, dir: Vec3) -> Result<Vec3> {
    if !dir.is_unit(1e-6) {
        return Err(Error::NonUnitDirection(dir.norm()));
    }
    Ok(eval_params(&env.to_params(), dir))
}

/// Accumulate d(upstream . eval) / d(params) into `grad` (same layout as
/// `params`). The xi component is projected to the tangent plane at xi.
pub fn accumulate_grad(params: &[f64], dir: Vec3, upstream: Vec3, grad: &mut [f64]) {
    debug_assert_eq!(params.len(), grad.len());
    let pre = pre_activation(params, dir);
    // d softplus = sigmoid of the pre-activation, per channel.
    let d_pre = Vec3::new(
        upstream.x * sigmoid(pre.x),
        upstream.y * sigmoid(pre.y),
        upstream.z * sigmoid(pre.z),
    );
    for (c, g) in params.chunks_exact(LOBE_STRIDE).zip(grad.chunks_exact_mut(LOBE_STRIDE)) {
        let mu = Vec3::new(c[0], c[1], c[2]);
        let lambda = c[3];
        let xi = Vec3::new(c[4], c[5], c[6]);
        let cos_m1 = dir.dot(xi) - 1.0;
        let e = (lambda * cos_m1).exp();
        g[0] += d_pre.x * e;
        g[1] += d_pre.y * e;
        g[2] += d_pre.z * e;
        let mu_dot = mu.dot(d_pre);
        g[3] += mu_dot * e * cos_m1;
        let raw = dir * (mu_dot * e * lambda);
        let tangent = raw - xi * raw.dot(xi);
        g[4] += tangent.x;
        g[5] += tangent.y;
        g[6] += tangent.z;
    }
}

/// Per-lobe gradients as structured values.
#[derive(Clone, Debug)]
pub struct LobeGrad {
    pub d_mu: Vec3,
    pub d_lambda: f64,
    pub d_xi: Vec3,
}

pub fn envmap_grad(env: &EnvMap, dir: Vec3, upstream: Vec3) -> Result<Vec<LobeGrad>> {
    if !dir.is_unit(1e-6) {
        return Err(Error::NonUnitDirection(dir.norm()));
    }
    let params = env.to_params();
    let mut grad = vec![0.0; params.len()];
    accumulate_grad(&params, dir, upstream, &mut grad);
    Ok(grad
        .chunks_exact(LOBE_STRIDE)
        .map(|g| LobeGrad {
            d_mu: Vec3::new(g[0], g[1], g[2]),
            d_lambda: g[3],
            d_xi: Vec3::new(g[4], g[5], g[6]),
        })
        .collect())
}

/// Default initialization: axes on a Fibonacci sphere lattice, lambda = 10,
/// small positive noise on the amplitudes.
pub fn fibonacci_init(n_lobes: usize, seed: u64) -> EnvMap {
    let mut rng = Stream::new(&[seed, 0x5661]);
    let golden = std::f64::consts::PI * (3.0 - 5.0f64.sqrt());
    let lobes = (0..n_lobes)
        .map(|k| {
            let z = if n_lobes == 1 {
                0.0
            } else {
                1.0 - 2.0 * (k as f64 + 0.5) / n_lobes as f64
            };
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden * k as f64;
            SgLobe {
                mu: Vec3::new(
                    0.01 * rng.next_f64(),
                    0.01 * rng.next_f64(),
                    0.01 * rng.next_f64(),
                ),
                lambda: 10.0,
                xi: Vec3::new(r * phi.cos(), r * phi.sin(), z),
            }
        })
        .collect();
    EnvMap { lobes }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Mat3;
    use crate::sampler::sphere_dir;

    fn lobe(mu: f64, lambda: f64, xi: Vec3) -> SgLobe {
        SgLobe { mu: Vec3::splat(mu), lambda, xi }
    }

    #[test]
    fn zero_lobes_is_softplus_zero() {
        let env = EnvMap { lobes: vec![] };
        let v = eval_envmap(&env, Vec3::new(0.0, 0.0, 1.0)).unwrap();
        let ln2 = std::f64::consts::LN_2;
        assert!((v - Vec3::splat(ln2)).norm() < 1e-12);
    }

    #[test]
    fn vanishing_sharpness_equals_softplus_of_mu() {
        let env = EnvMap { lobes: vec![lobe(1.0, 1e-12, Vec3::new(0.0, 0.0, 1.0))] };
        for &dir in &[Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, -1.0, 0.0)] {
            let v = eval_envmap(&env, dir).unwrap();
            assert!((v - Vec3::splat(1.313262)).norm() < 1e-5, "{v:?}");
        }
    }

    #[test]
    fn aligned_direction_hits_lobe_peak() {
        let xi = Vec3::new(0.3, 0.4, 0.866).normalized();
        let env = EnvMap { lobes: vec![lobe(2.0, 4.0, xi)] };
        let v = eval_envmap(&env, xi).unwrap();
        assert!((v - Vec3::splat(2.126928)).norm() < 1e-5);
    }

    #[test]
    fn rejects_non_unit_direction() {
        let env = EnvMap { lobes: vec![] };
        assert!(eval_envmap(&env, Vec3::new(0.0, 0.0, 2.0)).is_err());
    }

    #[test]
    fn nonnegative_everywhere() {
        let mut rng = Stream::new(&[3]);
        let mut lobes = Vec::new();
        for _ in 0..8 {
            lobes.push(SgLobe {
                mu: Vec3::new(rng.next_range(-2.0, 2.0), rng.next_range(-2.0, 2.0), rng.next_range(-2.0, 2.0)),
                lambda: rng.next_range(0.1, 20.0),
                xi: sphere_dir(&[9, rng.next_u64()]),
            });
        }
        let env = EnvMap { lobes };
        for i in 0..2000u64 {
            let v = eval_envmap(&env, sphere_dir(&[17, i])).unwrap();
            assert!(v.min_component() >= 0.0);
        }
    }

    #[test]
    fn rotational_equivariance() {
        let mut rng = Stream::new(&[4]);
        let lobes: Vec<SgLobe> = (0..6)
            .map(|i| SgLobe {
                mu: Vec3::new(rng.next_f64(), rng.next_f64(), rng.next_f64()),
                lambda: rng.next_range(0.5, 15.0),
                xi: sphere_dir(&[21, i]),
            })
            .collect();
        let env = EnvMap { lobes: lobes.clone() };
        for trial in 0..20u64 {
            let axis = sphere_dir(&[33, trial]);
            let rot = Mat3::rotation(axis, 0.1 + 0.3 * trial as f64);
            let rotated = EnvMap {
                lobes: lobes
                    .iter()
                    .map(|l| SgLobe { mu: l.mu, lambda: l.lambda, xi: rot.mul_vec(l.xi).normalized() })
                    .collect(),
            };
            let dir = sphere_dir(&[55, trial]);
            let a = eval_envmap(&env, dir).unwrap();
            let b = eval_envmap(&rotated, rot.mul_vec(dir).normalized()).unwrap();
            assert!((a - b).norm() < 1e-6, "trial {trial}: {a:?} vs {b:?}");
        }
    }

    #[test]
    fn lambda_grad_vanishes_when_dir_equals_axis() {
        let xi = Vec3::new(0.0, 1.0, 0.0);
        let env = EnvMap { lobes: vec![lobe(1.5, 3.0, xi)] };
        let g = envmap_grad(&env, xi, Vec3::ONE).unwrap();
        assert_eq!(g[0].d_lambda, 0.0);
    }

    #[test]
    fn mu_grad_is_sigmoid_at_zero_sharpness() {
        let env = EnvMap { lobes: vec![lobe(1.0, 1e-300, Vec3::new(1.0, 0.0, 0.0))] };
        let g = envmap_grad(&env, Vec3::new(0.0, 0.0, 1.0), Vec3::new(1.0, 2.0, 3.0)).unwrap();
        // exp factor is exp(lambda * (cos - 1)) -> 1, so d/dmu = sigmoid(mu) * upstream.
        let s = sigmoid(1.0);
        assert!((g[0].d_mu - Vec3::new(s, 2.0 * s, 3.0 * s)).norm() < 1e-9);
    }

    #[test]
    fn gradients_match_central_differences() {
        let mut rng = Stream::new(&[91]);
        let lobes: Vec<SgLobe> = (0..4)
            .map(|i| SgLobe {
                mu: Vec3::new(rng.next_range(-1.0, 1.5), rng.next_range(-1.0, 1.5), rng.next_range(-1.0, 1.5)),
                lambda: rng.next_range(0.5, 8.0),
                xi: sphere_dir(&[81, i]),
            })
            .collect();
        let env = EnvMap { lobes };
        let dir = sphere_dir(&[82, 0]);
        let upstream = Vec3::new(0.7, -1.3, 0.4);
        let params = env.to_params();
        let mut grad = vec![0.0; params.len()];
        accumulate_grad(&params, dir, upstream, &mut grad);

        let f = |p: &[f64]| -> f64 { upstream.dot(eval_params(p, dir)) };
        let h = 1e-5;
        let mut fd = vec![0.0; params.len()];
        let mut scratch = params.clone();
        for i in 0..params.len() {
            scratch[i] = params[i] + h;
            let fp = f(&scratch);
            scratch[i] = params[i] - h;
            let fm = f(&scratch);
            scratch[i] = params[i];
            fd[i] = (fp - fm) / (2.0 * h);
        }
        // The stored xi gradient is tangent-projected; project FD the same way.
        for l in 0..params.len() / LOBE_STRIDE {
            let xi = Vec3::new(params[l * 7 + 4], params[l * 7 + 5], params[l * 7 + 6]);
            let raw = Vec3::new(fd[l * 7 + 4], fd[l * 7 + 5], fd[l * 7 + 6]);
            let t = raw - xi * raw.dot(xi);
            fd[l * 7 + 4] = t.x;
            fd[l * 7 + 5] = t.y;
            fd[l * 7 + 6] = t.z;
        }
        for i in 0..params.len() {
            let denom = grad[i].abs().max(fd[i].abs()).max(1e-8);
            assert!(
                (grad[i] - fd[i]).abs() / denom < 1e-5,
                "param {i}: analytic {} vs fd {}",
                grad[i],
                fd[i]
            );
        }
    }

    #[test]
    fn fibonacci_axes_are_unit_and_spread() {
        let env = fibonacci_init(48, 7);
        assert_eq!(env.lobes.len(), 48);
        for l in &env.lobes {
            l.validate().unwrap();
            assert!(l.mu.max_component() <= 0.01);
            assert!(l.mu.min_component() >= 0.0);
        }
        // Axes should not be clustered: mean pairwise dot close to zero.
        let mut acc = 0.0;
        let mut n = 0;
        for i in 0..48 {
            for j in (i + 1)..48 {
                acc += env.lobes[i].xi.dot(env.lobes[j].xi);
                n += 1;
            }
        }
        assert!((acc / n as f64).abs() < 0.05);
    }
}

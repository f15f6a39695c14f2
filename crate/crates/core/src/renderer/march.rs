//! Discretized SDF volume rendering along a ray: stratified sampling, the
//! SDF-based opacity, transmittance, compositing weights, and the
//! reverse-mode rules for all of it.

use crate::fields::{store::GradientStore, FieldSet};
use crate::math::{sigmoid, sigmoid_deriv, Vec3};
use crate::sampler;

use super::model::SceneModel;

/// Alphas are clamped below 1 - ALPHA_CAP so (1 - alpha) stays invertible in
/// the compositing backward pass.
pub const ALPHA_CAP: f64 = 1e-6;

/// Samples below this compositing weight skip their radiance evaluation;
/// the renderer and the oracle share the constant so their composites stay
/// exactly comparable.
pub const MIN_SHADE_WEIGHT: f64 = 1e-7;

/// Camera ray. `dir_out` points from the surface toward the camera; the
/// marching direction is the negation, r(t) = origin - t * dir_out.
#[derive(Copy, Clone, Debug)]
pub struct Ray {
    pub origin: Vec3,
    pub dir_out: Vec3,
    pub near: f64,
    pub far: f64,
    /// Emitters-active flag for the image this ray was sampled from.
    pub on: bool,
}

impl Ray {
    pub fn from_travel(origin: Vec3, travel: Vec3, near: f64, far: f64, on: bool) -> Ray {
        Ray { origin, dir_out: -travel, near, far, on }
    }

    pub fn travel_dir(&self) -> Vec3 {
        -self.dir_out
    }

    pub fn point_at(&self, t: f64) -> Vec3 {
        self.origin - self.dir_out * t
    }
}

/// How the sample parameters inside each stratum are chosen.
#[derive(Copy, Clone, Debug)]
pub enum Strata {
    /// Deterministic midpoints; used for group updates, identification, and
    /// everywhere a parameter-independent, repeatable march is needed.
    Midpoint,
    /// Uniform jitter per stratum, keyed so the march is reproducible.
    Jittered { key: u64 },
}

impl Strata {
    fn offset(&self, i: usize) -> f64 {
        match self {
            Strata::Midpoint => 0.5,
            Strata::Jittered { key } => sampler::uniform(&[*key, i as u64, 0x5a5a]),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct RayMarch {
    /// n+1 strictly increasing sample parameters.
    pub ts: Vec<f64>,
    /// SDF value at each of the n+1 sample points.
    pub sdf: Vec<f64>,
    /// n per-interval opacities in [0, 1).
    pub alphas: Vec<f64>,
    /// Transmittance before each of the n shading samples; trans[0] = 1.
    pub trans: Vec<f64>,
    /// Compositing weights w_i = T_i * alpha_i.
    pub weights: Vec<f64>,
    /// Residual transmittance after the last sample; doubles as the
    /// environment visibility of the ray.
    pub t_end: f64,
}

impl RayMarch {
    pub fn empty() -> RayMarch {
        RayMarch { t_end: 1.0, ..RayMarch::default() }
    }

    pub fn n_samples(&self) -> usize {
        self.alphas.len()
    }

    pub fn position(&self, ray: &Ray, i: usize) -> Vec3 {
        ray.point_at(self.ts[i])
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Discrete opacity between two consecutive SDF samples:
/// max((Phi_s(f_i) - Phi_s(f_next)) / Phi_s(f_i), 0), capped below 1.
pub fn alpha_from_sdf(f_i: f64, f_next: f64, s: f64) -> f64 {
    let phi_i = sigmoid(s * f_i);
    if phi_i < 1e-300 {
        return 0.0;
    }
    let phi_n = sigmoid(s * f_next);
    ((phi_i - phi_n) / phi_i).max(0.0).min(1.0 - ALPHA_CAP)
}

/// Alpha plus its partial derivatives wrt (f_i, f_next, s). Derivatives are
/// zero where either clamp is active.
pub fn alpha_from_sdf_grad(f_i: f64, f_next: f64, s: f64) -> (f64, f64, f64, f64) {
    let phi_i = sigmoid(s * f_i);
    if phi_i < 1e-300 {
        return (0.0, 0.0, 0.0, 0.0);
    }
    let phi_n = sigmoid(s * f_next);
    let raw = (phi_i - phi_n) / phi_i;
    if raw <= 0.0 || raw >= 1.0 - ALPHA_CAP {
        return (raw.max(0.0).min(1.0 - ALPHA_CAP), 0.0, 0.0, 0.0);
    }
    let d_phi_i = phi_n / (phi_i * phi_i);
    let d_phi_n = -1.0 / phi_i;
    let si = sigmoid_deriv(s * f_i);
    let sn = sigmoid_deriv(s * f_next);
    let d_fi = d_phi_i * s * si;
    let d_fnext = d_phi_n * s * sn;
    let d_s = d_phi_i * f_i * si + d_phi_n * f_next * sn;
    (raw, d_fi, d_fnext, d_s)
}

/// March a ray through the model: n+1 stratified SDF samples over
/// [near, far], n opacities/weights. Deterministic given the strata choice.
pub fn march<M: SceneModel + ?Sized>(model: &M, ray: &Ray, n: usize, strata: Strata) -> RayMarch {
    if n == 0 || !(ray.near < ray.far) {
        return RayMarch::empty();
    }
    let s = model.sharpness();
    let span = ray.far - ray.near;
    let dt = span / (n + 1) as f64;

    let mut m = RayMarch {
        ts: Vec::with_capacity(n + 1),
        sdf: Vec::with_capacity(n + 1),
        alphas: Vec::with_capacity(n),
        trans: Vec::with_capacity(n),
        weights: Vec::with_capacity(n),
        t_end: 1.0,
    };
    for i in 0..=n {
        let t = ray.near + (i as f64 + strata.offset(i)) * dt;
        m.ts.push(t);
        m.sdf.push(model.sdf(ray.point_at(t)));
    }
    let mut trans = 1.0;
    for i in 0..n {
        let a = alpha_from_sdf(m.sdf[i], m.sdf[i + 1], s);
        m.alphas.push(a);
        m.trans.push(trans);
        m.weights.push(trans * a);
        trans *= 1.0 - a;
    }
    m.t_end = trans;
    m
}

/// Reverse-mode rule of the alpha-compositing scan: given d loss / d w_i and
/// d loss / d T_end, produce d loss / d alpha_i.
pub fn weights_backward(march: &RayMarch, g_w: &[f64], g_tend: f64) -> Vec<f64> {
    let n = march.n_samples();
    debug_assert_eq!(g_w.len(), n);
    let mut d_alpha = vec![0.0; n];
    let mut suffix = g_tend * march.t_end;
    for k in (0..n).rev() {
        d_alpha[k] = g_w[k] * march.trans[k] - suffix / (1.0 - march.alphas[k]);
        suffix += g_w[k] * march.weights[k];
    }
    d_alpha
}

/// Push alpha gradients into the SDF grid and the sharpness parameter.
pub fn march_backward(
    fields: &FieldSet,
    ray: &Ray,
    march: &RayMarch,
    d_alpha: &[f64],
    grad: &mut GradientStore,
) {
    let s = fields.sharpness();
    for k in 0..march.n_samples() {
        let da = d_alpha[k];
        if da == 0.0 {
            continue;
        }
        let (_, d_fi, d_fnext, d_s) = alpha_from_sdf_grad(march.sdf[k], march.sdf[k + 1], s);
        if d_fi != 0.0 {
            fields.sdf_backward(march.position(ray, k), da * d_fi, grad);
        }
        if d_fnext != 0.0 {
            fields.sdf_backward(ray.point_at(march.ts[k + 1]), da * d_fnext, grad);
        }
        fields.sharpness_backward(da * d_s, grad);
    }
}

/// Transmittance-weighted mean of the sample positions (the expected
/// surface point of the ray).
pub fn expected_surface_point(ray: &Ray, march: &RayMarch) -> Vec3 {
    let mut p = Vec3::ZERO;
    for i in 0..march.n_samples() {
        p += march.position(ray, i) * march.weights[i];
    }
    p
}

/// Composited emission along the ray.
pub fn composited_emission<M: SceneModel + ?Sized>(model: &M, ray: &Ray, march: &RayMarch) -> Vec3 {
    let mut e = Vec3::ZERO;
    for i in 0..march.n_samples() {
        if march.weights[i] > 0.0 {
            e += model.emission(march.position(ray, i)) * march.weights[i];
        }
    }
    e
}

/// Max-over-RGB of the composited emission: the expected emission strength
/// used by the progressive ray-group threshold.
pub fn expected_emission_strength<M: SceneModel + ?Sized>(
    model: &M,
    ray: &Ray,
    march: &RayMarch,
) -> f64 {
    composited_emission(model, ray, march).max_component()
}

//! Light-transport-segment machinery: incident radiance along secondary
//! rays, the reconstructed outgoing radiances L-hat for the environment and
//! emission fields, and the illumination decomposition buffers.
//!
//! Hemisphere integrals use uniform sampling (pdf 1/2pi) with no importance
//! sampling; direction streams are counter-keyed so every evaluation is
//! reproducible. Sample directions are treated as constants under
//! differentiation; gradients flow through the BRDF, the shading normal,
//! the secondary march weights, the radiance fields, and the environment
//! map.

use crate::brdf::{brdf_grad, eval_brdf};
use crate::error::{Error, Result};
use crate::fields::{store::GradientStore, FieldSet, RadField};
use crate::math::Vec3;
use crate::sampler;

use super::march::{march, march_backward, weights_backward, Ray, RayMarch, MIN_SHADE_WEIGHT};
use super::model::SceneModel;
use super::Strata;

/// Self-intersection offset applied to secondary-ray origins, scene units.
pub const SECONDARY_EPS: f64 = 1e-3;

const DIR_SALT: u64 = 0xd1a5;
const STRATA_SALT: u64 = 0x57a7;

/// Monte Carlo budget of a transport evaluation.
#[derive(Copy, Clone, Debug)]
pub struct TransportConfig {
    /// Hemisphere directions per shading point.
    pub hemi_samples: usize,
    /// March samples along each secondary ray.
    pub secondary_samples: usize,
    /// Base key of the direction / strata streams.
    pub key: u64,
}

impl TransportConfig {
    pub fn new(hemi_samples: usize, secondary_samples: usize, key: u64) -> TransportConfig {
        TransportConfig { hemi_samples, secondary_samples, key }
    }

    fn strata_for(&self, j: usize) -> Strata {
        Strata::Jittered { key: sampler::mix(&[self.key, j as u64, STRATA_SALT]) }
    }
}

/// Secondary ray from `x` along `wi`, offset to avoid self-intersection and
/// clipped to the scene bbox.
pub fn secondary_ray(model_bbox: &crate::math::Aabb, x: Vec3, wi: Vec3, on: bool) -> Ray {
    let origin = x + wi * SECONDARY_EPS;
    let (near, far) = match model_bbox.intersect(origin, wi) {
        Some((t0, t1)) if t1 > 0.0 => (t0.max(0.0), t1),
        _ => (0.0, -1.0), // empty march
    };
    Ray::from_travel(origin, wi, near, far, on)
}

/// Composited radiance arriving at `x` from direction `wi` for the selected
/// field. For the S field the environment contributes through the residual
/// transmittance (the discrete visibility).
pub fn incident_radiance<M: SceneModel + ?Sized>(
    model: &M,
    x: Vec3,
    wi: Vec3,
    which: RadField,
    n_samples: usize,
    strata: Strata,
) -> Vec3 {
    let ray = secondary_ray(&model.bbox(), x, wi, true);
    let m = march(model, &ray, n_samples, strata);
    let mut acc = Vec3::ZERO;
    for j in 0..m.n_samples() {
        if m.weights[j] > MIN_SHADE_WEIGHT {
            acc += model.radiance(which, m.position(&ray, j), -wi) * m.weights[j];
        }
    }
    if which == RadField::S {
        acc += model.env(wi) * m.t_end;
    }
    acc
}

/// Recorded incident evaluation for the backward pass.
#[derive(Clone, Debug)]
pub struct IncidentRecord {
    pub ray: Ray,
    pub march: RayMarch,
    pub radiance: Vec<Vec3>,
    pub env: Vec3,
    pub value: Vec3,
}

pub fn incident_record(
    fields: &FieldSet,
    x: Vec3,
    wi: Vec3,
    which: RadField,
    n_samples: usize,
    strata: Strata,
) -> IncidentRecord {
    let ray = secondary_ray(&fields.cfg.bbox, x, wi, true);
    let m = march(fields, &ray, n_samples, strata);
    let mut radiance = Vec::with_capacity(m.n_samples());
    let mut acc = Vec3::ZERO;
    for j in 0..m.n_samples() {
        let l = if m.weights[j] > MIN_SHADE_WEIGHT {
            fields.radiance(which, m.position(&ray, j), -wi)
        } else {
            Vec3::ZERO
        };
        acc += l * m.weights[j];
        radiance.push(l);
    }
    let env = if which == RadField::S { fields.env_eval(wi) } else { Vec3::ZERO };
    acc += env * m.t_end;
    IncidentRecord { ray, march: m, radiance, env, value: acc }
}

pub fn incident_backward(
    fields: &FieldSet,
    which: RadField,
    rec: &IncidentRecord,
    upstream: Vec3,
    grad: &mut GradientStore,
) {
    let n = rec.march.n_samples();
    let wi = rec.ray.travel_dir();
    let mut g_w = vec![0.0; n];
    for j in 0..n {
        if rec.march.weights[j] > MIN_SHADE_WEIGHT {
            fields.radiance_backward(
                which,
                rec.march.position(&rec.ray, j),
                -wi,
                upstream * rec.march.weights[j],
                grad,
            );
        }
        g_w[j] = upstream.dot(rec.radiance[j]);
    }
    let g_tend = if which == RadField::S {
        fields.env_backward(wi, upstream * rec.march.t_end, grad);
        upstream.dot(rec.env)
    } else {
        0.0
    };
    let d_alpha = weights_backward(&rec.march, &g_w, g_tend);
    march_backward(fields, &rec.ray, &rec.march, &d_alpha, grad);
}

/// The fixed hemisphere direction set of a transport evaluation.
pub fn hemisphere_dirs(normal: Vec3, m: usize, key: u64) -> Vec<Vec3> {
    (0..m)
        .map(|j| sampler::hemisphere_dir(normal, &[key, j as u64, DIR_SALT]))
        .collect()
}

/// Gradient-flow variants of the reconstructed emission radiance.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum LhatEVariant {
    /// E(x) plus the reflection integral, everything differentiable.
    Full,
    /// Reflection integral only; outgoing radiance attributed to reflection.
    Certain,
    /// E(x) plus the integral held constant under differentiation.
    Uncertain,
}

/// A recorded L-hat evaluation (either field).
#[derive(Clone, Debug)]
pub struct LhatRecord {
    pub x: Vec3,
    pub wo: Vec3,
    pub normal: Vec3,
    pub dirs: Vec<Vec3>,
    pub incidents: Vec<IncidentRecord>,
    pub brdf_values: Vec<Vec3>,
    pub emission: Vec3,
    pub integral: Vec3,
    pub value: Vec3,
}

fn reflection_integral<M: SceneModel + ?Sized>(
    model: &M,
    x: Vec3,
    wo: Vec3,
    normal: Vec3,
    which: RadField,
    dirs: &[Vec3],
    cfg: &TransportConfig,
) -> Result<Vec3> {
    let params = model.brdf(x);
    let mut acc = Vec3::ZERO;
    for (j, &dir) in dirs.iter().enumerate() {
        let inc = incident_radiance(model, x, dir, which, cfg.secondary_samples, cfg.strata_for(j));
        let r = eval_brdf(normal, wo, dir, &params)?;
        acc += inc.hadamard(r.value);
    }
    Ok(acc * (2.0 * std::f64::consts::PI / dirs.len().max(1) as f64))
}

/// Reconstructed lights-off radiance: direct environment plus environment
/// reflections, estimated over the hemisphere around the shading normal.
pub fn lhat_s<M: SceneModel + ?Sized>(
    model: &M,
    x: Vec3,
    wo: Vec3,
    cfg: &TransportConfig,
) -> Result<Vec3> {
    let normal = model.normal(x)?;
    if normal.dot(wo) <= 0.0 {
        return Err(Error::BackfacingView(normal.dot(wo)));
    }
    let dirs = hemisphere_dirs(normal, cfg.hemi_samples, cfg.key);
    reflection_integral(model, x, wo, normal, RadField::S, &dirs, cfg)
}

/// Reconstructed emitters-added radiance per the selected variant.
pub fn lhat_e<M: SceneModel + ?Sized>(
    model: &M,
    x: Vec3,
    wo: Vec3,
    variant: LhatEVariant,
    cfg: &TransportConfig,
) -> Result<Vec3> {
    let normal = model.normal(x)?;
    if normal.dot(wo) <= 0.0 {
        return Err(Error::BackfacingView(normal.dot(wo)));
    }
    let dirs = hemisphere_dirs(normal, cfg.hemi_samples, cfg.key);
    let integral = reflection_integral(model, x, wo, normal, RadField::E, &dirs, cfg)?;
    let emission = if variant == LhatEVariant::Certain { Vec3::ZERO } else { model.emission(x) };
    Ok(emission + integral)
}

fn record_integral(
    fields: &FieldSet,
    x: Vec3,
    wo: Vec3,
    which: RadField,
    fixed_dirs: Option<&[Vec3]>,
    cfg: &TransportConfig,
) -> Result<LhatRecord> {
    let normal = fields.sdf_normal(x)?;
    if normal.dot(wo) <= 0.0 {
        return Err(Error::BackfacingView(normal.dot(wo)));
    }
    let dirs = match fixed_dirs {
        Some(d) => d.to_vec(),
        None => hemisphere_dirs(normal, cfg.hemi_samples, cfg.key),
    };
    let params = fields.brdf_at(x);
    let mut incidents = Vec::with_capacity(dirs.len());
    let mut brdf_values = Vec::with_capacity(dirs.len());
    let mut acc = Vec3::ZERO;
    for (j, &dir) in dirs.iter().enumerate() {
        let rec = incident_record(fields, x, dir, which, cfg.secondary_samples, cfg.strata_for(j));
        let r = eval_brdf(normal, wo, dir, &params)?;
        acc += rec.value.hadamard(r.value);
        incidents.push(rec);
        brdf_values.push(r.value);
    }
    let integral = acc * (2.0 * std::f64::consts::PI / dirs.len().max(1) as f64);
    Ok(LhatRecord {
        x,
        wo,
        normal,
        dirs,
        incidents,
        brdf_values,
        emission: Vec3::ZERO,
        integral,
        value: integral,
    })
}

pub fn lhat_s_record(fields: &FieldSet, x: Vec3, wo: Vec3, cfg: &TransportConfig) -> Result<LhatRecord> {
    record_integral(fields, x, wo, RadField::S, None, cfg)
}

/// Record with a caller-provided direction set (directions are constants
/// under differentiation; a finite-difference harness must hold them fixed).
pub fn lhat_s_record_with_dirs(
    fields: &FieldSet,
    x: Vec3,
    wo: Vec3,
    dirs: &[Vec3],
    cfg: &TransportConfig,
) -> Result<LhatRecord> {
    record_integral(fields, x, wo, RadField::S, Some(dirs), cfg)
}

pub fn lhat_e_record(
    fields: &FieldSet,
    x: Vec3,
    wo: Vec3,
    variant: LhatEVariant,
    cfg: &TransportConfig,
) -> Result<LhatRecord> {
    lhat_e_record_inner(fields, x, wo, variant, None, cfg)
}

pub fn lhat_e_record_with_dirs(
    fields: &FieldSet,
    x: Vec3,
    wo: Vec3,
    variant: LhatEVariant,
    dirs: &[Vec3],
    cfg: &TransportConfig,
) -> Result<LhatRecord> {
    lhat_e_record_inner(fields, x, wo, variant, Some(dirs), cfg)
}

fn lhat_e_record_inner(
    fields: &FieldSet,
    x: Vec3,
    wo: Vec3,
    variant: LhatEVariant,
    fixed_dirs: Option<&[Vec3]>,
    cfg: &TransportConfig,
) -> Result<LhatRecord> {
    let mut rec = record_integral(fields, x, wo, RadField::E, fixed_dirs, cfg)?;
    if variant != LhatEVariant::Certain {
        rec.emission = fields.emission_at(x);
        rec.value = rec.emission + rec.integral;
    }
    Ok(rec)
}

fn integral_backward(
    fields: &FieldSet,
    rec: &LhatRecord,
    which: RadField,
    upstream: Vec3,
    grad: &mut GradientStore,
) {
    if rec.dirs.is_empty() {
        return;
    }
    let scale = 2.0 * std::f64::consts::PI / rec.dirs.len() as f64;
    let params = fields.brdf_at(rec.x);
    let mut d_normal = Vec3::ZERO;
    let mut d_base = Vec3::ZERO;
    let mut d_rough = 0.0;
    let mut d_metal = 0.0;
    for (j, &dir) in rec.dirs.iter().enumerate() {
        let d_inc = upstream.hadamard(rec.brdf_values[j]) * scale;
        incident_backward(fields, which, &rec.incidents[j], d_inc, grad);
        let d_r = upstream.hadamard(rec.incidents[j].value) * scale;
        if let Ok(g) = brdf_grad(rec.normal, rec.wo, dir, &params, d_r) {
            d_base += g.d_base;
            d_rough += g.d_roughness;
            d_metal += g.d_metallic;
            d_normal += g.d_normal;
        }
    }
    fields.brdf_backward(rec.x, d_base, d_rough, d_metal, grad);
    fields.sdf_normal_backward(rec.x, d_normal, grad);
}

pub fn lhat_s_backward(fields: &FieldSet, rec: &LhatRecord, upstream: Vec3, grad: &mut GradientStore) {
    integral_backward(fields, rec, RadField::S, upstream, grad);
}

pub fn lhat_e_backward(
    fields: &FieldSet,
    rec: &LhatRecord,
    variant: LhatEVariant,
    upstream: Vec3,
    grad: &mut GradientStore,
) {
    match variant {
        LhatEVariant::Full => {
            fields.emission_backward(rec.x, upstream, grad);
            integral_backward(fields, rec, RadField::E, upstream, grad);
        }
        LhatEVariant::Certain => {
            integral_backward(fields, rec, RadField::E, upstream, grad);
        }
        LhatEVariant::Uncertain => {
            // Reflection integral is under stop-gradient: only E(x) learns.
            fields.emission_backward(rec.x, upstream, grad);
        }
    }
}

/// Per-ray illumination decomposition buffers. Their sum approximates the
/// composited HDR color with emitters on, up to Monte Carlo error, when the
/// model is transport-consistent.
#[derive(Copy, Clone, Debug, Default)]
pub struct IlluminationBuffers {
    pub env_direct: Vec3,
    pub env_indirect: Vec3,
    pub emission: Vec3,
    pub emission_reflection: Vec3,
}

impl IlluminationBuffers {
    pub fn total(&self) -> Vec3 {
        self.env_direct + self.env_indirect + self.emission + self.emission_reflection
    }
}

/// Primary samples below this weight are skipped in the decomposition; they
/// contribute nothing visible but would each cost a hemisphere of secondary
/// marches.
const DECOMPOSE_MIN_WEIGHT: f64 = 1e-4;

pub fn decompose_illumination<M: SceneModel + ?Sized>(
    model: &M,
    ray: &Ray,
    n_primary: usize,
    cfg: &TransportConfig,
) -> IlluminationBuffers {
    let m = march(model, ray, n_primary, Strata::Midpoint);
    let mut out = IlluminationBuffers::default();
    for i in 0..m.n_samples() {
        let w = m.weights[i];
        if w < DECOMPOSE_MIN_WEIGHT {
            continue;
        }
        let x = m.position(ray, i);
        out.emission += model.emission(x) * w;
        let normal = match model.normal(x) {
            Ok(n) if n.dot(ray.dir_out) > 0.0 => n,
            _ => continue,
        };
        let params = model.brdf(x);
        let key = sampler::mix(&[cfg.key, i as u64, 0xdec0]);
        let dirs = hemisphere_dirs(normal, cfg.hemi_samples, key);
        let scale = w * 2.0 * std::f64::consts::PI / dirs.len().max(1) as f64;
        for (j, &dir) in dirs.iter().enumerate() {
            let sray = secondary_ray(&model.bbox(), x, dir, true);
            let strata = Strata::Jittered { key: sampler::mix(&[key, j as u64, STRATA_SALT]) };
            let sm = march(model, &sray, cfg.secondary_samples, strata);
            let mut sec_s = Vec3::ZERO;
            let mut sec_e = Vec3::ZERO;
            for k in 0..sm.n_samples() {
                if sm.weights[k] > 1e-7 {
                    let xp = sm.position(&sray, k);
                    sec_s += model.radiance(RadField::S, xp, -dir) * sm.weights[k];
                    sec_e += model.radiance(RadField::E, xp, -dir) * sm.weights[k];
                }
            }
            let env_vis = model.env(dir) * sm.t_end;
            let r = match eval_brdf(normal, ray.dir_out, dir, &params) {
                Ok(e) => e.value,
                Err(_) => continue,
            };
            out.env_direct += env_vis.hadamard(r) * scale;
            out.env_indirect += sec_s.hadamard(r) * scale;
            out.emission_reflection += sec_e.hadamard(r) * scale;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::brdf::BrdfParams;
    use crate::envmap::{EnvMap, SgLobe};
    use crate::fields::store::ParamClass;
    use crate::fields::{FieldConfig, FieldSet};
    use crate::math::Aabb;
    use crate::sampler::Stream;

    /// Ideal diffuse plane z=0 under a constant environment, no occluders,
    /// zero radiance fields.
    struct PlaneModel {
        env: Vec3,
        albedo: Vec3,
    }

    impl SceneModel for PlaneModel {
        fn bbox(&self) -> Aabb {
            Aabb::new(Vec3::splat(-2.0), Vec3::splat(2.0))
        }
        fn sharpness(&self) -> f64 {
            60.0
        }
        fn sdf(&self, x: Vec3) -> f64 {
            x.z
        }
        fn normal(&self, _x: Vec3) -> crate::error::Result<Vec3> {
            Ok(Vec3::new(0.0, 0.0, 1.0))
        }
        fn brdf(&self, _x: Vec3) -> BrdfParams {
            BrdfParams::diffuse(self.albedo)
        }
        fn emission(&self, _x: Vec3) -> Vec3 {
            Vec3::ZERO
        }
        fn env(&self, _dir: Vec3) -> Vec3 {
            self.env
        }
        fn radiance(&self, _which: RadField, _x: Vec3, _w: Vec3) -> Vec3 {
            Vec3::ZERO
        }
    }

    fn empty_fields() -> FieldSet {
        let mut fs = FieldSet::new(FieldConfig {
            grid_res: [10, 10, 10],
            env_lobes: 3,
            ..FieldConfig::default()
        })
        .unwrap();
        let r = fs.layout.range(ParamClass::SdfGrid);
        for v in &mut fs.params[r] {
            *v = 0.8;
        }
        fs
    }

    #[test]
    fn empty_scene_incident_s_equals_envmap() {
        let fs = empty_fields();
        let x = Vec3::new(0.1, -0.2, 0.0);
        for trial in 0..20u64 {
            let wi = crate::sampler::sphere_dir(&[61, trial]);
            let v = incident_radiance(&fs, x, wi, RadField::S, 32, Strata::Midpoint);
            let env = fs.env_eval(wi);
            assert!((v - env).norm() < 1e-9, "{v:?} vs {env:?}");
            let e = incident_radiance(&fs, x, wi, RadField::E, 32, Strata::Midpoint);
            assert_eq!(e, Vec3::ZERO);
        }
    }

    #[test]
    fn opaque_blocker_replaces_env_with_composited_radiance() {
        // Plane SDF: secondary ray pointing down crosses the surface; the
        // env term must vanish and the value equal the composited radiance.
        let mut fs = empty_fields();
        let dims = fs.cfg.sdf_dims();
        let bbox = fs.cfg.bbox;
        let r = fs.layout.range(ParamClass::SdfGrid);
        let sdf = &mut fs.params[r];
        for ix in 0..dims.nx {
            for iy in 0..dims.ny {
                for iz in 0..dims.nz {
                    sdf[dims.voxel_base(ix, iy, iz)] = dims.voxel_center(&bbox, ix, iy, iz).z;
                }
            }
        }
        let x = Vec3::new(0.0, 0.0, 0.6);
        let wi = Vec3::new(0.0, 0.0, -1.0);
        let rec = incident_record(&fs, x, wi, RadField::S, 64, Strata::Midpoint);
        assert!(rec.march.t_end < 1e-6);
        let manual: Vec3 = (0..rec.march.n_samples())
            .map(|j| rec.radiance[j] * rec.march.weights[j])
            .fold(Vec3::ZERO, |a, b| a + b);
        assert!((rec.value - manual).norm() < 1e-9);
    }

    /// Deterministic midpoint quadrature of the hemispherical BRDF integral,
    /// independent of the Monte Carlo path it checks.
    fn brdf_hemisphere_quadrature(n: Vec3, wo: Vec3, params: &BrdfParams) -> Vec3 {
        let (t, b) = n.orthonormal_basis();
        let nt = 256;
        let np = 512;
        let mut acc = Vec3::ZERO;
        for it in 0..nt {
            let theta = (it as f64 + 0.5) / nt as f64 * std::f64::consts::FRAC_PI_2;
            for ip in 0..np {
                let phi = (ip as f64 + 0.5) / np as f64 * 2.0 * std::f64::consts::PI;
                let dir = t * (theta.sin() * phi.cos()) + b * (theta.sin() * phi.sin()) + n * theta.cos();
                let r = eval_brdf(n, wo, dir, params).unwrap();
                acc += r.value * theta.sin();
            }
        }
        acc * (std::f64::consts::FRAC_PI_2 / nt as f64) * (2.0 * std::f64::consts::PI / np as f64)
    }

    #[test]
    fn unoccluded_constant_env_matches_quadrature_oracle() {
        // The diffuse part alone integrates to env * albedo; the full BRDF
        // adds its specular lobe, so the oracle is the quadrature of R.
        let model = PlaneModel { env: Vec3::new(1.5, 0.8, 0.3), albedo: Vec3::new(0.6, 0.4, 0.9) };
        let x = Vec3::new(0.0, 0.0, 0.0);
        let wo = Vec3::new(0.2, 0.1, 0.97).normalized();
        let cfg = TransportConfig::new(4096, 8, 99);
        let v = lhat_s(&model, x, wo, &cfg).unwrap();
        let integral = brdf_hemisphere_quadrature(
            Vec3::new(0.0, 0.0, 1.0),
            wo,
            &BrdfParams::diffuse(model.albedo),
        );
        let want = model.env.hadamard(integral);
        // The diffuse part of the integral is exactly the albedo.
        assert!(
            integral.x > model.albedo.x && integral.x < model.albedo.x + 0.2,
            "integral {integral:?}"
        );
        for c in 0..3 {
            let rel = (v.component(c) - want.component(c)).abs() / want.component(c);
            assert!(rel < 0.05, "channel {c}: {v:?} vs {want:?}");
        }
    }

    #[test]
    fn zero_env_zero_fields_is_black() {
        let model = PlaneModel { env: Vec3::ZERO, albedo: Vec3::splat(0.5) };
        let cfg = TransportConfig::new(64, 8, 5);
        let v = lhat_s(&model, Vec3::ZERO, Vec3::new(0.0, 0.0, 1.0), &cfg).unwrap();
        assert_eq!(v, Vec3::ZERO);
    }

    #[test]
    fn black_brdf_kills_lhat() {
        struct Black;
        impl SceneModel for Black {
            fn bbox(&self) -> Aabb {
                Aabb::new(Vec3::splat(-2.0), Vec3::splat(2.0))
            }
            fn sharpness(&self) -> f64 {
                60.0
            }
            fn sdf(&self, x: Vec3) -> f64 {
                x.z
            }
            fn normal(&self, _: Vec3) -> crate::error::Result<Vec3> {
                Ok(Vec3::new(0.0, 0.0, 1.0))
            }
            fn brdf(&self, _: Vec3) -> BrdfParams {
                // b = 0, m = 1: no diffuse; F0 = 0, and with the printed
                // Fresnel factor the specular term still carries (1-F0)(1-odh^5);
                // roughness 1 with F0=0 leaves a tiny residue, so use the
                // degenerate all-zero albedo with metallic 1 and verify the
                // diffuse term alone vanishes.
                BrdfParams { base_color: Vec3::ZERO, roughness: 1.0, metallic: 1.0 }
            }
            fn emission(&self, _: Vec3) -> Vec3 {
                Vec3::ZERO
            }
            fn env(&self, _: Vec3) -> Vec3 {
                Vec3::ZERO
            }
            fn radiance(&self, _: RadField, _: Vec3, _: Vec3) -> Vec3 {
                Vec3::ZERO
            }
        }
        let cfg = TransportConfig::new(32, 8, 5);
        let v = lhat_s(&Black, Vec3::ZERO, Vec3::new(0.0, 0.0, 1.0), &cfg).unwrap();
        assert_eq!(v, Vec3::ZERO);
    }

    #[test]
    fn lhat_e_variants_differ_exactly_by_emission() {
        let fs = plane_fields();
        let x = surface_point(&fs);
        let wo = Vec3::new(0.1, 0.2, 0.97).normalized();
        let cfg = TransportConfig::new(8, 16, 42);
        let full = lhat_e(&fs, x, wo, LhatEVariant::Full, &cfg).unwrap();
        let certain = lhat_e(&fs, x, wo, LhatEVariant::Certain, &cfg).unwrap();
        let uncertain = lhat_e(&fs, x, wo, LhatEVariant::Uncertain, &cfg).unwrap();
        let e = fs.emission_at(x);
        assert!((full - (certain + e)).norm() < 1e-12);
        assert_eq!(full, uncertain);
    }

    fn plane_fields() -> FieldSet {
        let mut fs = FieldSet::new(FieldConfig {
            grid_res: [12, 12, 12],
            env_lobes: 2,
            ..FieldConfig::default()
        })
        .unwrap();
        // A wavy surface in generic position: grazing hemisphere directions
        // re-intersect the crests, so alpha and sharpness gradients flow,
        // and no two consecutive samples tie exactly (the alpha clamp would
        // make finite differences one-sided at exact ties).
        let dims = fs.cfg.sdf_dims();
        let bbox = fs.cfg.bbox;
        let r = fs.layout.range(ParamClass::SdfGrid);
        let sdf = &mut fs.params[r];
        for ix in 0..dims.nx {
            for iy in 0..dims.ny {
                for iz in 0..dims.nz {
                    let p = dims.voxel_center(&bbox, ix, iy, iz);
                    let wavy = p.z - 0.13 - 0.27 * (2.1 * p.x + 0.4).sin() * (1.7 * p.y - 0.2).cos();
                    let blob = (p - Vec3::new(0.2, 0.1, 0.62)).norm() - 0.3;
                    sdf[dims.voxel_base(ix, iy, iz)] = wavy.min(blob);
                }
            }
        }
        // Give the env some structure.
        fs.set_envmap(&EnvMap {
            lobes: vec![
                SgLobe { mu: Vec3::new(0.8, 0.4, 0.2), lambda: 2.0, xi: Vec3::new(0.0, 0.0, 1.0) },
                SgLobe { mu: Vec3::new(0.1, 0.5, 0.9), lambda: 5.0, xi: Vec3::new(1.0, 0.0, 0.0) },
            ],
        });
        fs
    }

    fn surface_point(fs: &FieldSet) -> Vec3 {
        // A generic point just above the wavy surface, under the blob.
        let _ = fs;
        Vec3::new(0.05, -0.1, 0.26)
    }

    #[test]
    fn lhat_uncertain_only_moves_emission_gradients() {
        let fs = plane_fields();
        let x = surface_point(&fs);
        let wo = Vec3::new(0.0, 0.1, 0.995).normalized();
        let cfg = TransportConfig::new(4, 8, 7);
        let rec = lhat_e_record(&fs, x, wo, LhatEVariant::Uncertain, &cfg).unwrap();
        let mut grad = fs.grad_store();
        lhat_e_backward(&fs, &rec, LhatEVariant::Uncertain, Vec3::ONE, &mut grad);
        for class in [
            ParamClass::SdfGrid,
            ParamClass::Sharpness,
            ParamClass::BrdfGrid,
            ParamClass::RadianceEGrid,
            ParamClass::RadianceEHead,
            ParamClass::EnvMap,
        ] {
            assert!(
                grad.slice(&fs.layout, class).iter().all(|&g| g == 0.0),
                "stop-gradient leak into {}",
                class.name()
            );
        }
        let e_grads = grad.slice(&fs.layout, ParamClass::EmissionGrid);
        assert!(e_grads.iter().any(|&g| g != 0.0));
    }

    #[test]
    fn lhat_s_gradients_match_finite_differences() {
        let fs = plane_fields();
        let x = surface_point(&fs);
        let wo = Vec3::new(0.15, -0.1, 0.98).normalized();
        let cfg = TransportConfig::new(12, 14, 13);
        let upstream = Vec3::new(1.0, -0.6, 0.4);

        let rec = lhat_s_record(&fs, x, wo, &cfg).unwrap();
        let mut grad = fs.grad_store();
        lhat_s_backward(&fs, &rec, upstream, &mut grad);

        // FD with the recorded directions held fixed.
        let dirs = rec.dirs.clone();
        let f = |fs: &FieldSet| -> f64 {
            let normal = fs.sdf_normal(x).unwrap();
            let params = fs.brdf_at(x);
            let mut acc = Vec3::ZERO;
            for (j, &dir) in dirs.iter().enumerate() {
                let inc =
                    incident_radiance(fs, x, dir, RadField::S, cfg.secondary_samples, cfg.strata_for(j));
                let r = eval_brdf(normal, wo, dir, &params).unwrap();
                acc += inc.hadamard(r.value);
            }
            upstream.dot(acc * (2.0 * std::f64::consts::PI / dirs.len() as f64))
        };

        let mut fs2 = fs.clone();
        let mut rng = Stream::new(&[31337]);
        for class in [
            ParamClass::SdfGrid,
            ParamClass::Sharpness,
            ParamClass::BrdfGrid,
            ParamClass::RadianceSGrid,
            ParamClass::RadianceSHead,
            ParamClass::EnvMap,
        ] {
            let range = fs.layout.range(class);
            // Gradients are sparse over the grids; probe where mass landed.
            let informative: Vec<usize> = range
                .clone()
                .filter(|&i| grad.values[i].abs() > 1e-7)
                .collect();
            assert!(!informative.is_empty(), "no gradient mass in {}", class.name());
            let mut checked = 0;
            let mut tries = 0;
            while checked < 10 && tries < 60 {
                tries += 1;
                let i = informative[rng.next_usize(informative.len())];
                let a = grad.values[i];
                let h = 1e-5 * fs.params[i].abs().max(1.0);
                fs2.params[i] = fs.params[i] + h;
                let fp = f(&fs2);
                fs2.params[i] = fs.params[i] - h;
                let fm = f(&fs2);
                fs2.params[i] = fs.params[i];
                let mut fd = (fp - fm) / (2.0 * h);
                // Stored xi gradients are tangent-projected; FD along a
                // single component includes the radial part, so project.
                if class == ParamClass::EnvMap {
                    let off = (i - range.start) % crate::envmap::LOBE_STRIDE;
                    if off >= 4 {
                        // Recompute the full xi FD vector and project.
                        let lobe = (i - range.start) / crate::envmap::LOBE_STRIDE;
                        let base = range.start + lobe * crate::envmap::LOBE_STRIDE + 4;
                        let xi = Vec3::new(fs.params[base], fs.params[base + 1], fs.params[base + 2]);
                        let mut fd_vec = Vec3::ZERO;
                        for a_idx in 0..3 {
                            let idx = base + a_idx;
                            let hh = 1e-5;
                            fs2.params[idx] = fs.params[idx] + hh;
                            let fpp = f(&fs2);
                            fs2.params[idx] = fs.params[idx] - hh;
                            let fmm = f(&fs2);
                            fs2.params[idx] = fs.params[idx];
                            match a_idx {
                                0 => fd_vec.x = (fpp - fmm) / (2.0 * hh),
                                1 => fd_vec.y = (fpp - fmm) / (2.0 * hh),
                                _ => fd_vec.z = (fpp - fmm) / (2.0 * hh),
                            }
                        }
                        let proj = fd_vec - xi * fd_vec.dot(xi);
                        fd = proj.component(i - base);
                    }
                }
                let denom = a.abs().max(fd.abs());
                if denom < 1e-7 {
                    // The synthetic min() SDF has exact f_i == f_next ties
                    // where the alpha clamp boundary makes FD one-sided;
                    // informative gradients in this scene sit above 1e-5.
                    continue;
                }
                assert!(
                    (a - fd).abs() / denom < 2e-3,
                    "{}[{}]: analytic {a} vs fd {fd}",
                    class.name(),
                    i
                );
                checked += 1;
            }
            assert!(checked > 0, "no informative parameters sampled for {}", class.name());
        }
    }

    #[test]
    fn decomposition_sums_to_render_on_consistent_model() {
        // On the ideal diffuse plane model the reconstructed parts are the
        // whole story: env-direct is the only nonzero buffer and it should
        // match L.a at every surface point, composited by the primary
        // weights.
        let model = PlaneModel { env: Vec3::splat(1.0), albedo: Vec3::splat(0.5) };
        let ray = Ray::from_travel(Vec3::new(0.0, 0.0, 1.5), Vec3::new(0.0, 0.0, -1.0), 0.1, 3.4, true);
        let cfg = TransportConfig::new(512, 8, 17);
        let b = decompose_illumination(&model, &ray, 48, &cfg);
        assert_eq!(b.emission, Vec3::ZERO);
        assert_eq!(b.emission_reflection, Vec3::ZERO);
        assert_eq!(b.env_indirect, Vec3::ZERO);
        let m = march(&model, &ray, 48, Strata::Midpoint);
        let integral = brdf_hemisphere_quadrature(
            Vec3::new(0.0, 0.0, 1.0),
            ray.dir_out,
            &BrdfParams::diffuse(Vec3::splat(0.5)),
        );
        let want = integral.x * m.weight_sum();
        assert!((b.env_direct.x - want).abs() / want < 0.05, "{:?} vs {want}", b.env_direct);
    }
}

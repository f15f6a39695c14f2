//! Loss assembly: the dual rendering loss (learnable tone-mapper +
//! clip/gamma), the light-transport-segment losses for both radiance fields
//! with their progressive gradient-routing variants, the emission
//! suppression loss on certain rays, and the smoothing regularizer.
//!
//! Every function accumulates analytic gradients into a `GradientStore` and
//! returns the (already weighted) scalar loss value.

use serde::{Deserialize, Serialize};

use crate::fields::{store::GradientStore, FieldSet, RadField};
use crate::math::Vec3;
use crate::renderer::march::{march, march_backward, weights_backward, Ray, MIN_SHADE_WEIGHT};
use crate::renderer::shade::{render_ray, render_ray_backward};
use crate::renderer::transport::{
    lhat_e_record_with_dirs, lhat_s_record_with_dirs, hemisphere_dirs, lhat_e_backward,
    lhat_s_backward, LhatEVariant, TransportConfig,
};
use crate::renderer::Strata;
use crate::sampler;

#[derive(Copy, Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub lambda_tau: f64,
    pub lambda_l: f64,
    pub lambda_r: f64,
    pub lambda_supp: f64,
    pub lambda_smooth: f64,
    /// Weight of the zero-density supervision on alpha = 0 rays.
    pub lambda_mask: f64,
    /// Weight of the basic (phase 2) LTS terms.
    pub lambda_lts: f64,
    /// Weight of the eikonal pressure keeping the SDF metric; a plain
    /// trilinear grid without it collapses into semi-transparent fog that
    /// fits images without geometry.
    pub lambda_eikonal: f64,
}

impl Default for LossWeights {
    fn default() -> LossWeights {
        LossWeights {
            lambda_tau: 0.1,
            lambda_l: 1.0,
            lambda_r: 0.1,
            lambda_supp: 0.01,
            lambda_smooth: 1e-3,
            lambda_mask: 0.1,
            lambda_lts: 1.0,
            lambda_eikonal: 0.01,
        }
    }
}

/// One training ray: dataset ray id, geometry, LDR target, optional alpha.
#[derive(Clone, Debug)]
pub struct TrainRay {
    pub id: usize,
    pub ray: Ray,
    /// LDR target in sRGB [0,1].
    pub target: Vec3,
    pub alpha: Option<f64>,
}

const RENDER_SALT: u64 = 0x4e0d;

/// l1 subgradient with the 0-at-0 convention (f64::signum(0.0) is +1,
/// which would claim gradient where the loss has none).
fn l1_sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}
const SUPP_SALT: u64 = 0x50bb;
const SMOOTH_SALT: u64 = 0x5005;

/// Rendering loss over a slice of rays:
/// sum ||C - C_tonemapped||^2 + lambda_tau ||C - C_gamma||^2, with rays
/// whose alpha is zero supervised toward zero density instead.
/// Returns (loss, per-ray renders for reuse).
pub fn rendering_loss(
    fields: &FieldSet,
    rays: &[TrainRay],
    lambda_tau: f64,
    lambda_mask: f64,
    n_samples: usize,
    step_key: u64,
    grad: &mut GradientStore,
) -> (f64, Vec<crate::renderer::RayRender>) {
    let mut loss = 0.0;
    let mut renders = Vec::with_capacity(rays.len());
    for tr in rays {
        let strata = Strata::Jittered { key: sampler::mix(&[step_key, tr.id as u64, RENDER_SALT]) };
        let rr = render_ray(fields, Some(fields), &tr.ray, n_samples, strata);
        if tr.alpha == Some(0.0) {
            // Background ray: push total density toward zero.
            let wsum = rr.march.weight_sum();
            loss += lambda_mask * wsum * wsum;
            let g_w = vec![lambda_mask * 2.0 * wsum; rr.march.n_samples()];
            let d_alpha = weights_backward(&rr.march, &g_w, 0.0);
            march_backward(fields, &tr.ray, &rr.march, &d_alpha, grad);
        } else {
            let d_tm = rr.c_tonemapped - tr.target;
            let d_gamma = rr.c_gamma - tr.target;
            loss += d_tm.dot(d_tm) + lambda_tau * d_gamma.dot(d_gamma);
            render_ray_backward(
                fields,
                &tr.ray,
                &rr,
                Vec3::ZERO,
                d_tm * 2.0,
                d_gamma * (2.0 * lambda_tau),
                grad,
            );
        }
        renders.push(rr);
    }
    (loss, renders)
}

/// A shading point the LTS losses are evaluated at, with its ray's group
/// membership and an optional frozen direction set (used by the gradient
/// checker; training samples directions per step).
#[derive(Clone, Debug)]
pub struct LtsPoint {
    pub ray_id: usize,
    pub x: Vec3,
    pub wo: Vec3,
    pub certain: bool,
    pub dirs: Option<Vec<Vec3>>,
}

/// Pick LTS evaluation points from rendered batch rays: the dominant
/// surface crossing of each ray that actually hit a surface, viewed along
/// the ray, optionally paired with one extra hemisphere viewing direction.
pub fn select_lts_points(
    fields: &FieldSet,
    rays: &[TrainRay],
    renders: &[crate::renderer::RayRender],
    is_certain: impl Fn(usize) -> bool,
    max_points: usize,
    extra_dir: bool,
    step_key: u64,
) -> Vec<LtsPoint> {
    // Uncertain rays drive emission refinement and shrink over training;
    // visit them first so they keep their LTS coverage.
    let mut order: Vec<usize> = (0..rays.len()).collect();
    order.sort_by_key(|&i| is_certain(rays[i].id));
    let mut out = Vec::new();
    for &ri in &order {
        let (tr, rr) = (&rays[ri], &renders[ri]);
        if out.len() >= max_points {
            break;
        }
        if rr.march.weight_sum() < 0.5 {
            continue;
        }
        let best = (0..rr.march.n_samples())
            .max_by(|&a, &b| rr.march.weights[a].total_cmp(&rr.march.weights[b]))
            .unwrap();
        let x = rr.march.position(&tr.ray, best);
        let Ok(n) = fields.sdf_normal(x) else { continue };
        if n.dot(tr.ray.dir_out) <= 1e-3 {
            continue;
        }
        let certain = is_certain(tr.id);
        out.push(LtsPoint { ray_id: tr.id, x, wo: tr.ray.dir_out, certain, dirs: None });
        if extra_dir {
            let wo2 = sampler::hemisphere_dir(n, &[step_key, tr.id as u64, 0xd172]);
            if n.dot(wo2) > 1e-3 {
                out.push(LtsPoint { ray_id: tr.id, x, wo: wo2, certain, dirs: None });
            }
        }
    }
    out
}

fn point_cfg(base: &TransportConfig, idx: usize) -> TransportConfig {
    TransportConfig {
        key: sampler::mix(&[base.key, idx as u64, 0x17_5]),
        ..*base
    }
}

/// Basic LTS loss on the lights-off radiance field:
/// sum ||L_S - Lhat_S||^2. Gradients flow into both sides.
pub fn lts_loss_s(
    fields: &FieldSet,
    points: &[LtsPoint],
    cfg: &TransportConfig,
    weight: f64,
    grad: &mut GradientStore,
) -> f64 {
    let mut loss = 0.0;
    for (i, p) in points.iter().enumerate() {
        let pcfg = point_cfg(cfg, i);
        let rec = match &p.dirs {
            Some(dirs) => lhat_s_record_with_dirs(fields, p.x, p.wo, dirs, &pcfg),
            None => {
                let Ok(n) = fields.sdf_normal(p.x) else { continue };
                let dirs = hemisphere_dirs(n, pcfg.hemi_samples, pcfg.key);
                lhat_s_record_with_dirs(fields, p.x, p.wo, &dirs, &pcfg)
            }
        };
        let Ok(rec) = rec else { continue };
        let l = fields.radiance(RadField::S, p.x, p.wo);
        let resid = l - rec.value;
        loss += weight * resid.dot(resid);
        fields.radiance_backward(RadField::S, p.x, p.wo, resid * (2.0 * weight), grad);
        lhat_s_backward(fields, &rec, resid * (-2.0 * weight), grad);
    }
    loss
}

/// Mode of the emission-side LTS loss.
#[derive(Copy, Clone, Debug, PartialEq)]
pub enum LtsEMode {
    /// Plain l2 against the fully differentiable reconstruction (early
    /// training, before the progressive phase).
    Basic,
    /// Progressive l1 decomposition with stop-gradients: certain points use
    /// the reflection-only reconstruction, uncertain points route gradient
    /// into the emission field only.
    Progressive { lambda_l: f64, lambda_r: f64 },
}

/// LTS loss on the emission-added radiance field. Points must come from
/// lights-on rays.
pub fn lts_loss_e(
    fields: &FieldSet,
    points: &[LtsPoint],
    cfg: &TransportConfig,
    mode: LtsEMode,
    weight: f64,
    grad: &mut GradientStore,
) -> f64 {
    let mut loss = 0.0;
    for (i, p) in points.iter().enumerate() {
        let pcfg = point_cfg(cfg, i);
        let variant = match mode {
            LtsEMode::Basic => LhatEVariant::Full,
            LtsEMode::Progressive { .. } => {
                if p.certain {
                    LhatEVariant::Certain
                } else {
                    LhatEVariant::Uncertain
                }
            }
        };
        let rec = match &p.dirs {
            Some(dirs) => lhat_e_record_with_dirs(fields, p.x, p.wo, variant, dirs, &pcfg),
            None => {
                let Ok(n) = fields.sdf_normal(p.x) else { continue };
                let dirs = hemisphere_dirs(n, pcfg.hemi_samples, pcfg.key);
                lhat_e_record_with_dirs(fields, p.x, p.wo, variant, &dirs, &pcfg)
            }
        };
        let Ok(rec) = rec else { continue };
        let l = fields.radiance(RadField::E, p.x, p.wo);
        let resid = l - rec.value;
        match mode {
            LtsEMode::Basic => {
                loss += weight * resid.dot(resid);
                fields.radiance_backward(RadField::E, p.x, p.wo, resid * (2.0 * weight), grad);
                lhat_e_backward(fields, &rec, variant, resid * (-2.0 * weight), grad);
            }
            LtsEMode::Progressive { lambda_l, lambda_r } => {
                let l1 = resid.abs().x + resid.abs().y + resid.abs().z;
                let sign = resid.map(l1_sign);
                loss += weight * (lambda_l + lambda_r) * l1;
                // lambda_l term: |sg(L) - Lhat|_1 updates the reconstruction
                // side; lambda_r term: |L - sg(Lhat)|_1 updates the direct
                // prediction.
                lhat_e_backward(fields, &rec, variant, sign * (-weight * lambda_l), grad);
                fields.radiance_backward(RadField::E, p.x, p.wo, sign * (weight * lambda_r), grad);
            }
        }
    }
    loss
}

/// Emission suppression on certain rays: sum ||composited E||^2.
pub fn suppression_loss(
    fields: &FieldSet,
    rays: &[TrainRay],
    n_samples: usize,
    step_key: u64,
    weight: f64,
    grad: &mut GradientStore,
) -> f64 {
    let mut loss = 0.0;
    for tr in rays {
        let strata = Strata::Jittered { key: sampler::mix(&[step_key, tr.id as u64, SUPP_SALT]) };
        let m = march(fields, &tr.ray, n_samples, strata);
        let n = m.n_samples();
        if n == 0 {
            continue;
        }
        let emissions: Vec<Vec3> = (0..n)
            .map(|i| {
                if m.weights[i] > MIN_SHADE_WEIGHT {
                    fields.emission_at(m.position(&tr.ray, i))
                } else {
                    Vec3::ZERO
                }
            })
            .collect();
        let v: Vec3 = emissions
            .iter()
            .zip(m.weights.iter())
            .map(|(&e, &w)| e * w)
            .fold(Vec3::ZERO, |a, b| a + b);
        loss += weight * v.dot(v);
        let upstream = v * (2.0 * weight);
        let mut g_w = vec![0.0; n];
        for i in 0..n {
            if m.weights[i] > MIN_SHADE_WEIGHT {
                fields.emission_backward(m.position(&tr.ray, i), upstream * m.weights[i], grad);
            }
            g_w[i] = upstream.dot(emissions[i]);
        }
        let d_alpha = weights_backward(&m, &g_w, 0.0);
        march_backward(fields, &tr.ray, &m, &d_alpha, grad);
    }
    loss
}

/// Eikonal pressure: sum (|grad f(x)| - 1)^2 over probe points.
pub fn eikonal_loss(
    fields: &FieldSet,
    points: &[Vec3],
    weight: f64,
    grad: &mut GradientStore,
) -> f64 {
    let mut loss = 0.0;
    for &x in points {
        let g = fields.sdf_spatial_grad(x);
        let n = g.norm();
        if n < 1e-9 {
            // Degenerate gradient: push outward along an arbitrary axis.
            loss += weight;
            continue;
        }
        let d = n - 1.0;
        loss += weight * d * d;
        fields.sdf_spatial_grad_backward(x, g * (2.0 * weight * d / n), grad);
    }
    loss
}

/// Random-offset l1 smoothing over normals, BRDF parameters, and emission:
/// sum_q ||q(x) - q(x + delta)||_1 with |delta| = half a voxel.
pub fn smoothing_loss(
    fields: &FieldSet,
    points: &[Vec3],
    step_key: u64,
    weight: f64,
    grad: &mut GradientStore,
) -> f64 {
    let delta_len = 0.5 * fields.cfg.voxel_size();
    let mut loss = 0.0;
    for (i, &x) in points.iter().enumerate() {
        let delta = sampler::sphere_dir(&[step_key, i as u64, SMOOTH_SALT]) * delta_len;
        let y = x + delta;

        if let (Ok(na), Ok(nb)) = (fields.sdf_normal(x), fields.sdf_normal(y)) {
            let d = na - nb;
            loss += weight * (d.abs().x + d.abs().y + d.abs().z);
            let sign = d.map(l1_sign);
            fields.sdf_normal_backward(x, sign * weight, grad);
            fields.sdf_normal_backward(y, sign * (-weight), grad);
        }

        let ba = fields.brdf_at(x);
        let bb = fields.brdf_at(y);
        let d_base = ba.base_color - bb.base_color;
        let d_rough = ba.roughness - bb.roughness;
        let d_metal = ba.metallic - bb.metallic;
        loss += weight
            * (d_base.abs().x + d_base.abs().y + d_base.abs().z + d_rough.abs() + d_metal.abs());
        let sb = d_base.map(l1_sign);
        fields.brdf_backward(x, sb * weight, l1_sign(d_rough) * weight, l1_sign(d_metal) * weight, grad);
        fields.brdf_backward(
            y,
            sb * (-weight),
            l1_sign(d_rough) * (-weight),
            l1_sign(d_metal) * (-weight),
            grad,
        );

        let ea = fields.emission_at(x);
        let eb = fields.emission_at(y);
        let de = ea - eb;
        loss += weight * (de.abs().x + de.abs().y + de.abs().z);
        let se = de.map(l1_sign);
        fields.emission_backward(x, se * weight, grad);
        fields.emission_backward(y, se * (-weight), grad);
    }
    loss
}

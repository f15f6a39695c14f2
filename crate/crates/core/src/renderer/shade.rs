//! Ray colors in the three spaces the training loss needs: raw HDR,
//! tone-mapped through the learnable mapper, and clip+gamma encoded.

use crate::colorspace::{tone_curve_deriv, tone_curve_vec};
use crate::fields::{store::GradientStore, FieldSet, RadField};
use crate::math::Vec3;

use super::march::{march, march_backward, weights_backward, Ray, RayMarch, Strata, MIN_SHADE_WEIGHT};
use super::model::SceneModel;

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum ColorMode {
    Hdr,
    Tonemapped,
    Gamma,
}

/// A rendered ray with the intermediates needed for the backward pass.
#[derive(Clone, Debug)]
pub struct RayRender {
    pub march: RayMarch,
    /// Per-sample outgoing radiance L_o = L_S + L_E * I.
    pub radiance: Vec<Vec3>,
    pub c_hdr: Vec3,
    pub c_tonemapped: Vec3,
    pub c_gamma: Vec3,
}

impl RayRender {
    pub fn color(&self, mode: ColorMode) -> Vec3 {
        match mode {
            ColorMode::Hdr => self.c_hdr,
            ColorMode::Tonemapped => self.c_tonemapped,
            ColorMode::Gamma => self.c_gamma,
        }
    }
}

/// Outgoing radiance of the combined fields at a sample, honoring the
/// emitters-on flag of the ray.
pub fn sample_radiance<M: SceneModel + ?Sized>(model: &M, x: Vec3, wo: Vec3, on: bool) -> Vec3 {
    let mut l = model.radiance(RadField::S, x, wo);
    if on {
        l += model.radiance(RadField::E, x, wo);
    }
    l
}

/// Render one ray in all three modes. The tone-mapped color composites
/// per-sample mapped radiances; the gamma color applies the fixed curve to
/// the composited HDR color.
pub fn render_ray<M: SceneModel + ?Sized>(
    model: &M,
    mapper: Option<&FieldSet>,
    ray: &Ray,
    n_samples: usize,
    strata: Strata,
) -> RayRender {
    let m = march(model, ray, n_samples, strata);
    let mut radiance = Vec::with_capacity(m.n_samples());
    let mut c_hdr = Vec3::ZERO;
    let mut c_tm = Vec3::ZERO;
    for i in 0..m.n_samples() {
        let w = m.weights[i];
        let l = if w > MIN_SHADE_WEIGHT {
            sample_radiance(model, m.position(ray, i), ray.dir_out, ray.on)
        } else {
            Vec3::ZERO
        };
        radiance.push(l);
        if w > MIN_SHADE_WEIGHT {
            c_hdr += l * w;
            if let Some(f) = mapper {
                c_tm += f.tonemap(l) * w;
            }
        }
    }
    RayRender { c_gamma: tone_curve_vec(c_hdr), march: m, radiance, c_hdr, c_tonemapped: c_tm }
}

/// Backward pass of `render_ray` for the learnable fields. Upstream
/// gradients arrive per color mode; zero vectors skip the respective paths.
pub fn render_ray_backward(
    fields: &FieldSet,
    ray: &Ray,
    rr: &RayRender,
    d_hdr: Vec3,
    d_tonemapped: Vec3,
    d_gamma: Vec3,
    grad: &mut GradientStore,
) {
    let n = rr.march.n_samples();
    if n == 0 {
        return;
    }
    // Chain the gamma curve (clip-aware) into the HDR gradient.
    let d_hdr_total = d_hdr
        + Vec3::new(
            d_gamma.x * tone_curve_deriv(rr.c_hdr.x),
            d_gamma.y * tone_curve_deriv(rr.c_hdr.y),
            d_gamma.z * tone_curve_deriv(rr.c_hdr.z),
        );
    let use_tm = d_tonemapped != Vec3::ZERO;

    let mut g_w = vec![0.0; n];
    for i in 0..n {
        let w = rr.march.weights[i];
        if w <= MIN_SHADE_WEIGHT {
            continue;
        }
        let l = rr.radiance[i];
        let x = rr.march.position(ray, i);
        let mut d_l = d_hdr_total * w;
        g_w[i] += d_hdr_total.dot(l);
        if use_tm {
            g_w[i] += d_tonemapped.dot(fields.tonemap(l));
            d_l += fields.tonemap_backward(l, d_tonemapped * w, grad);
        }
        if d_l != Vec3::ZERO {
            fields.radiance_backward(RadField::S, x, ray.dir_out, d_l, grad);
            if ray.on {
                fields.radiance_backward(RadField::E, x, ray.dir_out, d_l, grad);
            }
        }
    }
    let d_alpha = weights_backward(&rr.march, &g_w, 0.0);
    march_backward(fields, ray, &rr.march, &d_alpha, grad);
}

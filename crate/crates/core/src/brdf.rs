//! Simplified Disney principled BRDF with the Lambert cosine folded in, plus
//! analytic gradients with respect to its parameters and the shading normal.
//!
//! R = D*F*G / (4 (n.wo)) + (n.wi)(1-m) b/pi
//!
//! with D a spherical-Gaussian approximation of the normal distribution,
//! F the Fresnel term with factor (1 - (wo.h)^5) as printed in the source
//! formulation (the `schlick-fresnel` cargo feature switches to the
//! classical (1 - wo.h)^5 form), and G the GGX geometry term with k = r^2/2.
//! All dot products are clamped to [0, 1] before use; the roughness is
//! floored at 0.05 inside D to keep it finite.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::Vec3;

pub const ROUGHNESS_FLOOR: f64 = 0.05;
const H_DEGENERATE_EPS: f64 = 1e-9;

#[derive(Copy, Clone, Debug, Serialize, Deserialize)]
pub struct BrdfParams {
    pub base_color: Vec3,
    pub roughness: f64,
    pub metallic: f64,
}

impl BrdfParams {
    pub fn new(base_color: Vec3, roughness: f64, metallic: f64) -> Result<BrdfParams> {
        let ok_color = base_color.min_component() >= 0.0 && base_color.max_component() <= 1.0;
        if !ok_color || !(0.0..=1.0).contains(&roughness) || !(0.0..=1.0).contains(&metallic) {
            return Err(Error::Config(format!(
                "BRDF parameters out of range: base {base_color:?}, r {roughness}, m {metallic}"
            )));
        }
        Ok(BrdfParams { base_color, roughness, metallic })
    }

    pub fn diffuse(albedo: Vec3) -> BrdfParams {
        BrdfParams { base_color: albedo, roughness: 1.0, metallic: 0.0 }
    }
}

#[derive(Copy, Clone, Debug)]
pub struct BrdfEval {
    /// Cosine-weighted reflectance per channel.
    pub value: Vec3,
    /// True when wo ~ -wi left the half vector undefined and the specular
    /// term was set to zero.
    pub specular_degenerate: bool,
}

#[derive(Copy, Clone, Debug, Default)]
pub struct BrdfGrad {
    pub d_base: Vec3,
    pub d_roughness: f64,
    pub d_metallic: f64,
    pub d_normal: Vec3,
}

fn clamp01(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

/// Derivative of clamp01 treated as pass-through strictly inside (0, 1] and
/// zero when the lower clamp was active or the input exceeded 1.
fn clamp01_deriv(x: f64) -> f64 {
    if x > 0.0 && x <= 1.0 {
        1.0
    } else {
        0.0
    }
}

#[cfg(not(feature = "schlick-fresnel"))]
fn fresnel_factor(odh: f64) -> f64 {
    1.0 - odh.powi(5)
}

#[cfg(feature = "schlick-fresnel")]
fn fresnel_factor(odh: f64) -> f64 {
    (1.0 - odh).powi(5)
}

struct Shared {
    ndo: f64,
    ndi: f64,
    ndh: f64,
    h: Vec3,
    degenerate: bool,
    r_d: f64,
    q: f64,
    d: f64,
    k: f64,
    ga: f64,
    gb: f64,
    g: f64,
    fres: f64,
    // raw dot products before clamping, for clamp-aware derivatives
    raw_ndo: f64,
    raw_ndi: f64,
    raw_ndh: f64,
}

fn shared(n: Vec3, wo: Vec3, wi: Vec3, p: &BrdfParams) -> Result<Shared> {
    let raw_ndo = n.dot(wo);
    if raw_ndo <= 0.0 {
        return Err(Error::BackfacingView(raw_ndo));
    }
    let raw_ndi = n.dot(wi);
    let ndo = clamp01(raw_ndo);
    let ndi = clamp01(raw_ndi.max(0.0));

    let hv = wo + wi;
    let hn = hv.norm();
    let degenerate = hn < H_DEGENERATE_EPS;
    let h = if degenerate { Vec3::ZERO } else { hv / hn };
    let raw_ndh = n.dot(h);
    let ndh = clamp01(raw_ndh);
    let odh = clamp01(wo.dot(h));

    let r_d = p.roughness.max(ROUGHNESS_FLOOR);
    let q = r_d.powi(-4);
    let d = q / std::f64::consts::PI * (2.0 * q * (ndh - 1.0)).exp();

    let k = p.roughness * p.roughness / 2.0;
    let ga = ndo * (1.0 - k) + k;
    let gb = ndi * (1.0 - k) + k;
    let g = ndo * ndi / (ga * gb);

    Ok(Shared {
        ndo,
        ndi,
        ndh,
        h,
        degenerate,
        r_d,
        q,
        d,
        k,
        ga,
        gb,
        g,
        fres: fresnel_factor(odh),
        raw_ndo,
        raw_ndi,
        raw_ndh,
    })
}

pub fn eval_brdf(n: Vec3, wo: Vec3, wi: Vec3, p: &BrdfParams) -> Result<BrdfEval> {
    let s = shared(n, wo, wi, p)?;
    let mut value = p.base_color * (s.ndi * (1.0 - p.metallic) / std::f64::consts::PI);
    if !s.degenerate {
        let scale = s.d * s.g / (4.0 * s.ndo);
        let f0 = Vec3::splat(0.04 * (1.0 - p.metallic)) + p.base_color * p.metallic;
        let f = f0 + (Vec3::ONE - f0) * s.fres;
        value += f * scale;
    }
    Ok(BrdfEval { value, specular_degenerate: s.degenerate })
}

/// Gradients of upstream . eval_brdf with respect to the BRDF parameters and
/// the shading normal.
pub fn brdf_grad(n: Vec3, wo: Vec3, wi: Vec3, p: &BrdfParams, upstream: Vec3) -> Result<BrdfGrad> {
    let s = shared(n, wo, wi, p)?;
    let mut g = BrdfGrad::default();
    let inv_pi = 1.0 / std::f64::consts::PI;

    // Diffuse term: (n.wi)(1-m) b/pi.
    let diff_coeff = s.ndi * (1.0 - p.metallic) * inv_pi;
    g.d_base += upstream * diff_coeff;
    g.d_metallic -= upstream.dot(p.base_color) * s.ndi * inv_pi;
    let d_ndi_diff = upstream.dot(p.base_color) * (1.0 - p.metallic) * inv_pi;
    let mut d_ndi = d_ndi_diff;
    let mut d_ndo = 0.0;
    let mut d_ndh = 0.0;

    if !s.degenerate {
        let scale = s.d * s.g / (4.0 * s.ndo);
        let f0 = Vec3::splat(0.04 * (1.0 - p.metallic)) + p.base_color * p.metallic;
        let f = f0 + (Vec3::ONE - f0) * s.fres;

        // dF/dF0 = 1 - fres (per channel); F0 = 0.04(1-m) + b m.
        let d_f0 = upstream * (scale * (1.0 - s.fres));
        g.d_base += d_f0 * p.metallic;
        g.d_metallic += d_f0.dot(p.base_color - Vec3::splat(0.04));

        let u_f = upstream.dot(f);

        // Roughness through D (floored) and G (k = r^2/2).
        if p.roughness >= ROUGHNESS_FLOOR {
            let dd_dr = s.d * (-4.0 / s.r_d) * (1.0 + 2.0 * s.q * (s.ndh - 1.0));
            g.d_roughness += u_f * s.g / (4.0 * s.ndo) * dd_dr;
        }
        let dg_dk = -s.g * ((1.0 - s.ndo) / s.ga + (1.0 - s.ndi) / s.gb);
        g.d_roughness += u_f * s.d / (4.0 * s.ndo) * dg_dk * p.roughness;

        // Normal-coupled dots.
        d_ndh += u_f * s.g / (4.0 * s.ndo) * (s.d * 2.0 * s.q);
        let dg_dndo = s.g / s.ndo - s.g * (1.0 - s.k) / s.ga;
        d_ndo += u_f * s.d / 4.0 * (dg_dndo / s.ndo - s.g / (s.ndo * s.ndo));
        let dg_dndi = s.g / s.ndi.max(1e-300) - s.g * (1.0 - s.k) / s.gb;
        if s.ndi > 0.0 {
            d_ndi += u_f * s.d / (4.0 * s.ndo) * dg_dndi;
        }
    }

    g.d_normal = wo * (d_ndo * clamp01_deriv(s.raw_ndo))
        + wi * (d_ndi * clamp01_deriv(s.raw_ndi))
        + s.h * (d_ndh * clamp01_deriv(s.raw_ndh));
    Ok(g)
}

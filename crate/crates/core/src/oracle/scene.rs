//! Closed-form test scenes: SDF primitives with per-region material and
//! emission assignment.

use serde::{Deserialize, Serialize};

use crate::brdf::BrdfParams;
use crate::envmap::{EnvMap, SgLobe};
use crate::error::{Error, Result};
use crate::math::{Aabb, Vec3};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum SdfPrim {
    Sphere { center: Vec3, radius: f64 },
    Cuboid { center: Vec3, half: Vec3 },
    Plane { normal: Vec3, offset: f64 },
    Union(Vec<SdfPrim>),
}

impl SdfPrim {
    pub fn eval(&self, p: Vec3) -> f64 {
        match self {
            SdfPrim::Sphere { center, radius } => (p - *center).norm() - radius,
            SdfPrim::Cuboid { center, half } => {
                let q = (p - *center).abs() - *half;
                let outside = Vec3::new(q.x.max(0.0), q.y.max(0.0), q.z.max(0.0)).norm();
                outside + q.max_component().min(0.0)
            }
            SdfPrim::Plane { normal, offset } => p.dot(*normal) - offset,
            SdfPrim::Union(parts) => {
                parts.iter().map(|s| s.eval(p)).fold(f64::INFINITY, f64::min)
            }
        }
    }
}

/// Procedural albedo variation of the default material. Multi-view
/// carving needs photometric texture; a uniform scene is nearly free to
/// explain with fog.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum AlbedoPattern {
    Uniform,
    /// 3D checker: base color scaled by `low` or `high` depending on the
    /// sign of sin(f x) sin(f y) sin(f z).
    Checker3d { freq: f64, low: f64, high: f64 },
}

impl AlbedoPattern {
    pub fn scale(&self, p: Vec3) -> f64 {
        match self {
            AlbedoPattern::Uniform => 1.0,
            AlbedoPattern::Checker3d { freq, low, high } => {
                let s = (freq * p.x).sin() * (freq * p.y).sin() * (freq * p.z).sin();
                if s > 0.0 {
                    *high
                } else {
                    *low
                }
            }
        }
    }
}

/// Axis-aligned region carrying a material and emission override.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MaterialRegion {
    pub region: Aabb,
    pub brdf: BrdfParams,
    pub emission: Vec3,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AnalyticScene {
    pub sdf: SdfPrim,
    pub sharpness: f64,
    pub bbox: Aabb,
    /// First containing region wins.
    pub regions: Vec<MaterialRegion>,
    pub default_brdf: BrdfParams,
    pub albedo_pattern: AlbedoPattern,
    pub env: EnvMap,
}

impl AnalyticScene {
    pub fn brdf_at(&self, p: Vec3) -> BrdfParams {
        for r in &self.regions {
            if r.region.contains(p) {
                return r.brdf;
            }
        }
        BrdfParams {
            base_color: self.default_brdf.base_color * self.albedo_pattern.scale(p),
            ..self.default_brdf
        }
    }

    pub fn emission_at(&self, p: Vec3) -> Vec3 {
        for r in &self.regions {
            if r.region.contains(p) {
                return r.emission;
            }
        }
        Vec3::ZERO
    }

    /// Largest emission strength over all regions (zero for lights-off
    /// scenes).
    pub fn max_emission(&self) -> f64 {
        self.regions.iter().map(|r| r.emission.max_component()).fold(0.0, f64::max)
    }

    /// Central-difference normal of the analytic SDF.
    pub fn normal(&self, p: Vec3) -> Result<Vec3> {
        let h = 1e-5;
        let g = Vec3::new(
            self.sdf.eval(p + Vec3::new(h, 0.0, 0.0)) - self.sdf.eval(p - Vec3::new(h, 0.0, 0.0)),
            self.sdf.eval(p + Vec3::new(0.0, h, 0.0)) - self.sdf.eval(p - Vec3::new(0.0, h, 0.0)),
            self.sdf.eval(p + Vec3::new(0.0, 0.0, h)) - self.sdf.eval(p - Vec3::new(0.0, 0.0, h)),
        );
        let n = g.norm();
        if n < 1e-12 {
            return Err(Error::DegenerateNormal(p.x, p.y, p.z));
        }
        Ok(g / n)
    }
}

/// Parameters of the open-box fixture: a diffuse box interior open at the
/// top, one rectangular emissive patch on the +x wall, and an optional dim
/// environment seen through the opening. It reproduces the LDR ambiguity:
/// the patch clips to white and so does the bright reflection band on the
/// nearby floor, so pixel thresholding cannot separate them.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct BoxSceneParams {
    /// Emitter strength; HDR reference max equals this by construction.
    pub emitter_strength: f64,
    /// Chromaticity of the emitter (scaled by the strength).
    pub emitter_color: Vec3,
    pub albedo: Vec3,
    pub roughness: f64,
    /// Pre-softplus amplitude of the single environment lobe; 0 disables.
    pub env_strength: f64,
    pub sharpness: f64,
    pub texture: AlbedoPattern,
}

impl Default for BoxSceneParams {
    fn default() -> BoxSceneParams {
        BoxSceneParams {
            emitter_strength: 5.0,
            emitter_color: Vec3::ONE,
            albedo: Vec3::new(0.75, 0.73, 0.7),
            roughness: 0.8,
            env_strength: 0.25,
            sharpness: 120.0,
            texture: AlbedoPattern::Checker3d { freq: 5.5, low: 0.55, high: 1.0 },
        }
    }
}

pub const BOX_WALL_TOP: f64 = 1.0;

/// Open-top box interior. Floor top face at z = 0, interior wall faces at
/// |x| = 1 and |y| = 1, walls rising to z = 1. The emissive patch sits on
/// the interior face of the +x wall.
pub fn make_box_scene(p: &BoxSceneParams) -> AnalyticScene {
    let th = 0.15; // slab thickness
    let floor = SdfPrim::Cuboid {
        center: Vec3::new(0.0, 0.0, -th / 2.0),
        half: Vec3::new(1.0 + th, 1.0 + th, th / 2.0),
    };
    let wall = |cx: f64, cy: f64, hx: f64, hy: f64| SdfPrim::Cuboid {
        center: Vec3::new(cx, cy, (BOX_WALL_TOP - th) / 2.0),
        half: Vec3::new(hx, hy, (BOX_WALL_TOP + th) / 2.0),
    };
    let sdf = SdfPrim::Union(vec![
        floor,
        wall(1.0 + th / 2.0, 0.0, th / 2.0, 1.0 + th),
        wall(-1.0 - th / 2.0, 0.0, th / 2.0, 1.0 + th),
        wall(0.0, 1.0 + th / 2.0, 1.0 + th, th / 2.0),
        wall(0.0, -1.0 - th / 2.0, 1.0 + th, th / 2.0),
    ]);

    let emitter = MaterialRegion {
        region: Aabb::new(Vec3::new(0.95, -0.35, 0.25), Vec3::new(1.08, 0.35, 0.75)),
        brdf: BrdfParams { base_color: Vec3::splat(0.2), roughness: 0.9, metallic: 0.0 },
        emission: p.emitter_color * p.emitter_strength,
    };

    let env = if p.env_strength > 0.0 {
        EnvMap {
            lobes: vec![SgLobe {
                mu: Vec3::splat(p.env_strength),
                lambda: 1.5,
                xi: Vec3::new(0.0, 0.0, 1.0),
            }],
        }
    } else {
        // A single strongly negative lobe drives softplus to ~0 everywhere.
        EnvMap { lobes: vec![SgLobe { mu: Vec3::splat(-40.0), lambda: 1e-6, xi: Vec3::new(0.0, 0.0, 1.0) }] }
    };

    AnalyticScene {
        sdf,
        sharpness: p.sharpness,
        bbox: Aabb::new(Vec3::new(-1.25, -1.25, -0.25), Vec3::new(1.25, 1.25, 1.25)),
        regions: vec![emitter],
        default_brdf: BrdfParams { base_color: p.albedo, roughness: p.roughness, metallic: 0.0 },
        albedo_pattern: p.texture.clone(),
        env,
    }
}

/// Two parallel surfaces: an emissive floor patch and a diffuse ceiling,
/// for one-bounce transport checks.
pub fn make_two_surface_scene(emission: f64) -> AnalyticScene {
    let floor = SdfPrim::Cuboid {
        center: Vec3::new(0.0, 0.0, -0.1),
        half: Vec3::new(1.2, 1.2, 0.1),
    };
    let ceiling = SdfPrim::Cuboid {
        center: Vec3::new(0.0, 0.0, 1.1),
        half: Vec3::new(1.2, 1.2, 0.1),
    };
    AnalyticScene {
        sdf: SdfPrim::Union(vec![floor, ceiling]),
        sharpness: 120.0,
        bbox: Aabb::new(Vec3::new(-1.25, -1.25, -0.25), Vec3::new(1.25, 1.25, 1.25)),
        regions: vec![MaterialRegion {
            region: Aabb::new(Vec3::new(-0.4, -0.4, -0.25), Vec3::new(0.4, 0.4, 0.05)),
            brdf: BrdfParams { base_color: Vec3::splat(0.3), roughness: 0.9, metallic: 0.0 },
            emission: Vec3::splat(emission),
        }],
        default_brdf: BrdfParams { base_color: Vec3::splat(0.6), roughness: 0.85, metallic: 0.0 },
        albedo_pattern: AlbedoPattern::Uniform,
        // softplus(-40) is numerically zero: a truly dark environment.
        env: EnvMap {
            lobes: vec![SgLobe { mu: Vec3::splat(-40.0), lambda: 1e-6, xi: Vec3::new(0.0, 0.0, 1.0) }],
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cuboid_sdf_sign_and_distance() {
        let b = SdfPrim::Cuboid { center: Vec3::ZERO, half: Vec3::new(1.0, 2.0, 0.5) };
        assert!(b.eval(Vec3::ZERO) < 0.0);
        assert!((b.eval(Vec3::new(3.0, 0.0, 0.0)) - 2.0).abs() < 1e-12);
        assert!((b.eval(Vec3::new(0.0, 0.0, 0.5))).abs() < 1e-12);
    }

    #[test]
    fn union_takes_min() {
        let u = SdfPrim::Union(vec![
            SdfPrim::Sphere { center: Vec3::ZERO, radius: 1.0 },
            SdfPrim::Plane { normal: Vec3::new(0.0, 0.0, 1.0), offset: -2.0 },
        ]);
        assert!((u.eval(Vec3::new(0.0, 0.0, 3.0)) - 2.0).abs() < 1e-12);
        assert!((u.eval(Vec3::new(0.0, 0.0, -1.9)) - 0.1).abs() < 1e-9);
    }

    #[test]
    fn box_scene_interior_is_hollow_with_emissive_patch() {
        let scene = make_box_scene(&BoxSceneParams::default());
        // Center of the box is empty space.
        assert!(scene.sdf.eval(Vec3::new(0.0, 0.0, 0.5)) > 0.2);
        // Inside the floor slab.
        assert!(scene.sdf.eval(Vec3::new(0.0, 0.0, -0.07)) < 0.0);
        // Patch region on the +x wall emits with the configured strength.
        let e = scene.emission_at(Vec3::new(1.0, 0.0, 0.5));
        assert_eq!(e, Vec3::splat(5.0));
        assert_eq!(scene.emission_at(Vec3::new(0.0, 0.0, 0.0)), Vec3::ZERO);
        assert_eq!(scene.max_emission(), 5.0);
    }

    #[test]
    fn box_scene_normals_point_into_interior() {
        let scene = make_box_scene(&BoxSceneParams::default());
        let n = scene.normal(Vec3::new(0.0, 0.0, 0.0)).unwrap();
        assert!((n - Vec3::new(0.0, 0.0, 1.0)).norm() < 1e-6);
        let n = scene.normal(Vec3::new(1.0, 0.0, 0.5)).unwrap();
        assert!((n - Vec3::new(-1.0, 0.0, 0.0)).norm() < 1e-6);
    }

    #[test]
    fn lights_off_variant_has_zero_emission() {
        let scene = make_box_scene(&BoxSceneParams { emitter_strength: 0.0, ..Default::default() });
        assert_eq!(scene.max_emission(), 0.0);
    }
}

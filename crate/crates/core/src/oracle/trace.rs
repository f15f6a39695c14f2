//! Brute-force Monte Carlo path tracing over analytic scenes.
//!
//! The tracer uses the same discretized alpha/transmittance transport as the
//! renderer, so equivalence tests isolate logic errors rather than
//! quadrature differences. Per bounce it composites emission along the
//! marched segment and adds the environment at escape deterministically;
//! only the reflection recursion is stochastic: a scatter point is drawn
//! proportionally to the compositing weights (escape probability T_end ends
//! the path), which keeps the estimator unbiased with unit throughput.

use serde::{Deserialize, Serialize};

use crate::brdf::eval_brdf;
use crate::envmap::eval_params;
use crate::error::Result;
use crate::fields::RadField;
use crate::math::Vec3;
use crate::renderer::{march, Ray, SceneModel, Strata};
use crate::sampler;

use super::scene::AnalyticScene;

const SCATTER_SALT: u64 = 0x5ca7;
const STRATA_SALT: u64 = 0x0a51;
const DIR_SALT: u64 = 0xd1ce;

#[derive(Copy, Clone, Debug, Serialize, Deserialize)]
pub struct PathTraceConfig {
    /// Reflection recursion depth; 0 composites emission and environment
    /// only (deterministic when jitter is off).
    pub bounces: usize,
    pub spp: usize,
    /// March samples per ray segment.
    pub n_march: usize,
    /// Hemisphere directions per scatter event.
    pub dirs: usize,
    /// Jitter march strata per sample (midpoints when false).
    pub jitter: bool,
    pub seed: u64,
}

impl PathTraceConfig {
    pub fn quick(bounces: usize, spp: usize, seed: u64) -> PathTraceConfig {
        PathTraceConfig { bounces, spp, n_march: 64, dirs: 1, jitter: true, seed }
    }
}

/// Which light sources feed the traced radiance.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum SourceSet {
    EnvOnly,
    EmissionOnly,
    Both,
}

impl SourceSet {
    fn env(&self) -> bool {
        matches!(self, SourceSet::EnvOnly | SourceSet::Both)
    }

    fn emission(&self) -> bool {
        matches!(self, SourceSet::EmissionOnly | SourceSet::Both)
    }
}

struct Tracer<'a> {
    scene: &'a AnalyticScene,
    cfg: PathTraceConfig,
    sources: SourceSet,
    env_params: Vec<f64>,
}

impl<'a> Tracer<'a> {
    fn env(&self, dir: Vec3) -> Vec3 {
        if self.sources.env() {
            eval_params(&self.env_params, dir)
        } else {
            Vec3::ZERO
        }
    }

    fn trace(&self, ray: &Ray, bounces: usize, key: u64) -> Vec3 {
        let strata = if self.cfg.jitter {
            Strata::Jittered { key: sampler::mix(&[key, STRATA_SALT]) }
        } else {
            Strata::Midpoint
        };
        let m = march_sdf(self.scene, ray, self.cfg.n_march, strata);
        let mut c = self.env(ray.travel_dir()) * m.t_end;
        if self.sources.emission() {
            for i in 0..m.n_samples() {
                if m.weights[i] > crate::renderer::march::MIN_SHADE_WEIGHT {
                    c += self.scene.emission_at(m.position(ray, i)) * m.weights[i];
                }
            }
        }
        if bounces == 0 {
            return c;
        }
        // Choose the scatter point with probability w_i; T_end ends the path.
        let u = sampler::uniform(&[key, SCATTER_SALT]);
        let mut acc = 0.0;
        let mut chosen = None;
        for i in 0..m.n_samples() {
            acc += m.weights[i];
            if u < acc {
                chosen = Some(i);
                break;
            }
        }
        let Some(i) = chosen else {
            return c; // escaped: env already accounted for
        };
        let x = m.position(ray, i);
        let Ok(n) = self.scene.normal(x) else {
            return c;
        };
        let wo = ray.dir_out;
        if n.dot(wo) <= 0.0 {
            return c;
        }
        let params = self.scene.brdf_at(x);
        let mut refl = Vec3::ZERO;
        for j in 0..self.cfg.dirs {
            let dkey = sampler::mix(&[key, j as u64, DIR_SALT]);
            let dir = sampler::hemisphere_dir(n, &[dkey]);
            let sray = secondary(self.scene, x, dir);
            let incoming = self.trace(&sray, bounces - 1, sampler::mix(&[dkey, 0x11]));
            if let Ok(r) = eval_brdf(n, wo, dir, &params) {
                refl += incoming.hadamard(r.value);
            }
        }
        c + refl * (2.0 * std::f64::consts::PI / self.cfg.dirs as f64)
    }
}

fn secondary(scene: &AnalyticScene, x: Vec3, dir: Vec3) -> Ray {
    let origin = x + dir * crate::renderer::transport::SECONDARY_EPS;
    let (near, far) = match scene.bbox.intersect(origin, dir) {
        Some((t0, t1)) if t1 > 0.0 => (t0.max(0.0), t1),
        _ => (0.0, -1.0),
    };
    Ray::from_travel(origin, dir, near, far, true)
}

/// March over the analytic SDF (thin adapter so marching code is shared
/// with the renderer).
fn march_sdf(
    scene: &AnalyticScene,
    ray: &Ray,
    n: usize,
    strata: Strata,
) -> crate::renderer::RayMarch {
    struct SdfOnly<'a>(&'a AnalyticScene);
    impl<'a> SceneModel for SdfOnly<'a> {
        fn bbox(&self) -> crate::math::Aabb {
            self.0.bbox
        }
        fn sharpness(&self) -> f64 {
            self.0.sharpness
        }
        fn sdf(&self, x: Vec3) -> f64 {
            self.0.sdf.eval(x)
        }
        fn normal(&self, x: Vec3) -> Result<Vec3> {
            self.0.normal(x)
        }
        fn brdf(&self, x: Vec3) -> crate::brdf::BrdfParams {
            self.0.brdf_at(x)
        }
        fn emission(&self, x: Vec3) -> Vec3 {
            self.0.emission_at(x)
        }
        fn env(&self, _dir: Vec3) -> Vec3 {
            Vec3::ZERO
        }
        fn radiance(&self, _which: RadField, _x: Vec3, _w: Vec3) -> Vec3 {
            Vec3::ZERO
        }
    }
    march(&SdfOnly(scene), ray, n, strata)
}

/// Unbiased pixel estimate with the configured source set.
pub fn path_trace_sources(
    scene: &AnalyticScene,
    ray: &Ray,
    cfg: &PathTraceConfig,
    sources: SourceSet,
) -> Vec3 {
    let tracer = Tracer { scene, cfg: *cfg, sources, env_params: scene.env.to_params() };
    let mut acc = Vec3::ZERO;
    for s in 0..cfg.spp.max(1) {
        acc += tracer.trace(ray, cfg.bounces, sampler::mix(&[cfg.seed, s as u64, 0x7ace]));
    }
    acc / cfg.spp.max(1) as f64
}

pub fn path_trace(scene: &AnalyticScene, ray: &Ray, cfg: &PathTraceConfig) -> Vec3 {
    path_trace_sources(scene, ray, cfg, SourceSet::Both)
}

/// Oracle-backed scene model: geometry, materials, emission, and the
/// environment come from the analytic scene; the outgoing radiance fields
/// are realized by bounded-depth path tracing, so L-hat applied to this
/// model equals the model at one extra bounce.
pub struct OracleModel<'a> {
    pub scene: &'a AnalyticScene,
    /// Reflection depth of radiance queries (0 = emission / direct env only).
    pub depth: usize,
    /// Hemisphere dirs per recursion level.
    pub dirs: usize,
    pub n_march: usize,
    pub seed: u64,
    /// Weights below this skip the nested radiance recursion.
    pub min_weight: f64,
}

impl<'a> OracleModel<'a> {
    pub fn new(scene: &'a AnalyticScene, depth: usize, dirs: usize, n_march: usize, seed: u64) -> Self {
        OracleModel { scene, depth, dirs, n_march, seed, min_weight: 1e-5 }
    }

    /// Outgoing radiance at x in direction w with the selected sources,
    /// truncated at `depth` reflections.
    fn l_out(&self, sources: SourceSet, x: Vec3, w: Vec3, depth: usize, key: u64) -> Vec3 {
        let c = if sources.emission() { self.scene.emission_at(x) } else { Vec3::ZERO };
        if depth == 0 {
            return c;
        }
        let Ok(n) = self.scene.normal(x) else {
            return c;
        };
        if n.dot(w) <= 0.0 {
            return c;
        }
        let params = self.scene.brdf_at(x);
        let env_params = self.scene.env.to_params();
        let mut refl = Vec3::ZERO;
        for j in 0..self.dirs {
            let dkey = sampler::mix(&[key, j as u64, DIR_SALT]);
            let dir = sampler::hemisphere_dir(n, &[dkey]);
            let sray = secondary(self.scene, x, dir);
            let m = march_sdf(self.scene, &sray, self.n_march, Strata::Jittered {
                key: sampler::mix(&[dkey, STRATA_SALT]),
            });
            let mut incoming = if sources.env() {
                eval_params(&env_params, dir) * m.t_end
            } else {
                Vec3::ZERO
            };
            for k in 0..m.n_samples() {
                if m.weights[k] > self.min_weight {
                    incoming += self
                        .l_out(sources, m.position(&sray, k), -dir, depth - 1, sampler::mix(&[dkey, k as u64]))
                        * m.weights[k];
                } else if sources.emission()
                    && m.weights[k] > crate::renderer::march::MIN_SHADE_WEIGHT
                {
                    // Emission composites exactly even below the recursion cut.
                    incoming += self.scene.emission_at(m.position(&sray, k)) * m.weights[k];
                }
            }
            if let Ok(r) = eval_brdf(n, w, dir, &params) {
                refl += incoming.hadamard(r.value);
            }
        }
        c + refl * (2.0 * std::f64::consts::PI / self.dirs as f64)
    }

    fn point_key(&self, x: Vec3, w: Vec3) -> u64 {
        sampler::mix(&[
            self.seed,
            x.x.to_bits(),
            x.y.to_bits(),
            x.z.to_bits(),
            w.x.to_bits(),
            w.y.to_bits(),
            w.z.to_bits(),
        ])
    }
}

impl<'a> SceneModel for OracleModel<'a> {
    fn bbox(&self) -> crate::math::Aabb {
        self.scene.bbox
    }

    fn sharpness(&self) -> f64 {
        self.scene.sharpness
    }

    fn sdf(&self, x: Vec3) -> f64 {
        self.scene.sdf.eval(x)
    }

    fn normal(&self, x: Vec3) -> Result<Vec3> {
        self.scene.normal(x)
    }

    fn brdf(&self, x: Vec3) -> crate::brdf::BrdfParams {
        self.scene.brdf_at(x)
    }

    fn emission(&self, x: Vec3) -> Vec3 {
        self.scene.emission_at(x)
    }

    fn env(&self, dir: Vec3) -> Vec3 {
        eval_params(&self.scene.env.to_params(), dir)
    }

    fn radiance(&self, which: RadField, x: Vec3, w: Vec3) -> Vec3 {
        let sources = match which {
            RadField::S => SourceSet::EnvOnly,
            RadField::E => SourceSet::EmissionOnly,
        };
        self.l_out(sources, x, w, self.depth, self.point_key(x, w))
    }
}

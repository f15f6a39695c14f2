//! Synthetic dataset generation: LDR on/off image pairs, HDR references,
//! ground-truth emission masks, and the poses file.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::colorspace::tone_curve_vec;
use crate::error::{Error, Result};
use crate::io::camera::{spiral_cameras, Camera};
use crate::io::dataset::{write_mask_png, write_srgb_png, FrameEntry, TransformsFile};
use crate::io::pfm::write_pfm;
use crate::math::Vec3;
use crate::renderer::Strata;

use super::scene::AnalyticScene;
use super::trace::{path_trace_sources, PathTraceConfig, SourceSet};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub spp: usize,
    pub bounces: usize,
    pub n_march: usize,
    pub seed: u64,
    /// Composited emission strength above which a pixel belongs to the
    /// ground-truth emitter mask.
    pub mask_threshold: f64,
    pub camera_angle_x: f64,
    pub camera_radius: f64,
    pub camera_heights: (f64, f64),
    pub look_at: Vec3,
}

impl Default for SynthConfig {
    fn default() -> SynthConfig {
        SynthConfig {
            spp: 96,
            bounces: 2,
            n_march: 64,
            seed: 0,
            mask_threshold: 0.5,
            camera_angle_x: 0.9,
            camera_radius: 0.6,
            camera_heights: (1.7, 2.0),
            look_at: Vec3::new(0.15, 0.0, 0.35),
        }
    }
}

/// One rendered view: separate environment-driven and emission-driven HDR
/// parts (transport is linear in the sources, so on = S + E and off = S).
pub struct ViewRender {
    pub hdr_s: Vec<Vec3>,
    pub hdr_e: Vec<Vec3>,
    pub mask: Vec<bool>,
}

pub fn render_view(scene: &AnalyticScene, camera: &Camera, cfg: &SynthConfig) -> ViewRender {
    let w = camera.width;
    let h = camera.height;
    let pixels: Vec<(Vec3, Vec3, bool)> = (0..w * h)
        .into_par_iter()
        .map(|i| {
            let (px, py) = (i % w, i / w);
            let ray = camera.pixel_ray(px, py, &scene.bbox, true);
            let ptc = PathTraceConfig {
                bounces: cfg.bounces,
                spp: cfg.spp,
                n_march: cfg.n_march,
                dirs: 1,
                jitter: true,
                seed: crate::sampler::mix(&[cfg.seed, i as u64, 0x5e_ed]),
            };
            let s = path_trace_sources(scene, &ray, &ptc, SourceSet::EnvOnly);
            let e = path_trace_sources(scene, &ray, &ptc, SourceSet::EmissionOnly);
            // Deterministic emitter-mask decision from the composited
            // emission along the midpoint march.
            let det = PathTraceConfig { bounces: 0, spp: 1, jitter: false, ..ptc };
            let strength = path_trace_sources(scene, &ray, &det, SourceSet::EmissionOnly);
            (s, e, strength.max_component() > cfg.mask_threshold)
        })
        .collect();
    ViewRender {
        hdr_s: pixels.iter().map(|p| p.0).collect(),
        hdr_e: pixels.iter().map(|p| p.1).collect(),
        mask: pixels.iter().map(|p| p.2).collect(),
    }
}

/// LDR encoding used for every synthesized image: clip + gamma, then 8-bit
/// quantization on write.
pub fn hdr_to_ldr(hdr: &[Vec3]) -> Vec<Vec3> {
    hdr.iter().map(|&c| tone_curve_vec(c)).collect()
}

/// Writes n_views on/off LDR pairs, HDR PFM references, binary emission
/// masks, and transforms.json under `out_dir`.
pub fn synthesize_dataset(
    scene: &AnalyticScene,
    n_views: usize,
    resolution: usize,
    out_dir: &Path,
    cfg: &SynthConfig,
) -> Result<Vec<Camera>> {
    if n_views == 0 {
        return Err(Error::Config("n_views must be positive".into()));
    }
    for sub in ["images", "hdr", "masks"] {
        std::fs::create_dir_all(out_dir.join(sub)).map_err(|e| Error::io(out_dir.join(sub), e))?;
    }
    let cameras = spiral_cameras(
        n_views,
        cfg.camera_radius,
        cfg.camera_heights,
        cfg.look_at,
        cfg.camera_angle_x,
        resolution,
        resolution,
    );

    let mut frames = Vec::new();
    for (v, cam) in cameras.iter().enumerate() {
        let render = render_view(scene, cam, cfg);
        let hdr_on: Vec<Vec3> = render
            .hdr_s
            .iter()
            .zip(render.hdr_e.iter())
            .map(|(&s, &e)| s + e)
            .collect();
        let hdr_off = render.hdr_s.clone();

        let mask_rel = format!("masks/m_{v:03}.png");
        write_mask_png(&out_dir.join(&mask_rel), resolution, resolution, &render.mask)?;

        for (cond, hdr) in [("on", &hdr_on), ("off", &hdr_off)] {
            let img_rel = format!("images/r_{v:03}_{cond}.png");
            let hdr_rel = format!("hdr/r_{v:03}_{cond}.pfm");
            write_srgb_png(&out_dir.join(&img_rel), resolution, resolution, &hdr_to_ldr(hdr))?;
            write_pfm(&out_dir.join(&hdr_rel), resolution, resolution, hdr)?;
            frames.push(FrameEntry {
                file_path: img_rel,
                transform_matrix: cam.c2w,
                emissive_on: Some(cond == "on"),
                mask_path: Some(mask_rel.clone()),
                hdr_path: Some(hdr_rel),
                alpha_path: None,
            });
        }
    }

    let tf = TransformsFile { camera_angle_x: cfg.camera_angle_x, bbox: Some(scene.bbox), frames };
    let tpath = out_dir.join("transforms.json");
    std::fs::write(&tpath, serde_json::to_string_pretty(&tf)?).map_err(|e| Error::io(&tpath, e))?;
    Ok(cameras)
}

/// Deterministic composited-emission strength map of a view (the quantity
/// behind the ground-truth masks and the identification baseline).
pub fn emission_strength_map(scene: &AnalyticScene, camera: &Camera, n_march: usize) -> Vec<f64> {
    let w = camera.width;
    (0..w * camera.height)
        .into_par_iter()
        .map(|i| {
            let ray = camera.pixel_ray(i % w, i / w, &scene.bbox, true);
            let cfg = PathTraceConfig {
                bounces: 0,
                spp: 1,
                n_march,
                dirs: 1,
                jitter: false,
                seed: 0,
            };
            path_trace_sources(scene, &ray, &cfg, SourceSet::EmissionOnly).max_component()
        })
        .collect()
}

/// Fraction of primary rays that terminate on geometry (residual
/// transmittance below 1%); the box-scene cameras are chosen so this is 1.
pub fn coverage_fraction(scene: &AnalyticScene, camera: &Camera) -> f64 {
    use crate::renderer::{march, SceneModel};
    struct S<'a>(&'a AnalyticScene);
    impl<'a> SceneModel for S<'a> {
        fn bbox(&self) -> crate::math::Aabb {
            self.0.bbox
        }
        fn sharpness(&self) -> f64 {
            self.0.sharpness
        }
        fn sdf(&self, x: Vec3) -> f64 {
            self.0.sdf.eval(x)
        }
        fn normal(&self, x: Vec3) -> crate::error::Result<Vec3> {
            self.0.normal(x)
        }
        fn brdf(&self, x: Vec3) -> crate::brdf::BrdfParams {
            self.0.brdf_at(x)
        }
        fn emission(&self, x: Vec3) -> Vec3 {
            self.0.emission_at(x)
        }
        fn env(&self, _: Vec3) -> Vec3 {
            Vec3::ZERO
        }
        fn radiance(&self, _: crate::fields::RadField, _: Vec3, _: Vec3) -> Vec3 {
            Vec3::ZERO
        }
    }
    let model = S(scene);
    let w = camera.width;
    let hits: usize = (0..w * camera.height)
        .into_par_iter()
        .map(|i| {
            let ray = camera.pixel_ray(i % w, i / w, &scene.bbox, true);
            let m = march(&model, &ray, 96, Strata::Midpoint);
            usize::from(m.t_end < 0.01)
        })
        .sum();
    hits as f64 / (w * camera.height) as f64
}

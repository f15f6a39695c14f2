//! Scene re-lighting: selecting reconstructed emissive sources with image
//! masks, substituting their hue/saturation/intensity in HSV space, and
//! propagating the edit either by fine-tuning the emission radiance field
//! or by direct one-bounce illumination.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::brdf::BrdfParams;
use crate::colorspace::{hsv_to_rgb, rgb_to_hsv, HsvColor, LinearRGB};
use crate::error::{Error, Result};
use crate::fields::store::ParamClass;
use crate::fields::{FieldSet, RadField};
use crate::io::camera::Camera;
use crate::math::{Aabb, Mat3, Vec3};
use crate::renderer::march::{expected_surface_point, march, Ray};
use crate::renderer::model::SceneModel;
use crate::renderer::transport::{hemisphere_dirs, lhat_e, LhatEVariant, TransportConfig};
use crate::renderer::Strata;
use crate::sampler;
use crate::training::groups::RayGroups;
use crate::training::losses::TrainRay;
use crate::training::optimizer::{Adam, OptimizerConfig};

/// Projection camera in computer-vision convention: pixel = K [R|t] [p|1],
/// perspective divide, +z in front.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EditCamera {
    #[serde(rename = "K")]
    pub k: [[f64; 3]; 3],
    #[serde(rename = "R")]
    pub r: [[f64; 3]; 3],
    pub t: [f64; 3],
    pub width: usize,
    pub height: usize,
}

impl EditCamera {
    pub fn from_camera(cam: &Camera) -> EditCamera {
        let (r, t) = cam.world_to_camera_cv();
        EditCamera {
            k: cam.intrinsics().rows,
            r: r.rows,
            t: t.to_array(),
            width: cam.width,
            height: cam.height,
        }
    }

    /// Continuous pixel coordinates of a world point; None behind the
    /// camera (w' <= 0).
    pub fn project(&self, p: Vec3) -> Option<(f64, f64)> {
        let r = Mat3 { rows: self.r };
        let cam = r.mul_vec(p) + Vec3::from_array(self.t);
        if cam.z <= 0.0 {
            return None;
        }
        let k = Mat3 { rows: self.k };
        let uv = k.mul_vec(cam);
        Some((uv.x / uv.z, uv.y / uv.z))
    }
}

#[derive(Clone, Debug)]
pub struct EditSource {
    /// Binary mask, nonzero = selected, at the edit camera's resolution.
    pub mask: Vec<f64>,
    pub hue: f64,
    pub saturation: f64,
    pub intensity: f64,
}

#[derive(Clone, Debug)]
pub struct EditSpec {
    pub camera: EditCamera,
    pub sources: Vec<EditSource>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct EditSourceFile {
    mask_path: String,
    hue: f64,
    saturation: f64,
    intensity: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct EditSpecFile {
    camera: EditCamera,
    sources: Vec<EditSourceFile>,
}

impl EditSpec {
    pub fn load(path: &Path) -> Result<EditSpec> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: EditSpecFile = serde_json::from_str(&raw)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        let mut sources = Vec::new();
        for s in &file.sources {
            if !(0.0..1.0).contains(&s.hue) || !(0.0..=1.0).contains(&s.saturation) || s.intensity < 0.0
            {
                return Err(Error::EditSpec(format!(
                    "source targets out of range: h={} s={} i={}",
                    s.hue, s.saturation, s.intensity
                )));
            }
            let img = image::open(dir.join(&s.mask_path))?.to_luma8();
            if (img.width() as usize, img.height() as usize) != (file.camera.width, file.camera.height)
            {
                return Err(Error::EditSpec(format!(
                    "mask {} is {}x{}, camera expects {}x{}",
                    s.mask_path,
                    img.width(),
                    img.height(),
                    file.camera.width,
                    file.camera.height
                )));
            }
            sources.push(EditSource {
                mask: img.pixels().map(|p| p.0[0] as f64 / 255.0).collect(),
                hue: s.hue,
                saturation: s.saturation,
                intensity: s.intensity,
            });
        }
        Ok(EditSpec { camera: file.camera, sources })
    }

    pub fn save(
        path: &Path,
        camera: &EditCamera,
        sources: &[(String, f64, f64, f64)],
    ) -> Result<()> {
        let file = EditSpecFile {
            camera: camera.clone(),
            sources: sources
                .iter()
                .map(|(mask_path, hue, saturation, intensity)| EditSourceFile {
                    mask_path: mask_path.clone(),
                    hue: *hue,
                    saturation: *saturation,
                    intensity: *intensity,
                })
                .collect(),
        };
        std::fs::write(path, serde_json::to_string_pretty(&file)?).map_err(|e| Error::io(path, e))
    }
}

/// Bilinear mask sample at continuous pixel coordinates; zero outside the
/// image bounds.
pub fn mask_bilinear(mask: &[f64], width: usize, height: usize, px: f64, py: f64) -> f64 {
    if px < 0.0 || py < 0.0 || px > width as f64 || py > height as f64 {
        return 0.0;
    }
    let u = (px - 0.5).clamp(0.0, width as f64 - 1.0);
    let v = (py - 0.5).clamp(0.0, height as f64 - 1.0);
    let x0 = (u.floor() as usize).min(width - 1);
    let y0 = (v.floor() as usize).min(height - 1);
    let x1 = (x0 + 1).min(width - 1);
    let y1 = (y0 + 1).min(height - 1);
    let fx = u - x0 as f64;
    let fy = v - y0 as f64;
    let m = |x: usize, y: usize| mask[y * width + x];
    m(x0, y0) * (1.0 - fx) * (1.0 - fy)
        + m(x1, y0) * fx * (1.0 - fy)
        + m(x0, y1) * (1.0 - fx) * fy
        + m(x1, y1) * fx * fy
}

/// Per-source hit sets over the uncertain rays: a ray hits source j when
/// its expected surface point projects into the mask with interpolated
/// value > 0. Points behind the camera or outside the image never hit.
pub fn match_rays(
    fields: &FieldSet,
    groups: &RayGroups,
    rays: &[TrainRay],
    spec: &EditSpec,
    n_samples: usize,
) -> Vec<Vec<(usize, Vec3)>> {
    let uncertain: Vec<&TrainRay> = rays.iter().filter(|r| !groups.is_certain(r.id)).collect();
    let hits: Vec<Option<(usize, usize, Vec3)>> = uncertain
        .par_iter()
        .map(|tr| {
            let m = march(fields, &tr.ray, n_samples, Strata::Midpoint);
            let p = expected_surface_point(&tr.ray, &m);
            let (px, py) = spec.camera.project(p)?;
            for (j, src) in spec.sources.iter().enumerate() {
                if mask_bilinear(&src.mask, spec.camera.width, spec.camera.height, px, py) > 0.0 {
                    return Some((j, tr.id, p));
                }
            }
            None
        })
        .collect();
    let mut out = vec![Vec::new(); spec.sources.len()];
    for h in hits.into_iter().flatten() {
        out[h.0].push((h.1, h.2));
    }
    out
}

/// New emission for a hit point: substitute hue and saturation, scale the
/// value channel by the intensity.
pub fn edit_emission(e: Vec3, hue: f64, saturation: f64, intensity: f64) -> Vec3 {
    let hsv = rgb_to_hsv(LinearRGB(e));
    hsv_to_rgb(HsvColor { h: hue, s: saturation, v: hsv.v * intensity }).0
}

/// 3D extent of an edit: spheres of one voxel radius around the hit rays'
/// expected surface points, rasterized into a voxel id grid so emission
/// outside every stamp is bit-identical to the original field.
#[derive(Clone, Debug)]
pub struct EmissionEdit {
    res: [usize; 3],
    bbox: Aabb,
    /// Source index + 1 per voxel; 0 = untouched.
    voxel_source: Vec<u32>,
    pub targets: Vec<(f64, f64, f64)>,
}

impl EmissionEdit {
    pub fn build(fields: &FieldSet, spec: &EditSpec, hits: &[Vec<(usize, Vec3)>]) -> EmissionEdit {
        let res = fields.cfg.grid_res;
        let bbox = fields.cfg.bbox;
        let radius = fields.cfg.voxel_size();
        let mut voxel_source = vec![0u32; res[0] * res[1] * res[2]];
        let ext = bbox.extent();
        let cell = [ext.x / res[0] as f64, ext.y / res[1] as f64, ext.z / res[2] as f64];
        for (j, source_hits) in hits.iter().enumerate() {
            for &(_, p) in source_hits {
                // Voxel-index window covering the sphere.
                let lo = p - Vec3::splat(radius);
                let hi = p + Vec3::splat(radius);
                let idx = |v: f64, axis: usize| -> (usize, usize) {
                    let lo_i = ((v - bbox.min.component(axis)) / cell[axis] - 0.5).floor() as i64;
                    (lo_i.max(0) as usize, 0)
                };
                let _ = idx;
                let lo_i = [
                    (((lo.x - bbox.min.x) / cell[0] - 0.5).floor().max(0.0)) as usize,
                    (((lo.y - bbox.min.y) / cell[1] - 0.5).floor().max(0.0)) as usize,
                    (((lo.z - bbox.min.z) / cell[2] - 0.5).floor().max(0.0)) as usize,
                ];
                let hi_i = [
                    ((((hi.x - bbox.min.x) / cell[0] - 0.5).ceil()) as usize).min(res[0] - 1),
                    ((((hi.y - bbox.min.y) / cell[1] - 0.5).ceil()) as usize).min(res[1] - 1),
                    ((((hi.z - bbox.min.z) / cell[2] - 0.5).ceil()) as usize).min(res[2] - 1),
                ];
                for ix in lo_i[0]..=hi_i[0] {
                    for iy in lo_i[1]..=hi_i[1] {
                        for iz in lo_i[2]..=hi_i[2] {
                            let center = Vec3::new(
                                bbox.min.x + (ix as f64 + 0.5) * cell[0],
                                bbox.min.y + (iy as f64 + 0.5) * cell[1],
                                bbox.min.z + (iz as f64 + 0.5) * cell[2],
                            );
                            if (center - p).norm() <= radius {
                                let v = &mut voxel_source[(ix * res[1] + iy) * res[2] + iz];
                                if *v == 0 {
                                    *v = j as u32 + 1;
                                }
                            }
                        }
                    }
                }
            }
        }
        EmissionEdit {
            res,
            bbox,
            voxel_source,
            targets: spec.sources.iter().map(|s| (s.hue, s.saturation, s.intensity)).collect(),
        }
    }

    /// Which source stamp (if any) covers the point.
    pub fn source_at(&self, x: Vec3) -> Option<usize> {
        if !self.bbox.contains(x) {
            return None;
        }
        let ext = self.bbox.extent();
        let ix = (((x.x - self.bbox.min.x) / ext.x * self.res[0] as f64) as usize).min(self.res[0] - 1);
        let iy = (((x.y - self.bbox.min.y) / ext.y * self.res[1] as f64) as usize).min(self.res[1] - 1);
        let iz = (((x.z - self.bbox.min.z) / ext.z * self.res[2] as f64) as usize).min(self.res[2] - 1);
        let v = self.voxel_source[(ix * self.res[1] + iy) * self.res[2] + iz];
        if v == 0 {
            None
        } else {
            Some(v as usize - 1)
        }
    }

    pub fn n_stamped_voxels(&self) -> usize {
        self.voxel_source.iter().filter(|&&v| v != 0).count()
    }
}

/// FieldSet with the emission edit applied; everything else delegates.
pub struct EditedModel<'a> {
    pub fields: &'a FieldSet,
    pub edit: &'a EmissionEdit,
}

impl<'a> EditedModel<'a> {
    pub fn emission(&self, x: Vec3) -> Vec3 {
        match self.edit.source_at(x) {
            None => self.fields.emission_at(x),
            Some(j) => {
                let (h, s, i) = self.edit.targets[j];
                edit_emission(self.fields.emission_at(x), h, s, i)
            }
        }
    }
}

impl<'a> SceneModel for EditedModel<'a> {
    fn bbox(&self) -> Aabb {
        self.fields.cfg.bbox
    }
    fn sharpness(&self) -> f64 {
        self.fields.sharpness()
    }
    fn sdf(&self, x: Vec3) -> f64 {
        self.fields.sdf_value(x)
    }
    fn normal(&self, x: Vec3) -> Result<Vec3> {
        self.fields.sdf_normal(x)
    }
    fn brdf(&self, x: Vec3) -> BrdfParams {
        self.fields.brdf_at(x)
    }
    fn emission(&self, x: Vec3) -> Vec3 {
        EditedModel::emission(self, x)
    }
    fn env(&self, dir: Vec3) -> Vec3 {
        self.fields.env_eval(dir)
    }
    fn radiance(&self, which: RadField, x: Vec3, w: Vec3) -> Vec3 {
        self.fields.radiance(which, x, w)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct FinetuneConfig {
    pub steps: usize,
    pub points_per_step: usize,
    pub hemi_samples: usize,
    pub secondary_samples: usize,
    pub n_primary_samples: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for FinetuneConfig {
    fn default() -> FinetuneConfig {
        FinetuneConfig {
            steps: 200,
            points_per_step: 24,
            hemi_samples: 8,
            secondary_samples: 24,
            n_primary_samples: 48,
            lr: 1e-3,
            seed: 0,
        }
    }
}

pub struct FinetuneOutput {
    pub loss_curve: Vec<f64>,
    /// Norm of the radiance-field parameter change.
    pub param_delta: f64,
}

/// Fine-tune the emission radiance field toward the edited reconstruction
/// (everything except that field is frozen):
/// loss = sum ||L_E(x, w) - sg(Lhat_E_edited(x, w))||^2.
pub fn finetune_radiance(
    fields: &mut FieldSet,
    edit: &EmissionEdit,
    rays: &[TrainRay],
    cfg: &FinetuneConfig,
) -> Result<FinetuneOutput> {
    let frozen_before: Vec<f64> = {
        let mut v = fields.params.clone();
        for class in [ParamClass::RadianceEGrid, ParamClass::RadianceEHead] {
            for i in fields.layout.range(class) {
                v[i] = 0.0;
            }
        }
        v
    };
    let rad_before: Vec<f64> = fields.params[fields.layout.range(ParamClass::RadianceEGrid)]
        .iter()
        .chain(fields.params[fields.layout.range(ParamClass::RadianceEHead)].iter())
        .copied()
        .collect();

    let on_rays: Vec<&TrainRay> = rays.iter().filter(|r| r.ray.on).collect();
    if on_rays.is_empty() {
        return Err(Error::EditSpec("no lights-on rays to fine-tune with".into()));
    }
    let mut adam = Adam::new(
        &fields.layout,
        OptimizerConfig { lr_grids: cfg.lr, lr_heads: cfg.lr, ..OptimizerConfig::default() },
    );
    let mut loss_curve = Vec::with_capacity(cfg.steps);

    for step in 0..cfg.steps {
        let step_key = sampler::mix(&[cfg.seed, step as u64, 0xf1e7]);
        // Deterministic point selection: dominant crossings of randomly
        // drawn lights-on rays.
        let mut points = Vec::new();
        let mut rng = sampler::Stream::new(&[step_key, 0x90]);
        let mut tries = 0;
        while points.len() < cfg.points_per_step && tries < 8 * cfg.points_per_step {
            tries += 1;
            let tr = on_rays[rng.next_usize(on_rays.len())];
            let m = march(fields, &tr.ray, cfg.n_primary_samples, Strata::Midpoint);
            if m.weight_sum() < 0.5 {
                continue;
            }
            let best = (0..m.n_samples())
                .max_by(|&a, &b| m.weights[a].total_cmp(&m.weights[b]))
                .unwrap();
            let x = m.position(&tr.ray, best);
            let Ok(n) = fields.sdf_normal(x) else { continue };
            if n.dot(tr.ray.dir_out) <= 1e-3 {
                continue;
            }
            points.push((x, tr.ray.dir_out));
        }

        let model = EditedModel { fields, edit };
        let mut grad = fields.grad_store();
        let mut loss = 0.0;
        for (i, &(x, wo)) in points.iter().enumerate() {
            let tcfg = TransportConfig::new(
                cfg.hemi_samples,
                cfg.secondary_samples,
                sampler::mix(&[step_key, i as u64, 0x7a]),
            );
            // The target is the edited reconstruction under stop-gradient.
            let Ok(target) = lhat_e(&model, x, wo, LhatEVariant::Full, &tcfg) else {
                continue;
            };
            let l = fields.radiance(RadField::E, x, wo);
            let resid = l - target;
            loss += resid.dot(resid);
            fields.radiance_backward(RadField::E, x, wo, resid * 2.0, &mut grad);
        }
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { step, diagnostic: "edit fine-tune".into() });
        }
        // Freeze contract: only the emission radiance field may move.
        for (class, range) in fields.layout.classes() {
            if class != ParamClass::RadianceEGrid && class != ParamClass::RadianceEHead {
                debug_assert!(grad.values[range.clone()].iter().all(|&g| g == 0.0));
                for g in &mut grad.values[range] {
                    *g = 0.0;
                }
            }
        }
        adam.step(&fields.layout, &mut fields.params, &grad);
        loss_curve.push(loss);
    }

    // Frozen parameters must be bit-identical.
    let mut frozen_after = fields.params.clone();
    for class in [ParamClass::RadianceEGrid, ParamClass::RadianceEHead] {
        for i in fields.layout.range(class) {
            frozen_after[i] = 0.0;
        }
    }
    if frozen_after != frozen_before {
        return Err(Error::EditSpec("frozen parameters moved during fine-tune".into()));
    }

    let rad_after: Vec<f64> = fields.params[fields.layout.range(ParamClass::RadianceEGrid)]
        .iter()
        .chain(fields.params[fields.layout.range(ParamClass::RadianceEHead)].iter())
        .copied()
        .collect();
    let param_delta = rad_before
        .iter()
        .zip(rad_after.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Ok(FinetuneOutput { loss_curve, param_delta })
}

/// Direct-illumination re-lighting of one ray: per primary sample the
/// outgoing radiance is the edited emission plus the one-bounce reflection
/// of the edited emission, plus the trained lights-off radiance.
pub struct DirectRelight {
    pub total: Vec3,
    pub emission: Vec3,
    pub emission_reflection: Vec3,
    pub s_part: Vec3,
}

pub fn direct_relight(
    fields: &FieldSet,
    edit: &EmissionEdit,
    ray: &Ray,
    n_primary: usize,
    tcfg: &TransportConfig,
) -> DirectRelight {
    let model = EditedModel { fields, edit };
    let m = march(&model, ray, n_primary, Strata::Midpoint);
    let mut out = DirectRelight {
        total: Vec3::ZERO,
        emission: Vec3::ZERO,
        emission_reflection: Vec3::ZERO,
        s_part: Vec3::ZERO,
    };
    for i in 0..m.n_samples() {
        let w = m.weights[i];
        if w < 1e-5 {
            continue;
        }
        let x = m.position(ray, i);
        out.emission += model.emission(x) * w;
        out.s_part += fields.radiance(RadField::S, x, ray.dir_out) * w;
        let Ok(n) = fields.sdf_normal(x) else { continue };
        if n.dot(ray.dir_out) <= 0.0 {
            continue;
        }
        let params = fields.brdf_at(x);
        let key = sampler::mix(&[tcfg.key, i as u64, 0xd1f]);
        let dirs = hemisphere_dirs(n, tcfg.hemi_samples, key);
        let scale = w * 2.0 * std::f64::consts::PI / dirs.len().max(1) as f64;
        for (j, &dir) in dirs.iter().enumerate() {
            let sray = crate::renderer::transport::secondary_ray(&fields.cfg.bbox, x, dir, true);
            let sm = march(
                &model,
                &sray,
                tcfg.secondary_samples,
                Strata::Jittered { key: sampler::mix(&[key, j as u64, 0x57a7]) },
            );
            let mut incoming = Vec3::ZERO;
            for k in 0..sm.n_samples() {
                if sm.weights[k] > 1e-7 {
                    incoming += model.emission(sm.position(&sray, k)) * sm.weights[k];
                }
            }
            if let Ok(r) = crate::brdf::eval_brdf(n, ray.dir_out, dir, &params) {
                out.emission_reflection += incoming.hadamard(r.value) * scale;
            }
        }
    }
    out.total = out.emission + out.emission_reflection + out.s_part;
    out
}

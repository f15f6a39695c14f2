//! Image-level operations shared by the CLI and the acceptance suite:
//! view rendering in each color mode, emission identification maps, and
//! dataset evaluation.

use rayon::prelude::*;

use crate::fields::FieldSet;
use crate::io::camera::Camera;
use crate::io::dataset::Dataset;
use crate::io::metrics::{best_threshold_iou, metric_iou, metric_mse_hdr, metric_psnr_ldr};
use crate::math::{Aabb, Vec3};
use crate::renderer::march::march;
use crate::renderer::model::SceneModel;
use crate::renderer::shade::{render_ray, ColorMode};
use crate::renderer::transport::{decompose_illumination, IlluminationBuffers, TransportConfig};
use crate::renderer::Strata;
use crate::sampler;
use crate::training::groups::RayGroups;
use crate::training::trainer::ray_emission_strength;

/// Render a full view in the requested color mode.
pub fn render_image(
    fields: &FieldSet,
    camera: &Camera,
    bbox: &Aabb,
    mode: ColorMode,
    on: bool,
    n_samples: usize,
) -> Vec<Vec3> {
    let w = camera.width;
    (0..w * camera.height)
        .into_par_iter()
        .map(|i| {
            let ray = camera.pixel_ray(i % w, i / w, bbox, on);
            render_ray(fields, Some(fields), &ray, n_samples, Strata::Midpoint).color(mode)
        })
        .collect()
}

/// Per-pixel illumination decomposition buffers of a view.
pub fn render_decomposition<M: SceneModel + ?Sized>(
    model: &M,
    camera: &Camera,
    n_samples: usize,
    hemi: usize,
    secondary: usize,
    seed: u64,
) -> Vec<IlluminationBuffers> {
    let w = camera.width;
    let bbox = model.bbox();
    (0..w * camera.height)
        .into_par_iter()
        .map(|i| {
            let ray = camera.pixel_ray(i % w, i / w, &bbox, true);
            let cfg = TransportConfig::new(hemi, secondary, sampler::mix(&[seed, i as u64, 0xdec]));
            decompose_illumination(model, &ray, n_samples, &cfg)
        })
        .collect()
}

/// Per-pixel expected emission strength of a view (deterministic march).
pub fn emission_strength_image(
    fields: &FieldSet,
    camera: &Camera,
    bbox: &Aabb,
    n_samples: usize,
) -> Vec<f64> {
    let w = camera.width;
    (0..w * camera.height)
        .into_par_iter()
        .map(|i| {
            let ray = camera.pixel_ray(i % w, i / w, bbox, true);
            ray_emission_strength(fields, &ray, n_samples)
        })
        .collect()
}

/// Identification mask of a frame: membership of its rays in the final
/// uncertain group when the frame was part of training, otherwise the
/// strength threshold at the final k.
pub fn identify_frame(
    fields: &FieldSet,
    dataset: &Dataset,
    groups: Option<&RayGroups>,
    frame_idx: usize,
    n_samples: usize,
) -> Vec<bool> {
    let frame = &dataset.frames[frame_idx];
    let per = dataset.pixels_per_frame();
    if let Some(g) = groups {
        if g.len() == dataset.n_rays() {
            let base = frame_idx * per;
            return (0..per).map(|i| !g.is_certain(base + i)).collect();
        }
    }
    let k = groups.map(|g| g.current_k).filter(|k| *k > 0.0).unwrap_or(1e-3);
    emission_strength_image(fields, &frame.camera, &dataset.bbox, n_samples)
        .into_iter()
        .map(|s| s >= k)
        .collect()
}

#[derive(Clone, Debug, Default, serde::Serialize)]
pub struct EvalReport {
    /// Aggregate IoU of identification masks over frames with GT masks.
    pub iou: f64,
    /// Best aggregate IoU of thresholding the lights-on LDR pixel values,
    /// swept at 0.01 intervals.
    pub baseline_ldr_iou: f64,
    pub baseline_ldr_threshold: f64,
    /// Best aggregate IoU of thresholding the composited emission strength.
    pub baseline_strength_iou: f64,
    /// Mean HDR MSE over frames with HDR references.
    pub mse_hdr: f64,
    /// Mean LDR PSNR over all frames.
    pub psnr_ldr: f64,
    /// Peak composited emission strength over identified pixels.
    pub peak_emission: f64,
    pub n_frames: usize,
}

/// Evaluate a trained model against a dataset's ground truth.
pub fn evaluate(
    fields: &FieldSet,
    dataset: &Dataset,
    groups: Option<&RayGroups>,
    n_samples: usize,
) -> EvalReport {
    let mut pred_all = Vec::new();
    let mut gt_all = Vec::new();
    let mut ldr_on_all = Vec::new();
    let mut strength_all = Vec::new();
    let mut mse_sum = 0.0;
    let mut mse_n = 0usize;
    let mut psnr_sum = 0.0;
    let mut peak: f64 = 0.0;

    for (fi, frame) in dataset.frames.iter().enumerate() {
        let ldr = render_image(fields, &frame.camera, &dataset.bbox, ColorMode::Gamma, frame.on, n_samples);
        psnr_sum += metric_psnr_ldr(&ldr, &frame.pixels);
        if let Some(hdr_gt) = &frame.gt_hdr {
            let hdr =
                render_image(fields, &frame.camera, &dataset.bbox, ColorMode::Hdr, frame.on, n_samples);
            mse_sum += metric_mse_hdr(&hdr, hdr_gt);
            mse_n += 1;
        }
        if let Some(gt_mask) = &frame.gt_mask {
            // Identification is judged once per view; use the lights-on
            // frames to avoid double counting.
            if frame.on {
                let pred = identify_frame(fields, dataset, groups, fi, n_samples);
                let strengths =
                    emission_strength_image(fields, &frame.camera, &dataset.bbox, n_samples);
                for (p, s) in pred.iter().zip(strengths.iter()) {
                    if *p {
                        peak = peak.max(*s);
                    }
                }
                pred_all.extend_from_slice(&pred);
                gt_all.extend_from_slice(gt_mask);
                ldr_on_all.extend(frame.pixels.iter().map(|p| p.max_component()));
                strength_all.extend_from_slice(&strengths);
            }
        }
    }

    let (iou, baseline_ldr, baseline_thr, baseline_strength) = if gt_all.is_empty() {
        (0.0, 0.0, 0.0, 0.0)
    } else {
        let iou = metric_iou(&pred_all, &gt_all);
        let (b_ldr, thr) = best_threshold_iou(&ldr_on_all, &gt_all, 0.0, 1.0, 0.01);
        let max_strength = strength_all.iter().fold(0.0f64, |m, &v| m.max(v)).max(1.0);
        let (b_str, _) =
            best_threshold_iou(&strength_all, &gt_all, 0.0, max_strength, max_strength / 100.0);
        (iou, b_ldr, thr, b_str)
    };

    EvalReport {
        iou,
        baseline_ldr_iou: baseline_ldr,
        baseline_ldr_threshold: baseline_thr,
        baseline_strength_iou: baseline_strength,
        mse_hdr: if mse_n > 0 { mse_sum / mse_n as f64 } else { 0.0 },
        psnr_ldr: psnr_sum / dataset.frames.len().max(1) as f64,
        peak_emission: peak,
        n_frames: dataset.frames.len(),
    }
}

/// Weight-sum transport identity on random field draws; returns the worst
/// deviation of sum(w) + T_end from 1.
pub fn weight_sum_worst_case(fields: &FieldSet, n_rays: usize, n_samples: usize, seed: u64) -> f64 {
    let bbox = fields.cfg.bbox;
    (0..n_rays as u64)
        .into_par_iter()
        .map(|i| {
            let dir = sampler::sphere_dir(&[seed, i, 1]);
            let origin = bbox.center()
                + Vec3::new(
                    sampler::uniform(&[seed, i, 2]) - 0.5,
                    sampler::uniform(&[seed, i, 3]) - 0.5,
                    sampler::uniform(&[seed, i, 4]) - 0.5,
                ) - dir * bbox.extent().norm();
            let Some((t0, t1)) = bbox.intersect(origin, dir) else {
                return 0.0;
            };
            let ray = crate::renderer::Ray::from_travel(origin, dir, t0.max(1e-4), t1, true);
            let m = march(fields, &ray, n_samples, Strata::Jittered { key: sampler::mix(&[seed, i]) });
            (m.weight_sum() + m.t_end - 1.0).abs()
        })
        .reduce(|| 0.0, f64::max)
}

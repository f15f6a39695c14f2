//! The three-phase optimizer loop: rendering-loss warmup, basic LTS, then
//! reflection-aware progressive refinement with emission suppression.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{FieldConfig, FieldSet};
use crate::io::checkpoint::{save_checkpoint, Checkpoint};
use crate::io::Dataset;
use crate::math::Vec3;
use crate::renderer::march::{expected_emission_strength, march};
use crate::renderer::transport::TransportConfig;
use crate::renderer::Strata;
use crate::sampler;

use super::groups::{BatchSampler, RayGroups, ThresholdSchedule};
use super::losses::{
    eikonal_loss, lts_loss_e, lts_loss_s, rendering_loss, select_lts_points, smoothing_loss,
    suppression_loss, LossWeights, LtsEMode, TrainRay,
};
use super::optimizer::{project_constraints, Adam, OptimizerConfig};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub field: FieldConfig,
    pub weights: LossWeights,
    pub optimizer: OptimizerConfig,
    pub n_primary_samples: usize,
    pub n_secondary_samples: usize,
    pub batch_rays: usize,
    /// LTS points evaluated per step (before the optional extra direction).
    pub lts_points: usize,
    pub lts_hemi_samples: usize,
    /// Evaluate each LTS point at a second, randomly drawn viewing
    /// direction so secondary queries of the radiance fields are supervised
    /// off the camera axes.
    pub lts_extra_dir: bool,
    pub phase1_steps: usize,
    pub phase2_steps: usize,
    pub phase3_steps: usize,
    pub group_update_interval: usize,
    pub k_floor: f64,
    pub k_cap: f64,
    pub checkpoint_interval: usize,
    /// Fraction of phase 1 during which the radiance direction encoding is
    /// disabled (view-dependence annealing).
    pub dir_warmup_frac: f64,
    /// Sharpness floor schedule over phase 1: geometric ramp from the init
    /// value to this target. Learning can push s above the ramp, never
    /// below it; after phase 1 the parameter is free.
    pub sharpness_target: f64,
    pub seed: u64,
    pub workers: usize,
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            field: FieldConfig::default(),
            weights: LossWeights::default(),
            optimizer: OptimizerConfig::default(),
            n_primary_samples: 100,
            n_secondary_samples: 64,
            batch_rays: 128,
            lts_points: 24,
            lts_hemi_samples: 16,
            lts_extra_dir: true,
            phase1_steps: 1000,
            phase2_steps: 800,
            phase3_steps: 2200,
            group_update_interval: 1000,
            k_floor: 1e-5,
            k_cap: 1e-3,
            checkpoint_interval: 1000,
            dir_warmup_frac: 0.6,
            sharpness_target: 60.0,
            seed: 0,
            workers: 0,
            log_every: 50,
        }
    }
}

impl TrainConfig {
    pub fn total_steps(&self) -> usize {
        self.phase1_steps + self.phase2_steps + self.phase3_steps
    }

    pub fn phase_at(&self, step: usize) -> usize {
        if step < self.phase1_steps {
            1
        } else if step < self.phase1_steps + self.phase2_steps {
            2
        } else {
            3
        }
    }
}

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct TrainLogRecord {
    pub step: usize,
    pub phase: usize,
    pub loss_render: f64,
    pub loss_lts_s: f64,
    pub loss_lts_e: f64,
    pub loss_supp: f64,
    pub loss_smooth: f64,
    pub n_uncertain: usize,
    pub n_certain: usize,
    pub k: f64,
}

pub struct TrainOutput {
    pub fields: FieldSet,
    pub groups: RayGroups,
    pub log: Vec<TrainLogRecord>,
    pub checkpoints: Vec<PathBuf>,
}

/// Build the flat training-ray list over every pixel of every frame.
pub fn dataset_rays(dataset: &Dataset) -> Vec<TrainRay> {
    let mut rays = Vec::with_capacity(dataset.n_rays());
    for (fi, frame) in dataset.frames.iter().enumerate() {
        for py in 0..dataset.height {
            for px in 0..dataset.width {
                let id = dataset.ray_id(fi, px, py);
                let pix = py * dataset.width + px;
                rays.push(TrainRay {
                    id,
                    ray: frame.camera.pixel_ray(px, py, &dataset.bbox, frame.on),
                    target: frame.pixels[pix],
                    alpha: frame.alpha.as_ref().map(|a| a[pix]),
                });
            }
        }
    }
    rays
}

/// Deterministic expected emission strength of a training ray (midpoint
/// march), the quantity the group threshold compares against.
pub fn ray_emission_strength(fields: &FieldSet, ray: &crate::renderer::Ray, n_samples: usize) -> f64 {
    let m = march(fields, ray, n_samples, Strata::Midpoint);
    expected_emission_strength(fields, ray, &m)
}

fn chunked<T: Sync + Send, R: Send>(
    items: &[T],
    workers: usize,
    f: impl Fn(&[T]) -> R + Sync,
) -> Vec<R> {
    if items.is_empty() {
        return Vec::new();
    }
    let workers = workers.max(1);
    let chunk = items.len().div_ceil(workers);
    items.par_chunks(chunk).map(|c| f(c)).collect()
}

pub fn train(
    dataset: &Dataset,
    cfg: &TrainConfig,
    out_dir: Option<&Path>,
    mut on_log: impl FnMut(&TrainLogRecord),
) -> Result<TrainOutput> {
    let mut field_cfg = cfg.field.clone();
    field_cfg.bbox = dataset.bbox;
    field_cfg.init_seed = cfg.seed;
    let mut fields = FieldSet::new(field_cfg)?;
    let rays = dataset_rays(dataset);
    let mut groups = RayGroups::new(rays.len());
    let mut sampler_state = BatchSampler::new(cfg.seed);
    let mut adam = Adam::new(&fields.layout, cfg.optimizer);

    let n_updates = if cfg.group_update_interval > 0 {
        (cfg.phase3_steps / cfg.group_update_interval).max(1)
    } else {
        1
    };
    let schedule = ThresholdSchedule::new(cfg.k_floor, cfg.k_cap, n_updates);

    let workers = if cfg.workers == 0 { rayon::current_num_threads() } else { cfg.workers };
    let mut log = Vec::new();
    let mut checkpoints = Vec::new();

    let dir_on_step = (cfg.phase1_steps as f64 * cfg.dir_warmup_frac) as usize;
    for step in 0..cfg.total_steps() {
        let phase = cfg.phase_at(step);
        fields.cfg.sh_scale = if step < dir_on_step { 0.0 } else { 1.0 };
        let step_key = sampler::mix(&[cfg.seed, step as u64, 0x57e9]);
        let batch_ids = sampler_state.make_batch(&groups, cfg.batch_rays);
        let batch: Vec<TrainRay> = batch_ids.iter().map(|&id| rays[id].clone()).collect();

        // Rendering loss over worker chunks, merged in chunk order so the
        // result is independent of scheduling.
        let partials = chunked(&batch, workers, |chunk| {
            let mut grad = fields.grad_store();
            let (loss, renders) = rendering_loss(
                &fields,
                chunk,
                cfg.weights.lambda_tau,
                cfg.weights.lambda_mask,
                cfg.n_primary_samples,
                step_key,
                &mut grad,
            );
            (loss, renders, grad)
        });
        let mut grad = fields.grad_store();
        let mut record = TrainLogRecord {
            step,
            phase,
            n_uncertain: groups.n_uncertain(),
            n_certain: groups.n_certain(),
            k: groups.current_k,
            ..TrainLogRecord::default()
        };
        let mut renders = Vec::with_capacity(batch.len());
        for (loss, rlist, g) in partials {
            record.loss_render += loss;
            renders.extend(rlist);
            grad.add_from(&g);
        }

        if cfg.weights.lambda_eikonal > 0.0 {
            // Probe points: dominant crossing of each batch ray plus random
            // bbox points, keeping the SDF metric everywhere.
            let mut pts = Vec::with_capacity(batch.len() + 128);
            for (tr, rr) in batch.iter().zip(renders.iter()) {
                if rr.march.weight_sum() > 0.3 {
                    let best = (0..rr.march.n_samples())
                        .max_by(|&a, &b| rr.march.weights[a].total_cmp(&rr.march.weights[b]))
                        .unwrap();
                    pts.push(rr.march.position(&tr.ray, best));
                }
            }
            let bbox = fields.cfg.bbox;
            let e = bbox.extent();
            for i in 0..128u64 {
                pts.push(Vec3::new(
                    bbox.min.x + e.x * sampler::uniform(&[step_key, i, 0xe1]),
                    bbox.min.y + e.y * sampler::uniform(&[step_key, i, 0xe2]),
                    bbox.min.z + e.z * sampler::uniform(&[step_key, i, 0xe3]),
                ));
            }
            let parts = chunked(&pts, workers, |chunk| {
                let mut g = fields.grad_store();
                let l = eikonal_loss(&fields, chunk, cfg.weights.lambda_eikonal, &mut g);
                (l, g)
            });
            for (l, g) in parts {
                record.loss_smooth += l;
                grad.add_from(&g);
            }
        }

        if phase >= 2 {
            let points = select_lts_points(
                &fields,
                &batch,
                &renders,
                |id| groups.is_certain(id),
                cfg.lts_points,
                cfg.lts_extra_dir,
                step_key,
            );
            // The emission side is only observable in lights-on context.
            let on_ids: std::collections::BTreeSet<usize> =
                batch.iter().filter(|r| r.ray.on).map(|r| r.id).collect();
            let on_points: Vec<_> =
                points.iter().filter(|p| on_ids.contains(&p.ray_id)).cloned().collect();
            let tcfg = TransportConfig::new(
                cfg.lts_hemi_samples,
                cfg.n_secondary_samples,
                sampler::mix(&[step_key, 0x175]),
            );

            let s_parts = chunked(&points, workers, |chunk| {
                let mut g = fields.grad_store();
                let l = lts_loss_s(&fields, chunk, &tcfg, cfg.weights.lambda_lts, &mut g);
                (l, g)
            });
            for (l, g) in s_parts {
                record.loss_lts_s += l;
                grad.add_from(&g);
            }

            let mode = if phase == 2 {
                LtsEMode::Basic
            } else {
                LtsEMode::Progressive {
                    lambda_l: cfg.weights.lambda_l,
                    lambda_r: cfg.weights.lambda_r,
                }
            };
            let e_parts = chunked(&on_points, workers, |chunk| {
                let mut g = fields.grad_store();
                let l = lts_loss_e(&fields, chunk, &tcfg, mode, cfg.weights.lambda_lts, &mut g);
                (l, g)
            });
            for (l, g) in e_parts {
                record.loss_lts_e += l;
                grad.add_from(&g);
            }

            if cfg.weights.lambda_smooth > 0.0 {
                let smooth_points: Vec<Vec3> = points.iter().map(|p| p.x).collect();
                let sm_parts = chunked(&smooth_points, workers, |chunk| {
                    let mut g = fields.grad_store();
                    let l =
                        smoothing_loss(&fields, chunk, step_key, cfg.weights.lambda_smooth, &mut g);
                    (l, g)
                });
                for (l, g) in sm_parts {
                    record.loss_smooth += l;
                    grad.add_from(&g);
                }
            }
        }

        if phase >= 3 && cfg.weights.lambda_supp > 0.0 {
            let certain_rays: Vec<TrainRay> =
                batch.iter().filter(|r| groups.is_certain(r.id)).cloned().collect();
            let parts = chunked(&certain_rays, workers, |chunk| {
                let mut g = fields.grad_store();
                let l = suppression_loss(
                    &fields,
                    chunk,
                    cfg.n_primary_samples,
                    step_key,
                    cfg.weights.lambda_supp,
                    &mut g,
                );
                (l, g)
            });
            for (l, g) in parts {
                record.loss_supp += l;
                grad.add_from(&g);
            }
        }

        let total = record.loss_render
            + record.loss_lts_s
            + record.loss_lts_e
            + record.loss_supp
            + record.loss_smooth;
        if !total.is_finite() {
            let diagnostic = format!(
                "batch rays {:?}; losses render={} lts_s={} lts_e={} supp={} smooth={}",
                &batch_ids[..batch_ids.len().min(16)],
                record.loss_render,
                record.loss_lts_s,
                record.loss_lts_e,
                record.loss_supp,
                record.loss_smooth
            );
            return Err(Error::NonFiniteLoss { step, diagnostic });
        }

        adam.step(&fields.layout, &mut fields.params, &grad);
        project_constraints(&mut fields);
        if cfg.phase1_steps > 0 && cfg.sharpness_target > 0.0 {
            let s0 = cfg.field.init_sharpness.max(1e-2);
            let frac = ((step + 1) as f64 / cfg.phase1_steps as f64).min(1.0);
            let floor = (s0.ln() + (cfg.sharpness_target.ln() - s0.ln()) * frac).exp();
            let idx = fields.layout.range(crate::fields::store::ParamClass::Sharpness).start;
            fields.params[idx] = fields.params[idx].max(floor.ln());
        }

        // Progressive group management at fixed intervals.
        if phase >= 3
            && cfg.group_update_interval > 0
            && (step + 1 - cfg.phase1_steps - cfg.phase2_steps) % cfg.group_update_interval == 0
        {
            let k = schedule.k_at(groups.update_count);
            let uncertain: Vec<usize> = groups.uncertain_ids().collect();
            let strengths: Vec<(usize, f64)> = uncertain
                .par_iter()
                .map(|&id| {
                    (id, ray_emission_strength(&fields, &rays[id].ray, cfg.n_primary_samples))
                })
                .collect();
            let map: std::collections::HashMap<usize, f64> = strengths.into_iter().collect();
            groups.update(|id| map[&id], k);
            sampler_state.invalidate();
            record.n_uncertain = groups.n_uncertain();
            record.n_certain = groups.n_certain();
            record.k = groups.current_k;
        }

        if step % cfg.log_every.max(1) == 0 || step + 1 == cfg.total_steps() {
            on_log(&record);
        }
        log.push(record);

        if let Some(dir) = out_dir {
            let due = cfg.checkpoint_interval > 0 && (step + 1) % cfg.checkpoint_interval == 0;
            if due || step + 1 == cfg.total_steps() {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                let path = dir.join(format!("checkpoint_{:06}.bin", step + 1));
                save_checkpoint(
                    &path,
                    &Checkpoint {
                        fields: fields.clone(),
                        groups: Some(groups.clone()),
                        step: (step + 1) as u64,
                        config_json: serde_json::to_string(cfg)?,
                    },
                )?;
                checkpoints.push(path);
            }
        }
    }

    Ok(TrainOutput { fields, groups, log, checkpoints })
}

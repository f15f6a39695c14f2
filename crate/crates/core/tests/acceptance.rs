//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the measured quantities. The end-to-end reconstruction (AC-4) trains one
//! model shared with the progressive-mechanics and editing criteria.

use std::sync::OnceLock;

use relume_core::colorspace::{
    hsv_to_rgb, linear_to_srgb, rgb_to_hsv, srgb_to_linear, tone_curve_scalar, HsvColor, LinearRGB,
    SrgbRGB,
};
use relume_core::editing::{
    direct_relight, finetune_radiance, match_rays, EditCamera, EditSource, EditSpec, EditedModel,
    EmissionEdit, FinetuneConfig,
};
use relume_core::fields::{FieldConfig, RadField};
use relume_core::io::checkpoint::load_checkpoint;
use relume_core::io::dataset::{load_dataset, Dataset};
use relume_core::io::pfm::{read_pfm, write_pfm};
use relume_core::math::{softplus, Vec3};
use relume_core::ops::{evaluate, weight_sum_worst_case};
use relume_core::oracle::scene::{make_box_scene, make_two_surface_scene, BoxSceneParams};
use relume_core::oracle::synth::{synthesize_dataset, SynthConfig};
use relume_core::oracle::trace::{path_trace_sources, OracleModel, PathTraceConfig, SourceSet};
use relume_core::renderer::shade::render_ray;
use relume_core::renderer::transport::{lhat_e, lhat_s, LhatEVariant, TransportConfig};
use relume_core::renderer::{march, Ray, SceneModel, Strata};
use relume_core::sampler;
use relume_core::training::gradcheck::{
    gradient_check, probe_fields, stop_gradient_zeros, LossSelector, Probe,
};
use relume_core::training::losses::LossWeights;
use relume_core::training::trainer::{dataset_rays, ray_emission_strength, train, TrainConfig, TrainOutput};

const EMITTER_STRENGTH: f64 = 5.0;

fn ac4_train_config() -> TrainConfig {
    TrainConfig {
        field: FieldConfig { grid_res: [40, 40, 40], env_lobes: 16, ..FieldConfig::default() },
        weights: LossWeights::default(),
        n_primary_samples: 80,
        n_secondary_samples: 24,
        batch_rays: 96,
        lts_points: 16,
        lts_hemi_samples: 8,
        lts_extra_dir: true,
        phase1_steps: 600,
        phase2_steps: 300,
        phase3_steps: 700,
        group_update_interval: 100,
        checkpoint_interval: 0,
        log_every: 10_000,
        seed: 11,
        ..TrainConfig::default()
    }
}

struct Trained {
    dataset: Dataset,
    output: TrainOutput,
    _dir: tempfile::TempDir,
}

fn trained_model() -> &'static Trained {
    static MODEL: OnceLock<Trained> = OnceLock::new();
    MODEL.get_or_init(|| {
        let dir = tempfile::tempdir().expect("tempdir");
        let scene = make_box_scene(&BoxSceneParams {
            emitter_strength: EMITTER_STRENGTH,
            ..BoxSceneParams::default()
        });
        let synth = SynthConfig { spp: 96, bounces: 2, seed: 5, ..SynthConfig::default() };
        synthesize_dataset(&scene, 16, 64, dir.path(), &synth).expect("synthesize");
        let dataset = load_dataset(dir.path()).expect("load");
        let cfg = ac4_train_config();
        let output = train(&dataset, &cfg, None, |_| {}).expect("train");
        Trained { dataset, output, _dir: dir }
    })
}

#[test]
fn ac1_gradient_suite() {
    let start = std::time::Instant::now();
    let fields = probe_fields(8, 3);
    let probe = Probe::build(&fields, 4, 16, 4, 42);
    assert!(!probe.points.is_empty());
    let mut worst: f64 = 0.0;
    for sel in LossSelector::ALL {
        let report = gradient_check(&fields, &probe, sel, 8, 7);
        assert!(
            report.max_rel_err < 1e-3,
            "{} gradient mismatch: {}",
            sel.name(),
            report.max_rel_err
        );
        worst = worst.max(report.max_rel_err);
    }
    for (name, clean) in stop_gradient_zeros(&fields, &probe) {
        assert!(clean, "stop-gradient leak: {name}");
    }
    let secs = start.elapsed().as_secs_f64();
    assert!(secs < 120.0, "AC-1 took {secs:.1}s");
    println!("AC-1 PASS gradient suite: max rel err {worst:.2e}, sg paths zero, {secs:.1}s");
}

#[test]
fn ac2_transport_identities() {
    let start = std::time::Instant::now();

    // (i) weight-sum identity over random field draws.
    let fields = probe_fields(10, 9);
    let worst = weight_sum_worst_case(&fields, 1000, 48, 21);
    assert!(worst < 1e-6, "weight-sum identity violated: {worst}");

    // (ii) renderer composite against the oracle at zero bounces on the
    // two-surface scene (same discretization, exact agreement).
    let scene = make_two_surface_scene(EMITTER_STRENGTH);
    let model = OracleModel::new(&scene, 0, 1, 48, 3);
    let mut max_dev: f64 = 0.0;
    for trial in 0..24u64 {
        let origin = Vec3::new(
            -0.6 + 1.2 * sampler::uniform(&[trial, 1]),
            -0.6 + 1.2 * sampler::uniform(&[trial, 2]),
            0.2 + 0.6 * sampler::uniform(&[trial, 3]),
        );
        let travel = sampler::sphere_dir(&[trial, 4]);
        let Some((t0, t1)) = scene.bbox.intersect(origin, travel) else { continue };
        let ray = Ray::from_travel(origin, travel, t0.max(1e-4), t1, true);
        let rr = render_ray(&model, None, &ray, 48, Strata::Midpoint);
        let cfg = PathTraceConfig { bounces: 0, spp: 1, n_march: 48, dirs: 1, jitter: false, seed: 0 };
        let oracle = path_trace_sources(&scene, &ray, &cfg, SourceSet::EmissionOnly);
        // The oracle adds env * t_end; this scene's environment is
        // numerically zero, and EmissionOnly drops it entirely.
        max_dev = max_dev.max((rr.c_hdr - oracle).abs().max_component());
    }
    assert!(max_dev < 1e-5, "renderer vs oracle b=0 deviation {max_dev}");

    // (iii) one-bounce reconstruction vs oracle b=1 within 3 sigma at 4096
    // hemisphere samples: a ceiling point lit by the emissive floor patch.
    let x = Vec3::new(0.05, -0.02, 1.0);
    let wo = Vec3::new(0.1, 0.05, -0.99).normalized();
    let reps = 10;
    let mut lhat_vals = Vec::new();
    let mut oracle_vals = Vec::new();
    for rep in 0..reps {
        let depth0 = OracleModel::new(&scene, 0, 1, 32, 100 + rep);
        let cfg = TransportConfig::new(4096, 32, sampler::mix(&[rep, 0x3a]));
        lhat_vals.push(lhat_e(&depth0, x, wo, LhatEVariant::Full, &cfg).unwrap().x);
        let depth1 = OracleModel { min_weight: 1e-6, ..OracleModel::new(&scene, 1, 4096, 32, 900 + rep) };
        oracle_vals.push(depth1.radiance(RadField::E, x, wo).x);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let var = |v: &[f64], m: f64| v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64;
    let (ma, mb) = (mean(&lhat_vals), mean(&oracle_vals));
    let se = (var(&lhat_vals, ma) / reps as f64 + var(&oracle_vals, mb) / reps as f64).sqrt();
    assert!(
        (ma - mb).abs() < 3.0 * se.max(1e-9),
        "one-bounce mismatch: {ma} vs {mb} (3sigma {})",
        3.0 * se
    );

    let secs = start.elapsed().as_secs_f64();
    assert!(secs < 300.0, "AC-2 took {secs:.1}s");
    println!(
        "AC-2 PASS transport identities: weight-sum dev {worst:.1e}, b=0 dev {max_dev:.1e}, \
         b=1 {ma:.4} vs {mb:.4} (3sigma {:.4}), {secs:.1}s",
        3.0 * se
    );
}

#[test]
fn ac3_lts_fixed_point() {
    let start = std::time::Instant::now();
    let scene = make_box_scene(&BoxSceneParams {
        emitter_strength: EMITTER_STRENGTH,
        ..BoxSceneParams::default()
    });
    // Ground-truth model: radiance from bounded-depth path tracing. The
    // reconstruction applies one more transport step, so the residual is
    // the energy of the next bounce plus Monte Carlo noise.
    let model = OracleModel::new(&scene, 2, 6, 24, 77);

    // Surface points seen from above: floor, walls, and the emitter patch.
    let mut points = Vec::new();
    let mut k = 0u64;
    while points.len() < 6 {
        k += 1;
        let origin = Vec3::new(
            -0.8 + 1.6 * sampler::uniform(&[k, 1]),
            -0.8 + 1.6 * sampler::uniform(&[k, 2]),
            2.0,
        );
        let target = Vec3::new(
            -0.9 + 1.8 * sampler::uniform(&[k, 3]),
            -0.9 + 1.8 * sampler::uniform(&[k, 4]),
            0.2,
        );
        let travel = (target - origin).normalized();
        let Some((t0, t1)) = scene.bbox.intersect(origin, travel) else { continue };
        let ray = Ray::from_travel(origin, travel, t0.max(1e-4), t1, true);
        let m = march(&model, &ray, 64, Strata::Midpoint);
        if m.weight_sum() < 0.9 {
            continue;
        }
        let best = (0..m.n_samples()).max_by(|&a, &b| m.weights[a].total_cmp(&m.weights[b])).unwrap();
        let x = m.position(&ray, best);
        let Ok(n) = model.normal(x) else { continue };
        if n.dot(ray.dir_out) < 0.1 {
            continue;
        }
        points.push((x, ray.dir_out));
    }

    use rayon::prelude::*;
    let parts: Vec<(f64, f64)> = points
        .par_iter()
        .enumerate()
        .map(|(i, &(x, wo))| {
            let cfg = TransportConfig::new(4096, 24, sampler::mix(&[i as u64, 0xac3]));
            let l_s = model.radiance(RadField::S, x, wo);
            let l_e = model.radiance(RadField::E, x, wo);
            let hat_s = lhat_s(&model, x, wo, &cfg).unwrap();
            let hat_e = lhat_e(&model, x, wo, LhatEVariant::Full, &cfg).unwrap();
            let ds = l_s - hat_s;
            let de = l_e - hat_e;
            (ds.dot(ds) + de.dot(de), l_s.dot(l_s) + l_e.dot(l_e))
        })
        .collect();
    let num: f64 = parts.iter().map(|p| p.0).sum();
    let den: f64 = parts.iter().map(|p| p.1).sum();
    let residual = (num / den.max(1e-30)).sqrt();
    let secs = start.elapsed().as_secs_f64();
    assert!(residual < 0.05, "LTS residual {residual:.4} at ground truth");
    assert!(secs < 300.0, "AC-3 took {secs:.1}s");
    println!(
        "AC-3 PASS LTS fixed point: relative residual {residual:.4} over {} points, {secs:.1}s",
        points.len()
    );
}

#[test]
fn ac4_end_to_end_reconstruction_and_ac5_progressive_mechanics() {
    let start = std::time::Instant::now();
    let t = trained_model();
    let report = evaluate(&t.output.fields, &t.dataset, Some(&t.output.groups), 80);

    // AC-4 (i): identification quality.
    assert!(report.iou >= 0.6, "IoU {} below 0.6", report.iou);
    // AC-4 (ii): recovered peak HDR emission within +-30%.
    let rel = (report.peak_emission - EMITTER_STRENGTH).abs() / EMITTER_STRENGTH;
    assert!(rel <= 0.3, "peak emission {} vs {} (rel {rel:.3})", report.peak_emission, EMITTER_STRENGTH);
    // AC-4 (iii): strictly beats the best LDR pixel-thresholding baseline.
    assert!(
        report.iou > report.baseline_ldr_iou,
        "IoU {} does not beat the LDR threshold baseline {}",
        report.iou,
        report.baseline_ldr_iou
    );
    let secs = start.elapsed().as_secs_f64();
    println!(
        "AC-4 PASS end-to-end: IoU {:.3} (baseline {:.3} at thr {:.2}), peak emission {:.2} \
         (target {EMITTER_STRENGTH}), PSNR {:.1} dB, {secs:.0}s",
        report.iou, report.baseline_ldr_iou, report.baseline_ldr_threshold, report.peak_emission,
        report.psnr_ldr
    );

    // AC-5: |uncertain| nonincreasing across every update; final certain
    // rays sit below k_final.
    let mut prev = usize::MAX;
    for rec in &t.output.log {
        assert!(rec.n_uncertain <= prev, "|uncertain| grew at step {}", rec.step);
        prev = rec.n_uncertain;
    }
    let k_final = t.output.groups.current_k;
    let rays = dataset_rays(&t.dataset);
    let mut max_certain = 0.0f64;
    for id in t.output.groups.certain_ids() {
        let s = ray_emission_strength(&t.output.fields, &rays[id].ray, 80);
        max_certain = max_certain.max(s);
    }
    assert!(
        max_certain < k_final,
        "a certain ray has emission strength {max_certain} >= k_final {k_final}"
    );
    println!(
        "AC-5 PASS progressive mechanics: |U| nonincreasing, max certain strength {:.2e} < k_final {:.1e}",
        max_certain, k_final
    );
}

#[test]
fn ac6_edit_correctness() {
    let t = trained_model();
    let start = std::time::Instant::now();
    let fields = &t.output.fields;
    let groups = &t.output.groups;
    let rays = dataset_rays(&t.dataset);

    // Build an edit spec from the first lights-on frame's GT mask.
    let (fi, frame) = t
        .dataset
        .frames
        .iter()
        .enumerate()
        .find(|(_, f)| f.on && f.gt_mask.as_ref().is_some_and(|m| m.iter().filter(|&&b| b).count() > 8))
        .expect("a lights-on frame seeing the emitter");
    let gt_mask = frame.gt_mask.as_ref().unwrap();
    let spec_off = EditSpec {
        camera: EditCamera::from_camera(&frame.camera),
        sources: vec![EditSource {
            mask: gt_mask.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
            hue: 0.0,
            saturation: 1.0,
            intensity: 0.0,
        }],
    };
    let hits = match_rays(fields, groups, &rays, &spec_off, 80);
    let n_hits: usize = hits.iter().map(|h| h.len()).sum();
    assert!(n_hits > 0, "edit matched no uncertain rays (frame {fi})");
    // Hit sets are subsets of the uncertain group.
    for h in &hits {
        for &(id, _) in h {
            assert!(!groups.is_certain(id), "hit ray {id} is certain");
        }
    }
    let edit_off = EmissionEdit::build(fields, &spec_off, &hits);
    assert!(edit_off.n_stamped_voxels() > 0);

    // (iii) Emission outside all hit stamps is bit-identical.
    let mut outside_checked = 0;
    let mut k = 0u64;
    let model_off = EditedModel { fields, edit: &edit_off };
    while outside_checked < 500 {
        k += 1;
        let x = Vec3::new(
            -1.2 + 2.4 * sampler::uniform(&[k, 1, 0xa6]),
            -1.2 + 2.4 * sampler::uniform(&[k, 2, 0xa6]),
            -0.2 + 1.4 * sampler::uniform(&[k, 3, 0xa6]),
        );
        if edit_off.source_at(x).is_some() {
            continue;
        }
        let a = fields.emission_at(x);
        let b = model_off.emission(x);
        assert!(a.x.to_bits() == b.x.to_bits() && a.y.to_bits() == b.y.to_bits() && a.z.to_bits() == b.z.to_bits());
        outside_checked += 1;
    }

    // (i) Switching every source off and fine-tuning drives the composited
    // emission-reflection buffer to the softplus floor.
    let mut tuned = fields.clone();
    let ft = FinetuneConfig {
        steps: 160,
        points_per_step: 20,
        hemi_samples: 6,
        secondary_samples: 20,
        n_primary_samples: 48,
        lr: 2e-3,
        seed: 3,
    };
    let out = finetune_radiance(&mut tuned, &edit_off, &rays, &ft).expect("fine-tune");
    let floor = softplus(tuned.cfg.rad_out_bias);
    let model = EditedModel { fields: &tuned, edit: &edit_off };
    // Composited emission-reflection over a probe view: reuse the direct
    // relight buffers, which composite the one-bounce reflection of the
    // edited emission.
    let mut max_buffer = 0.0f64;
    for py in (0..t.dataset.height).step_by(8) {
        for px in (0..t.dataset.width).step_by(8) {
            let ray = frame.camera.pixel_ray(px, py, &t.dataset.bbox, true);
            let tcfg = TransportConfig::new(16, 24, sampler::mix(&[px as u64, py as u64, 0xac6]));
            let dr = direct_relight(&tuned, &edit_off, &ray, 48, &tcfg);
            max_buffer = max_buffer.max(dr.emission_reflection.max_component());
            // The fine-tuned emission radiance itself must sit near the
            // floor when composited.
            let m = march(&model, &ray, 48, Strata::Midpoint);
            let mut le = Vec3::ZERO;
            for i in 0..m.n_samples() {
                if m.weights[i] > 1e-4 {
                    le += model.radiance(RadField::E, m.position(&ray, i), ray.dir_out) * m.weights[i];
                }
            }
            max_buffer = max_buffer.max(le.max_component());
        }
    }
    assert!(
        max_buffer < 5.0 * floor,
        "emission-reflection after switch-off edit: {max_buffer} vs floor {floor}"
    );

    // Comparative run: an identity edit barely moves the field.
    let spec_same = EditSpec {
        camera: spec_off.camera.clone(),
        sources: vec![EditSource {
            mask: spec_off.sources[0].mask.clone(),
            hue: 0.0,
            saturation: 0.0,
            intensity: 1.0,
        }],
    };
    let hits_same = match_rays(fields, groups, &rays, &spec_same, 80);
    let edit_same = EmissionEdit::build(fields, &spec_same, &hits_same);
    let mut tuned_same = fields.clone();
    let out_same = finetune_radiance(&mut tuned_same, &edit_same, &rays, &ft).expect("fine-tune");
    assert!(
        out_same.param_delta < 0.2 * out.param_delta,
        "identity edit moved the field as much as a real edit: {} vs {}",
        out_same.param_delta,
        out.param_delta
    );

    // (ii) Direct relight linearity: doubling every intensity doubles the
    // emission-reflection buffer exactly.
    let spec_i1 = EditSpec {
        camera: spec_off.camera.clone(),
        sources: vec![EditSource {
            mask: spec_off.sources[0].mask.clone(),
            hue: 0.1,
            saturation: 0.8,
            intensity: 1.0,
        }],
    };
    let spec_i2 = EditSpec {
        camera: spec_off.camera.clone(),
        sources: vec![EditSource { intensity: 2.0, ..spec_i1.sources[0].clone() }],
    };
    let hits_i = match_rays(fields, groups, &rays, &spec_i1, 80);
    let edit_i1 = EmissionEdit::build(fields, &spec_i1, &hits_i);
    let edit_i2 = EmissionEdit::build(fields, &spec_i2, &hits_i);
    let mut max_rel_dev = 0.0f64;
    for probe in 0..40u64 {
        let px = (sampler::uniform(&[probe, 1, 0x2b]) * t.dataset.width as f64) as usize;
        let py = (sampler::uniform(&[probe, 2, 0x2b]) * t.dataset.height as f64) as usize;
        let ray = frame.camera.pixel_ray(px.min(63), py.min(63), &t.dataset.bbox, true);
        let tcfg = TransportConfig::new(8, 16, sampler::mix(&[probe, 0x2b]));
        let a = direct_relight(fields, &edit_i1, &ray, 48, &tcfg).emission_reflection;
        let b = direct_relight(fields, &edit_i2, &ray, 48, &tcfg).emission_reflection;
        let dev = (b - a * 2.0).abs().max_component();
        let scale = b.abs().max_component().max(1e-12);
        max_rel_dev = max_rel_dev.max(dev / scale);
    }
    assert!(max_rel_dev < 1e-6, "direct relight not linear: rel dev {max_rel_dev}");

    let secs = start.elapsed().as_secs_f64();
    assert!(secs < 600.0, "AC-6 took {secs:.1}s");
    println!(
        "AC-6 PASS edits: {n_hits} hit rays, switch-off buffer {max_buffer:.4} < {:.4}, \
         identity-edit delta {:.3} vs real {:.3}, doubling dev {max_rel_dev:.1e}, {secs:.0}s",
        5.0 * floor,
        out_same.param_delta,
        out.param_delta
    );
}

#[test]
fn ac7_deterministic_replay() {
    let dir = tempfile::tempdir().unwrap();
    let scene = make_box_scene(&BoxSceneParams::default());
    let synth = SynthConfig { spp: 8, bounces: 1, n_march: 32, ..SynthConfig::default() };
    synthesize_dataset(&scene, 2, 16, dir.path(), &synth).unwrap();
    let dataset = load_dataset(dir.path()).unwrap();
    let cfg = TrainConfig {
        field: FieldConfig { grid_res: [16, 16, 16], env_lobes: 4, ..FieldConfig::default() },
        n_primary_samples: 32,
        n_secondary_samples: 12,
        batch_rays: 24,
        lts_points: 4,
        lts_hemi_samples: 4,
        phase1_steps: 60,
        phase2_steps: 20,
        phase3_steps: 20,
        group_update_interval: 10,
        checkpoint_interval: 100,
        log_every: 1000,
        seed: 9,
        workers: 1,
        ..TrainConfig::default()
    };
    let out_a = dir.path().join("run_a");
    let out_b = dir.path().join("run_b");
    train(&dataset, &cfg, Some(&out_a), |_| {}).unwrap();
    train(&dataset, &cfg, Some(&out_b), |_| {}).unwrap();
    let a = std::fs::read(out_a.join("checkpoint_000100.bin")).unwrap();
    let b = std::fs::read(out_b.join("checkpoint_000100.bin")).unwrap();
    assert_eq!(a, b, "checkpoints at step 100 differ between identical runs");
    // And the payload actually parses back to identical parameters.
    let ck = load_checkpoint(&out_a.join("checkpoint_000100.bin")).unwrap();
    assert_eq!(ck.step, 100);
    println!("AC-7 PASS deterministic replay: bitwise-identical checkpoints at step 100 ({} bytes)", a.len());
}

#[test]
fn ac8_color_and_hdr_exactness() {
    // Gamma branch-point continuity.
    let c: f64 = 0.0031308;
    let linear_side = 12.92 * c;
    let gamma_side = 1.055 * c.powf(1.0 / 2.4) - 0.055;
    assert!((linear_side - gamma_side).abs() < 2e-4);

    // sRGB round trip within 1e-6.
    let mut worst_srgb: f64 = 0.0;
    for i in 0..10_000u64 {
        let x = sampler::uniform(&[i, 0x8a]);
        let srgb = linear_to_srgb(LinearRGB(Vec3::splat(x)));
        let back = srgb_to_linear(SrgbRGB(srgb.0));
        worst_srgb = worst_srgb.max((back.0.x - x).abs());
    }
    assert!(worst_srgb < 1e-6);

    // HSV round trip within 1e-6 for distinct channels and V > 0.
    let mut worst_hsv: f64 = 0.0;
    let mut tested = 0;
    let mut i = 0u64;
    while tested < 10_000 {
        i += 1;
        let c = Vec3::new(
            0.01 + 3.0 * sampler::uniform(&[i, 1, 0x85]),
            0.01 + 3.0 * sampler::uniform(&[i, 2, 0x85]),
            0.01 + 3.0 * sampler::uniform(&[i, 3, 0x85]),
        );
        if (c.x - c.y).abs() < 1e-3 || (c.y - c.z).abs() < 1e-3 || (c.x - c.z).abs() < 1e-3 {
            continue;
        }
        let hsv = rgb_to_hsv(LinearRGB(c));
        let back = hsv_to_rgb(HsvColor { h: hsv.h, s: hsv.s, v: hsv.v });
        worst_hsv = worst_hsv.max((back.0 - c).abs().max_component());
        tested += 1;
    }
    assert!(worst_hsv < 1e-6);

    // PFM round trip bit-exact.
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("probe.pfm");
    let pixels: Vec<Vec3> = (0..64u64)
        .map(|i| {
            Vec3::new(
                sampler::uniform(&[i, 1, 0x9f]) * 200.0,
                sampler::uniform(&[i, 2, 0x9f]),
                sampler::uniform(&[i, 3, 0x9f]) * 5.0,
            )
            .map(|v| v as f32 as f64)
        })
        .collect();
    write_pfm(&path, 8, 8, &pixels).unwrap();
    let (_, _, back) = read_pfm(&path).unwrap();
    for (a, b) in pixels.iter().zip(back.iter()) {
        assert_eq!((a.x as f32).to_bits(), (b.x as f32).to_bits());
        assert_eq!((a.y as f32).to_bits(), (b.y as f32).to_bits());
        assert_eq!((a.z as f32).to_bits(), (b.z as f32).to_bits());
    }
    let tau_ok = (tone_curve_scalar(0.5) - 0.735357).abs() < 1e-6;
    assert!(tau_ok);
    println!(
        "AC-8 PASS color/HDR exactness: branch gap {:.1e}, sRGB {worst_srgb:.1e}, HSV {worst_hsv:.1e}, PFM bit-exact",
        (linear_side - gamma_side).abs()
    );
}

//! Gradient verification harness: compares the analytic gradient of each
//! loss against central finite differences on randomly chosen parameters
//! per class, with hemisphere directions and march strata held fixed so
//! both sides differentiate the same function.

use serde::Serialize;

use crate::fields::store::{GradientStore, ParamClass};
use crate::fields::FieldSet;
use crate::math::{rel_err, Vec3};
use crate::renderer::transport::{
    hemisphere_dirs, lhat_e_record_with_dirs, LhatEVariant, TransportConfig,
};
use crate::renderer::Ray;
use crate::sampler::{self, Stream};

use super::losses::{
    eikonal_loss, lts_loss_e, lts_loss_s, rendering_loss, smoothing_loss, suppression_loss,
    LtsEMode, LtsPoint, TrainRay,
};

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum LossSelector {
    Rendering,
    LtsS,
    LtsEBasic,
    LtsECertain,
    LtsEUncertain,
    Suppression,
    Smoothing,
    Eikonal,
}

impl LossSelector {
    pub const ALL: [LossSelector; 8] = [
        LossSelector::Rendering,
        LossSelector::LtsS,
        LossSelector::LtsEBasic,
        LossSelector::LtsECertain,
        LossSelector::LtsEUncertain,
        LossSelector::Suppression,
        LossSelector::Smoothing,
        LossSelector::Eikonal,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            LossSelector::Rendering => "rendering",
            LossSelector::LtsS => "lts_s",
            LossSelector::LtsEBasic => "lts_e_basic",
            LossSelector::LtsECertain => "lts_e_certain",
            LossSelector::LtsEUncertain => "lts_e_uncertain",
            LossSelector::Suppression => "suppression",
            LossSelector::Smoothing => "smoothing",
            LossSelector::Eikonal => "eikonal",
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ClassReport {
    pub class: String,
    pub checked: usize,
    pub max_rel_err: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    pub loss: String,
    pub classes: Vec<ClassReport>,
    pub max_rel_err: f64,
}

/// The fixed probe problem: a handful of rays over the current fields plus
/// LTS points with frozen hemisphere directions.
///
/// The progressive LTS-E variants contain stop-gradients, so their finite
/// differences run against a surrogate whose sg operands are frozen at the
/// base point (the analytic gradient of the surrogate at the base point is
/// exactly the gradient the stop-gradient loss defines).
pub struct Probe {
    pub rays: Vec<TrainRay>,
    pub points: Vec<LtsPoint>,
    pub tcfg: TransportConfig,
    pub key: u64,
    pub n_primary: usize,
    /// Frozen per-point operands at the base fields:
    /// (L_E, Lhat certain, Lhat uncertain, integral of the uncertain record).
    frozen: Vec<(Vec3, Vec3, Vec3, Vec3)>,
}

impl Probe {
    /// Build a probe from rays cast at the fields' bbox. Points pick the
    /// dominant crossing of each ray; hemisphere directions are captured
    /// once from the unperturbed fields.
    pub fn build(fields: &FieldSet, n_rays: usize, n_samples: usize, hemi: usize, seed: u64) -> Probe {
        let bbox = fields.cfg.bbox;
        let center = bbox.center();
        let mut rng = Stream::new(&[seed, 0x9e0b]);
        let mut rays = Vec::new();
        while rays.len() < n_rays {
            let dir = sampler::sphere_dir(&[seed, rng.next_u64()]);
            let eye = center - dir * bbox.extent().norm();
            let jitter = Vec3::new(
                rng.next_range(-0.2, 0.2),
                rng.next_range(-0.2, 0.2),
                rng.next_range(-0.2, 0.2),
            );
            let travel = ((center + jitter) - eye).normalized();
            let Some((t0, t1)) = bbox.intersect(eye, travel) else { continue };
            let on = rays.len() % 2 == 0;
            rays.push(TrainRay {
                id: rays.len(),
                ray: Ray::from_travel(eye, travel, t0.max(1e-3), t1, on),
                target: Vec3::new(rng.next_f64(), rng.next_f64(), rng.next_f64()),
                alpha: None,
            });
        }

        let key = sampler::mix(&[seed, 0x9c]);
        let tcfg = TransportConfig::new(hemi, n_samples.min(24), key);
        let mut points = Vec::new();
        for tr in &rays {
            let m = crate::renderer::march(fields, &tr.ray, n_samples, crate::renderer::Strata::Midpoint);
            if m.weight_sum() < 0.3 {
                continue;
            }
            let best = (0..m.n_samples())
                .max_by(|&a, &b| m.weights[a].total_cmp(&m.weights[b]))
                .unwrap();
            let x = m.position(&tr.ray, best);
            let Ok(n) = fields.sdf_normal(x) else { continue };
            if n.dot(tr.ray.dir_out) <= 0.05 {
                continue;
            }
            let dirs = hemisphere_dirs(n, hemi, sampler::mix(&[key, points.len() as u64]));
            points.push(LtsPoint {
                ray_id: tr.id,
                x,
                wo: tr.ray.dir_out,
                certain: points.len() % 2 == 1,
                dirs: Some(dirs),
            });
        }
        let mut probe = Probe { rays, points, tcfg, key, n_primary: n_samples, frozen: Vec::new() };
        probe.frozen = probe
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let dirs = p.dirs.as_ref().unwrap();
                let pcfg = TransportConfig { key: sampler::mix(&[probe.tcfg.key, i as u64, 0x17_5]), ..probe.tcfg };
                let l0 = fields.radiance(crate::fields::RadField::E, p.x, p.wo);
                let cert = lhat_e_record_with_dirs(fields, p.x, p.wo, LhatEVariant::Certain, dirs, &pcfg)
                    .map(|r| r.value)
                    .unwrap_or(Vec3::ZERO);
                let unc = lhat_e_record_with_dirs(fields, p.x, p.wo, LhatEVariant::Uncertain, dirs, &pcfg);
                let (unc_value, unc_integral) = unc
                    .map(|r| (r.value, r.integral))
                    .unwrap_or((Vec3::ZERO, Vec3::ZERO));
                (l0, cert, unc_value, unc_integral)
            })
            .collect();
        probe
    }

    fn l1(v: Vec3) -> f64 {
        v.abs().x + v.abs().y + v.abs().z
    }

    /// Surrogate value of the progressive LTS-E loss with the sg operands
    /// frozen at the base point. lambda_l = 1.0, lambda_r = 0.3 as in eval.
    fn lts_e_frozen_surrogate(&self, fields: &FieldSet, certain: bool) -> f64 {
        let (lambda_l, lambda_r) = (1.0, 0.3);
        let mut loss = 0.0;
        for (i, p) in self.points.iter().enumerate() {
            let dirs = p.dirs.as_ref().unwrap();
            let pcfg = TransportConfig { key: sampler::mix(&[self.tcfg.key, i as u64, 0x17_5]), ..self.tcfg };
            let (l0, cert0, unc0, int0) = self.frozen[i];
            let l_now = fields.radiance(crate::fields::RadField::E, p.x, p.wo);
            if certain {
                let Ok(rec) =
                    lhat_e_record_with_dirs(fields, p.x, p.wo, LhatEVariant::Certain, dirs, &pcfg)
                else {
                    continue;
                };
                loss += lambda_l * Self::l1(l0 - rec.value) + lambda_r * Self::l1(l_now - cert0);
            } else {
                // Uncertain variant: Lhat = E(theta) + sg(integral).
                let lhat_now = fields.emission_at(p.x) + int0;
                loss += lambda_l * Self::l1(l0 - lhat_now) + lambda_r * Self::l1(l_now - unc0);
            }
        }
        loss
    }

    /// Evaluate the selected loss and (optionally) its analytic gradient.
    /// Without a gradient sink the stop-gradient variants evaluate their
    /// frozen-operand surrogate (the function finite differences must see).
    pub fn eval(&self, fields: &FieldSet, sel: LossSelector, grad: Option<&mut GradientStore>) -> f64 {
        let analytic = grad.is_some();
        let mut sink = fields.grad_store();
        let g = match grad {
            Some(g) => g,
            None => &mut sink,
        };
        match sel {
            LossSelector::Rendering => {
                rendering_loss(fields, &self.rays, 0.1, 0.1, self.n_primary, self.key, g).0
            }
            LossSelector::LtsS => lts_loss_s(fields, &self.points, &self.tcfg, 1.0, g),
            LossSelector::LtsEBasic => {
                lts_loss_e(fields, &self.points, &self.tcfg, LtsEMode::Basic, 1.0, g)
            }
            LossSelector::LtsECertain | LossSelector::LtsEUncertain => {
                let certain = sel == LossSelector::LtsECertain;
                if analytic {
                    let pts: Vec<LtsPoint> =
                        self.points.iter().map(|p| LtsPoint { certain, ..p.clone() }).collect();
                    lts_loss_e(
                        fields,
                        &pts,
                        &self.tcfg,
                        LtsEMode::Progressive { lambda_l: 1.0, lambda_r: 0.3 },
                        1.0,
                        g,
                    )
                } else {
                    self.lts_e_frozen_surrogate(fields, certain)
                }
            }
            LossSelector::Suppression => {
                suppression_loss(fields, &self.rays, self.n_primary, self.key, 1.0, g)
            }
            LossSelector::Smoothing => {
                let pts: Vec<Vec3> = self.points.iter().map(|p| p.x).collect();
                smoothing_loss(fields, &pts, self.key, 1.0, g)
            }
            LossSelector::Eikonal => {
                let pts: Vec<Vec3> = self.points.iter().map(|p| p.x).collect();
                eikonal_loss(fields, &pts, 1.0, g)
            }
        }
    }
}

/// Compare analytic gradients against central finite differences on up to
/// `n_per_class` informative parameters per class.
pub fn gradient_check(
    fields: &FieldSet,
    probe: &Probe,
    sel: LossSelector,
    n_per_class: usize,
    seed: u64,
) -> GradCheckReport {
    let mut grad = fields.grad_store();
    probe.eval(fields, sel, Some(&mut grad));

    let mut fs2 = fields.clone();
    let mut classes = Vec::new();
    let mut overall: f64 = 0.0;
    for class in ParamClass::ALL {
        let range = fields.layout.range(class);
        let informative: Vec<usize> =
            range.clone().filter(|&i| grad.values[i].abs() > 1e-7).collect();
        let mut rng = Stream::new(&[seed, range.start as u64, 0x6c]);
        let mut checked = 0;
        let mut max_err: f64 = 0.0;
        let mut tries = 0;
        while checked < n_per_class && tries < 4 * n_per_class && !informative.is_empty() {
            tries += 1;
            let i = informative[rng.next_usize(informative.len())];
            let a = grad.values[i];
            let h = 1e-5 * fields.params[i].abs().max(1.0);
            fs2.params[i] = fields.params[i] + h;
            let fp = probe.eval(&fs2, sel, None);
            fs2.params[i] = fields.params[i] - h;
            let fm = probe.eval(&fs2, sel, None);
            fs2.params[i] = fields.params[i];
            let mut fd = (fp - fm) / (2.0 * h);
            if class == ParamClass::EnvMap {
                // Stored xi gradients are tangent-projected; project the FD
                // vector the same way before comparing.
                let off = (i - range.start) % crate::envmap::LOBE_STRIDE;
                if off >= 4 {
                    let base = i - (off - 4);
                    let xi = Vec3::new(
                        fields.params[base],
                        fields.params[base + 1],
                        fields.params[base + 2],
                    );
                    let mut fdv = Vec3::ZERO;
                    for k in 0..3 {
                        let idx = base + k;
                        let hh = 1e-5;
                        fs2.params[idx] = fields.params[idx] + hh;
                        let fpp = probe.eval(&fs2, sel, None);
                        fs2.params[idx] = fields.params[idx] - hh;
                        let fmm = probe.eval(&fs2, sel, None);
                        fs2.params[idx] = fields.params[idx];
                        let v = (fpp - fmm) / (2.0 * hh);
                        match k {
                            0 => fdv.x = v,
                            1 => fdv.y = v,
                            _ => fdv.z = v,
                        }
                    }
                    let t = fdv - xi * fdv.dot(xi);
                    fd = t.component(i - base);
                }
            }
            let denom = a.abs().max(fd.abs());
            if denom < 1e-7 {
                continue;
            }
            max_err = max_err.max(rel_err(a, fd));
            checked += 1;
        }
        overall = overall.max(max_err);
        classes.push(ClassReport { class: class.name().to_string(), checked, max_rel_err: max_err });
    }
    GradCheckReport { loss: sel.name().to_string(), classes, max_rel_err: overall }
}

/// Check the stop-gradient contracts: classes behind a stop-gradient
/// receive exactly zero gradient from the respective loss.
pub fn stop_gradient_zeros(fields: &FieldSet, probe: &Probe) -> Vec<(String, bool)> {
    let mut results = Vec::new();

    // Uncertain-variant LTS-E with lambda_r = 0: only emission may move.
    let mut g = fields.grad_store();
    let pts: Vec<LtsPoint> =
        probe.points.iter().map(|p| LtsPoint { certain: false, ..p.clone() }).collect();
    lts_loss_e(
        fields,
        &pts,
        &probe.tcfg,
        LtsEMode::Progressive { lambda_l: 1.0, lambda_r: 0.0 },
        1.0,
        &mut g,
    );
    for class in ParamClass::ALL {
        if class == ParamClass::EmissionGrid {
            continue;
        }
        let clean = g.slice(&fields.layout, class).iter().all(|&v| v == 0.0);
        results.push((format!("lts_e_uncertain/{}", class.name()), clean));
    }

    // Suppression never touches the BRDF, radiance, env, or tone-mapper.
    let mut g = fields.grad_store();
    suppression_loss(fields, &probe.rays, probe.n_primary, probe.key, 1.0, &mut g);
    for class in [
        ParamClass::BrdfGrid,
        ParamClass::RadianceSGrid,
        ParamClass::RadianceSHead,
        ParamClass::RadianceEGrid,
        ParamClass::RadianceEHead,
        ParamClass::EnvMap,
        ParamClass::ToneMap,
    ] {
        let clean = g.slice(&fields.layout, class).iter().all(|&v| v == 0.0);
        results.push((format!("suppression/{}", class.name()), clean));
    }
    results
}

/// A fields instance with generic-position geometry and emission, used by
/// the gradcheck CLI and the acceptance suite.
pub fn probe_fields(grid_res: usize, seed: u64) -> FieldSet {
    use crate::fields::FieldConfig;
    let mut fs = FieldSet::new(FieldConfig {
        grid_res: [grid_res, grid_res, grid_res],
        env_lobes: 3,
        init_seed: seed,
        ..FieldConfig::default()
    })
    .unwrap();
    let dims = fs.cfg.sdf_dims();
    let bbox = fs.cfg.bbox;
    let r = fs.layout.range(ParamClass::SdfGrid);
    let sdf = &mut fs.params[r];
    for ix in 0..dims.nx {
        for iy in 0..dims.ny {
            for iz in 0..dims.nz {
                let p = dims.voxel_center(&bbox, ix, iy, iz);
                sdf[dims.voxel_base(ix, iy, iz)] =
                    p.z + 0.05 - 0.3 * (1.9 * p.x + 0.3).sin() * (1.4 * p.y - 0.6).cos();
            }
        }
    }
    let r = fs.layout.range(ParamClass::EmissionGrid);
    let mut k = 0u64;
    for v in &mut fs.params[r] {
        *v = -2.0 + 1.5 * sampler::uniform(&[seed, k, 0xe31]);
        k += 1;
    }
    fs
}

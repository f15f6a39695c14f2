//! Moment-based adaptive gradient descent over the flat parameter vector,
//! with per-class learning rates and the post-step projections that keep
//! constrained parameters valid (unit SG axes, positive sharpness and lobe
//! sharpness).

use serde::{Deserialize, Serialize};

use crate::envmap::LOBE_STRIDE;
use crate::fields::store::{GradientStore, Layout, ParamClass};
use crate::fields::FieldSet;
use crate::math::Vec3;

#[derive(Copy, Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub lr_grids: f64,
    pub lr_heads: f64,
    /// The emission grid crosses many orders of magnitude (softplus floor to
    /// HDR peaks), so it gets its own rate.
    pub lr_emission: f64,
    /// Rate of the (log) SDF sharpness; it must track the carving so
    /// surfaces crispen within a run.
    pub lr_sharpness: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for OptimizerConfig {
    fn default() -> OptimizerConfig {
        OptimizerConfig {
            lr_grids: 1e-2,
            lr_heads: 1e-3,
            lr_emission: 1e-2,
            lr_sharpness: 5e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl OptimizerConfig {
    pub fn lr_for(&self, class: ParamClass) -> f64 {
        if class == ParamClass::Sharpness {
            self.lr_sharpness
        } else if class == ParamClass::EmissionGrid {
            self.lr_emission
        } else if class.is_grid() {
            self.lr_grids
        } else {
            self.lr_heads
        }
    }
}

#[derive(Clone, Debug)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    pub cfg: OptimizerConfig,
}

impl Adam {
    pub fn new(layout: &Layout, cfg: OptimizerConfig) -> Adam {
        Adam { m: vec![0.0; layout.total()], v: vec![0.0; layout.total()], t: 0, cfg }
    }

    pub fn step(&mut self, layout: &Layout, params: &mut [f64], grads: &GradientStore) {
        self.t += 1;
        let b1 = self.cfg.beta1;
        let b2 = self.cfg.beta2;
        let bc1 = 1.0 - b1.powi(self.t as i32);
        let bc2 = 1.0 - b2.powi(self.t as i32);
        for (class, range) in layout.classes() {
            let lr = self.cfg.lr_for(class);
            for i in range {
                let g = grads.values[i];
                self.m[i] = b1 * self.m[i] + (1.0 - b1) * g;
                self.v[i] = b2 * self.v[i] + (1.0 - b2) * g * g;
                let mhat = self.m[i] / bc1;
                let vhat = self.v[i] / bc2;
                params[i] -= lr * mhat / (vhat.sqrt() + self.cfg.eps);
            }
        }
    }

    /// Serialize moments for bitwise-reproducible checkpoints.
    pub fn state(&self) -> (&[f64], &[f64], u64) {
        (&self.m, &self.v, self.t)
    }

    pub fn restore(&mut self, m: Vec<f64>, v: Vec<f64>, t: u64) {
        self.m = m;
        self.v = v;
        self.t = t;
    }
}

/// Keep constrained parameters valid after a step: renormalize SG axes,
/// floor lobe sharpness, floor the SDF sharpness.
pub fn project_constraints(fields: &mut FieldSet) {
    let r = fields.layout.range(ParamClass::EnvMap);
    let env = &mut fields.params[r];
    for lobe in env.chunks_exact_mut(LOBE_STRIDE) {
        lobe[3] = lobe[3].max(1e-4);
        let xi = Vec3::new(lobe[4], lobe[5], lobe[6]);
        let n = xi.norm();
        if n > 1e-12 {
            lobe[4] /= n;
            lobe[5] /= n;
            lobe[6] /= n;
        } else {
            lobe[4] = 0.0;
            lobe[5] = 0.0;
            lobe[6] = 1.0;
        }
    }
    let s = fields.layout.range(ParamClass::Sharpness).start;
    // log-sharpness: training starts soft (everything translucent so
    // gradients reach all depths) and sharpens upward; the floor only
    // guards against collapse to fully transparent.
    fields.params[s] = fields.params[s].clamp((2.0f64).ln(), (1e4f64).ln());
}

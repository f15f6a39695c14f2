//! Scene abstraction consumed by the renderer. The learnable `FieldSet` and
//! the analytic oracle both implement it, so transport identities can be
//! checked with the exact same marching and shading code on either side.

use crate::brdf::BrdfParams;
use crate::error::Result;
use crate::fields::{FieldSet, RadField};
use crate::math::{Aabb, Vec3};

pub trait SceneModel: Sync {
    fn bbox(&self) -> Aabb;
    fn sharpness(&self) -> f64;
    fn sdf(&self, x: Vec3) -> f64;
    fn normal(&self, x: Vec3) -> Result<Vec3>;
    fn brdf(&self, x: Vec3) -> BrdfParams;
    /// Emission E(x), nonnegative per channel.
    fn emission(&self, x: Vec3) -> Vec3;
    /// Environment radiance arriving from direction `dir`.
    fn env(&self, dir: Vec3) -> Vec3;
    /// Outgoing radiance of the selected field at `x` in direction `w`.
    fn radiance(&self, which: RadField, x: Vec3, w: Vec3) -> Vec3;
}

impl SceneModel for FieldSet {
    fn bbox(&self) -> Aabb {
        self.cfg.bbox
    }

    fn sharpness(&self) -> f64 {
        FieldSet::sharpness(self)
    }

    fn sdf(&self, x: Vec3) -> f64 {
        self.sdf_value(x)
    }

    fn normal(&self, x: Vec3) -> Result<Vec3> {
        self.sdf_normal(x)
    }

    fn brdf(&self, x: Vec3) -> BrdfParams {
        self.brdf_at(x)
    }

    fn emission(&self, x: Vec3) -> Vec3 {
        self.emission_at(x)
    }

    fn env(&self, dir: Vec3) -> Vec3 {
        self.env_eval(dir)
    }

    fn radiance(&self, which: RadField, x: Vec3, w: Vec3) -> Vec3 {
        FieldSet::radiance(self, which, x, w)
    }
}

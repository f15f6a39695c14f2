//! Learnable scene representations: SDF / BRDF / emission voxel grids, the
//! two directional radiance fields, the SG environment map, and the
//! learnable tone-mapper, all backed by one flat parameter vector.

pub mod grid;
pub mod mlp;
pub mod sh;
pub mod store;

use serde::{Deserialize, Serialize};

use crate::brdf::BrdfParams;
use crate::envmap;
use crate::error::{Error, Result};
use crate::math::{
    sigmoid, sigmoid_deriv, softplus, softplus_deriv, softplus_inverse, Aabb, Vec3,
};
use crate::sampler::Stream;

use grid::GridDims;
use mlp::MlpDims;
use sh::{sh_basis, SH_DIM};
use store::{GradientStore, Layout, ParamClass};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct FieldConfig {
    pub bbox: Aabb,
    pub grid_res: [usize; 3],
    /// Feature channels of each radiance field's spatial grid.
    pub rad_features: usize,
    pub rad_hidden: usize,
    /// Octaves of the tone-mapper positional encoding.
    pub tm_frequencies: usize,
    pub tm_hidden: usize,
    pub env_lobes: usize,
    /// Scale on the spherical-harmonic direction encoding of the radiance
    /// heads. The trainer anneals this from 0 to 1 during warmup: a
    /// direction-blind radiance field cannot paint view-dependent colors
    /// onto wrong geometry, which forces actual carving.
    pub sh_scale: f64,
    pub init_sharpness: f64,
    /// Initial emission after softplus. Starts below the progressive
    /// threshold floor so uncertainty has to be earned by transport
    /// evidence rather than granted by initialization.
    pub init_emission: f64,
    /// Output bias of the radiance heads; softplus(-6) ~ 0.0025 keeps empty
    /// space near dark at start.
    pub rad_out_bias: f64,
    pub init_seed: u64,
}

impl Default for FieldConfig {
    fn default() -> FieldConfig {
        FieldConfig {
            bbox: Aabb::new(Vec3::splat(-1.0), Vec3::splat(1.0)),
            grid_res: [64, 64, 64],
            rad_features: 12,
            rad_hidden: 64,
            tm_frequencies: 4,
            tm_hidden: 32,
            env_lobes: 48,
            sh_scale: 1.0,
            init_sharpness: 4.0,
            init_emission: 5e-6,
            rad_out_bias: -6.0,
            init_seed: 0,
        }
    }
}

impl FieldConfig {
    pub fn validate(&self) -> Result<()> {
        let e = self.bbox.extent();
        if e.min_component() <= 0.0 {
            return Err(Error::Config("bbox min must be strictly below max".into()));
        }
        if self.grid_res.iter().any(|&n| n < 2) {
            return Err(Error::Config("grid resolution must be at least 2 per axis".into()));
        }
        if self.init_sharpness <= 0.0 {
            return Err(Error::Config("initial sharpness must be positive".into()));
        }
        Ok(())
    }

    pub fn sdf_dims(&self) -> GridDims {
        GridDims::new(self.grid_res, 1)
    }

    pub fn brdf_dims(&self) -> GridDims {
        GridDims::new(self.grid_res, 5)
    }

    pub fn emission_dims(&self) -> GridDims {
        GridDims::new(self.grid_res, 3)
    }

    pub fn rad_dims(&self) -> GridDims {
        GridDims::new(self.grid_res, self.rad_features)
    }

    pub fn rad_mlp(&self) -> MlpDims {
        MlpDims { input: self.rad_features + SH_DIM, hidden: self.rad_hidden, output: 3 }
    }

    pub fn tm_input_dim(&self) -> usize {
        3 + 6 * self.tm_frequencies
    }

    pub fn tm_mlp(&self) -> MlpDims {
        MlpDims { input: self.tm_input_dim(), hidden: self.tm_hidden, output: 3 }
    }

    pub fn layout(&self) -> Layout {
        Layout::build(&[
            (ParamClass::SdfGrid, self.sdf_dims().n_values()),
            (ParamClass::Sharpness, 1),
            (ParamClass::BrdfGrid, self.brdf_dims().n_values()),
            (ParamClass::EmissionGrid, self.emission_dims().n_values()),
            (ParamClass::RadianceSGrid, self.rad_dims().n_values()),
            (ParamClass::RadianceSHead, self.rad_mlp().n_params()),
            (ParamClass::RadianceEGrid, self.rad_dims().n_values()),
            (ParamClass::RadianceEHead, self.rad_mlp().n_params()),
            (ParamClass::EnvMap, self.env_lobes * envmap::LOBE_STRIDE),
            (ParamClass::ToneMap, self.tm_mlp().n_params()),
        ])
    }

    pub fn voxel_size(&self) -> f64 {
        self.sdf_dims().min_voxel_size(&self.bbox)
    }
}

/// Which radiance field: S carries the lights-off scene, E the contribution
/// added by emissive sources.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum RadField {
    S,
    E,
}

#[derive(Clone, Debug)]
pub struct FieldSet {
    pub cfg: FieldConfig,
    pub layout: Layout,
    pub params: Vec<f64>,
}

impl FieldSet {
    /// Initialize: SDF a sphere inscribed in the bbox, BRDF logits at zero,
    /// emission near dark, radiance heads biased to the softplus floor,
    /// environment lobes on a Fibonacci lattice.
    pub fn new(cfg: FieldConfig) -> Result<FieldSet> {
        cfg.validate()?;
        let layout = cfg.layout();
        let mut params = vec![0.0; layout.total()];
        let mut rng = Stream::new(&[cfg.init_seed, 0xf1e1d5]);

        let center = cfg.bbox.center();
        let radius = 0.45 * cfg.bbox.extent().min_component();
        let dims = cfg.sdf_dims();
        {
            let sdf = &mut params[layout.range(ParamClass::SdfGrid)];
            for ix in 0..dims.nx {
                for iy in 0..dims.ny {
                    for iz in 0..dims.nz {
                        let p = dims.voxel_center(&cfg.bbox, ix, iy, iz);
                        sdf[dims.voxel_base(ix, iy, iz)] = (p - center).norm() - radius;
                    }
                }
            }
        }
        // Sharpness is stored as its logarithm so additive optimizer steps
        // compound geometrically; surfaces can crispen by orders of
        // magnitude over a run.
        params[layout.range(ParamClass::Sharpness).start] = cfg.init_sharpness.ln();

        let e_init = softplus_inverse(cfg.init_emission);
        for v in &mut params[layout.range(ParamClass::EmissionGrid)] {
            *v = e_init;
        }

        for class in [ParamClass::RadianceSGrid, ParamClass::RadianceEGrid] {
            for v in &mut params[layout.range(class)] {
                *v = 0.01 * rng.next_gauss();
            }
        }
        let rad_mlp = cfg.rad_mlp();
        for class in [ParamClass::RadianceSHead, ParamClass::RadianceEHead] {
            let r = layout.range(class);
            mlp::init_params(&rad_mlp, &mut rng, cfg.rad_out_bias, &mut params[r]);
        }

        let env = envmap::fibonacci_init(cfg.env_lobes, cfg.init_seed);
        params[layout.range(ParamClass::EnvMap)].copy_from_slice(&env.to_params());

        let tm = cfg.tm_mlp();
        let r = layout.range(ParamClass::ToneMap);
        mlp::init_params(&tm, &mut rng, 0.0, &mut params[r]);

        Ok(FieldSet { cfg, layout, params })
    }

    pub fn grad_store(&self) -> GradientStore {
        GradientStore::zeros(&self.layout)
    }

    fn block(&self, class: ParamClass) -> &[f64] {
        &self.params[self.layout.range(class)]
    }

    pub fn sharpness(&self) -> f64 {
        self.params[self.layout.range(ParamClass::Sharpness).start].exp()
    }

    pub fn sharpness_backward(&self, upstream: f64, grad: &mut GradientStore) {
        let idx = self.layout.range(ParamClass::Sharpness).start;
        grad.values[idx] += upstream * self.params[idx].exp();
    }

    // ---- SDF ----

    pub fn sdf_value(&self, x: Vec3) -> f64 {
        let mut out = [0.0];
        grid::sample(self.block(ParamClass::SdfGrid), &self.cfg.sdf_dims(), &self.cfg.bbox, x, &mut out);
        out[0]
    }

    pub fn sdf_backward(&self, x: Vec3, upstream: f64, grad: &mut GradientStore) {
        let r = self.layout.range(ParamClass::SdfGrid);
        grid::sample_backward(
            &self.cfg.sdf_dims(),
            &self.cfg.bbox,
            x,
            &[upstream],
            &mut grad.values[r],
        );
    }

    /// Raw (unnormalized) SDF spatial gradient.
    pub fn sdf_spatial_grad(&self, x: Vec3) -> Vec3 {
        let mut out = [0.0];
        let mut g = [Vec3::ZERO];
        grid::sample_with_spatial_grad(
            self.block(ParamClass::SdfGrid),
            &self.cfg.sdf_dims(),
            &self.cfg.bbox,
            x,
            &mut out,
            &mut g,
        );
        g[0]
    }

    pub fn sdf_normal(&self, x: Vec3) -> Result<Vec3> {
        let g = self.sdf_spatial_grad(x);
        let n = g.norm();
        if n < 1e-8 {
            return Err(Error::DegenerateNormal(x.x, x.y, x.z));
        }
        Ok(g / n)
    }

    /// Reverse-mode rule of the raw SDF spatial gradient.
    pub fn sdf_spatial_grad_backward(&self, x: Vec3, upstream: Vec3, grad: &mut GradientStore) {
        let r = self.layout.range(ParamClass::SdfGrid);
        grid::spatial_grad_backward(
            &self.cfg.sdf_dims(),
            &self.cfg.bbox,
            x,
            &[0.0],
            &[upstream],
            &mut grad.values[r],
        );
    }

    /// Reverse-mode rule of `sdf_normal`: n = g/|g|, with
    /// dg = (I - n n^T) upstream / |g| spread over the stencil corners.
    pub fn sdf_normal_backward(&self, x: Vec3, upstream: Vec3, grad: &mut GradientStore) {
        let g = self.sdf_spatial_grad(x);
        let norm = g.norm();
        if norm < 1e-8 {
            return;
        }
        let n = g / norm;
        let dg = (upstream - n * n.dot(upstream)) / norm;
        let r = self.layout.range(ParamClass::SdfGrid);
        grid::spatial_grad_backward(
            &self.cfg.sdf_dims(),
            &self.cfg.bbox,
            x,
            &[0.0],
            &[dg],
            &mut grad.values[r],
        );
    }

    // ---- BRDF ----

    pub fn brdf_at(&self, x: Vec3) -> BrdfParams {
        let mut out = [0.0; 5];
        grid::sample(self.block(ParamClass::BrdfGrid), &self.cfg.brdf_dims(), &self.cfg.bbox, x, &mut out);
        BrdfParams {
            base_color: Vec3::new(sigmoid(out[0]), sigmoid(out[1]), sigmoid(out[2])),
            roughness: sigmoid(out[3]),
            metallic: sigmoid(out[4]),
        }
    }

    pub fn brdf_backward(
        &self,
        x: Vec3,
        d_base: Vec3,
        d_roughness: f64,
        d_metallic: f64,
        grad: &mut GradientStore,
    ) {
        let mut logits = [0.0; 5];
        grid::sample(self.block(ParamClass::BrdfGrid), &self.cfg.brdf_dims(), &self.cfg.bbox, x, &mut logits);
        let upstream = [
            d_base.x * sigmoid_deriv(logits[0]),
            d_base.y * sigmoid_deriv(logits[1]),
            d_base.z * sigmoid_deriv(logits[2]),
            d_roughness * sigmoid_deriv(logits[3]),
            d_metallic * sigmoid_deriv(logits[4]),
        ];
        let r = self.layout.range(ParamClass::BrdfGrid);
        grid::sample_backward(&self.cfg.brdf_dims(), &self.cfg.bbox, x, &upstream, &mut grad.values[r]);
    }

    // ---- Emission ----

    pub fn emission_at(&self, x: Vec3) -> Vec3 {
        let mut out = [0.0; 3];
        grid::sample(
            self.block(ParamClass::EmissionGrid),
            &self.cfg.emission_dims(),
            &self.cfg.bbox,
            x,
            &mut out,
        );
        Vec3::new(softplus(out[0]), softplus(out[1]), softplus(out[2]))
    }

    pub fn emission_backward(&self, x: Vec3, upstream: Vec3, grad: &mut GradientStore) {
        let mut pre = [0.0; 3];
        grid::sample(
            self.block(ParamClass::EmissionGrid),
            &self.cfg.emission_dims(),
            &self.cfg.bbox,
            x,
            &mut pre,
        );
        let up = [
            upstream.x * softplus_deriv(pre[0]),
            upstream.y * softplus_deriv(pre[1]),
            upstream.z * softplus_deriv(pre[2]),
        ];
        let r = self.layout.range(ParamClass::EmissionGrid);
        grid::sample_backward(&self.cfg.emission_dims(), &self.cfg.bbox, x, &up, &mut grad.values[r]);
    }

    // ---- Radiance fields ----

    fn rad_classes(which: RadField) -> (ParamClass, ParamClass) {
        match which {
            RadField::S => (ParamClass::RadianceSGrid, ParamClass::RadianceSHead),
            RadField::E => (ParamClass::RadianceEGrid, ParamClass::RadianceEHead),
        }
    }

    fn rad_input(&self, which: RadField, x: Vec3, w: Vec3, input: &mut [f64]) {
        let (grid_class, _) = Self::rad_classes(which);
        let f = self.cfg.rad_features;
        grid::sample(self.block(grid_class), &self.cfg.rad_dims(), &self.cfg.bbox, x, &mut input[..f]);
        let mut basis = [0.0; SH_DIM];
        sh_basis(w, &mut basis);
        for (dst, b) in input[f..f + SH_DIM].iter_mut().zip(basis.iter()) {
            *dst = b * self.cfg.sh_scale;
        }
    }

    /// Outgoing radiance of the selected field at `x` in direction `w`
    /// (softplus activated, always nonnegative).
    pub fn radiance(&self, which: RadField, x: Vec3, w: Vec3) -> Vec3 {
        let mut input = [0.0f64; 64];
        let dims = self.cfg.rad_mlp();
        let input = &mut input[..dims.input];
        self.rad_input(which, x, w, input);
        let (_, head_class) = Self::rad_classes(which);
        let mut raw = [0.0; 3];
        mlp::forward(&dims, self.block(head_class), input, &mut raw);
        Vec3::new(softplus(raw[0]), softplus(raw[1]), softplus(raw[2]))
    }

    pub fn radiance_backward(
        &self,
        which: RadField,
        x: Vec3,
        w: Vec3,
        upstream: Vec3,
        grad: &mut GradientStore,
    ) {
        let dims = self.cfg.rad_mlp();
        let mut input = [0.0f64; 64];
        let input = &mut input[..dims.input];
        self.rad_input(which, x, w, input);
        let (grid_class, head_class) = Self::rad_classes(which);
        let mut raw = [0.0; 3];
        mlp::forward(&dims, self.block(head_class), input, &mut raw);
        let up = [
            upstream.x * softplus_deriv(raw[0]),
            upstream.y * softplus_deriv(raw[1]),
            upstream.z * softplus_deriv(raw[2]),
        ];
        let mut grad_input = [0.0f64; 64];
        let grad_input = &mut grad_input[..dims.input];
        {
            let r = self.layout.range(head_class);
            mlp::backward(
                &dims,
                self.block(head_class),
                input,
                &up,
                &mut grad.values[r],
                Some(grad_input),
            );
        }
        let f = self.cfg.rad_features;
        let r = self.layout.range(grid_class);
        grid::sample_backward(&self.cfg.rad_dims(), &self.cfg.bbox, x, &grad_input[..f], &mut grad.values[r]);
    }

    // ---- Tone-mapper ----

    fn tm_encode(&self, c: Vec3, input: &mut [f64]) {
        input[0] = c.x;
        input[1] = c.y;
        input[2] = c.z;
        let mut i = 3;
        for k in 0..self.cfg.tm_frequencies {
            let f = (1u64 << k) as f64 * std::f64::consts::PI;
            for ch in 0..3 {
                let v = f * c.component(ch);
                input[i] = v.sin();
                input[i + 1] = v.cos();
                i += 2;
            }
        }
    }

    /// Learnable tone map from HDR linear color to [0,1]^3.
    pub fn tonemap(&self, c: Vec3) -> Vec3 {
        let dims = self.cfg.tm_mlp();
        let mut input = [0.0f64; 64];
        let input = &mut input[..dims.input];
        self.tm_encode(c, input);
        let mut raw = [0.0; 3];
        mlp::forward(&dims, self.block(ParamClass::ToneMap), input, &mut raw);
        Vec3::new(sigmoid(raw[0]), sigmoid(raw[1]), sigmoid(raw[2]))
    }

    /// Backward through the tone-mapper; returns the gradient with respect
    /// to the HDR input color.
    pub fn tonemap_backward(&self, c: Vec3, upstream: Vec3, grad: &mut GradientStore) -> Vec3 {
        let dims = self.cfg.tm_mlp();
        let mut input = [0.0f64; 64];
        let input = &mut input[..dims.input];
        self.tm_encode(c, input);
        let mut raw = [0.0; 3];
        mlp::forward(&dims, self.block(ParamClass::ToneMap), input, &mut raw);
        let up = [
            upstream.x * sigmoid_deriv(raw[0]),
            upstream.y * sigmoid_deriv(raw[1]),
            upstream.z * sigmoid_deriv(raw[2]),
        ];
        let mut grad_input = [0.0f64; 64];
        let grad_input = &mut grad_input[..dims.input];
        {
            let r = self.layout.range(ParamClass::ToneMap);
            mlp::backward(
                &dims,
                self.block(ParamClass::ToneMap),
                input,
                &up,
                &mut grad.values[r],
                Some(grad_input),
            );
        }
        // Chain the positional encoding back to the three raw channels.
        let mut dc = Vec3::new(grad_input[0], grad_input[1], grad_input[2]);
        let mut i = 3;
        for k in 0..self.cfg.tm_frequencies {
            let f = (1u64 << k) as f64 * std::f64::consts::PI;
            for ch in 0..3 {
                let v = f * c.component(ch);
                let d = grad_input[i] * f * v.cos() - grad_input[i + 1] * f * v.sin();
                match ch {
                    0 => dc.x += d,
                    1 => dc.y += d,
                    _ => dc.z += d,
                }
                i += 2;
            }
        }
        dc
    }

    // ---- Environment map ----

    pub fn env_params(&self) -> &[f64] {
        self.block(ParamClass::EnvMap)
    }

    pub fn env_eval(&self, dir: Vec3) -> Vec3 {
        envmap::eval_params(self.env_params(), dir)
    }

    pub fn env_backward(&self, dir: Vec3, upstream: Vec3, grad: &mut GradientStore) {
        let r = self.layout.range(ParamClass::EnvMap);
        envmap::accumulate_grad(self.block(ParamClass::EnvMap), dir, upstream, &mut grad.values[r]);
    }

    pub fn envmap(&self) -> envmap::EnvMap {
        envmap::EnvMap::from_params(self.env_params())
    }

    pub fn set_envmap(&mut self, env: &envmap::EnvMap) {
        let r = self.layout.range(ParamClass::EnvMap);
        self.params[r].copy_from_slice(&env.to_params());
    }
}

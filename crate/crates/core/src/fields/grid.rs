//! Dense voxel grids with trilinear interpolation, clamp-to-edge behavior,
//! and the reverse-mode rules for both the interpolated value and its
//! spatial gradient.

use serde::{Deserialize, Serialize};

use crate::math::{Aabb, Vec3};

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridDims {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub channels: usize,
}

impl GridDims {
    pub fn new(res: [usize; 3], channels: usize) -> GridDims {
        GridDims { nx: res[0], ny: res[1], nz: res[2], channels }
    }

    pub fn n_voxels(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn n_values(&self) -> usize {
        self.n_voxels() * self.channels
    }

    /// Base index of a voxel's channel block.
    pub fn voxel_base(&self, ix: usize, iy: usize, iz: usize) -> usize {
        ((ix * self.ny + iy) * self.nz + iz) * self.channels
    }

    /// World position of a voxel center.
    pub fn voxel_center(&self, bbox: &Aabb, ix: usize, iy: usize, iz: usize) -> Vec3 {
        let e = bbox.extent();
        Vec3::new(
            bbox.min.x + (ix as f64 + 0.5) * e.x / self.nx as f64,
            bbox.min.y + (iy as f64 + 0.5) * e.y / self.ny as f64,
            bbox.min.z + (iz as f64 + 0.5) * e.z / self.nz as f64,
        )
    }

    /// Edge length of one voxel along the smallest axis.
    pub fn min_voxel_size(&self, bbox: &Aabb) -> f64 {
        let e = bbox.extent();
        (e.x / self.nx as f64).min(e.y / self.ny as f64).min(e.z / self.nz as f64)
    }
}

/// The 8-corner interpolation stencil at a query point: voxel base indices,
/// interpolation weights, and the weight gradients in scene units (zero
/// along axes where the clamp-to-edge region was entered).
pub struct Stencil {
    pub idx: [usize; 8],
    pub w: [f64; 8],
    pub dw: [[f64; 3]; 8],
}

struct AxisCoord {
    i0: usize,
    frac: f64,
    /// d frac / d x, zero when clamped.
    scale: f64,
}

fn axis_coord(x: f64, lo: f64, hi: f64, n: usize) -> AxisCoord {
    let raw_scale = n as f64 / (hi - lo);
    let u = (x - lo) * raw_scale - 0.5;
    let u_max = (n - 1) as f64;
    let clamped = !(0.0..=u_max).contains(&u);
    let u = u.clamp(0.0, u_max);
    let i0 = (u.floor() as usize).min(n.saturating_sub(2));
    let frac = if n < 2 { 0.0 } else { u - i0 as f64 };
    let scale = if clamped || n < 2 { 0.0 } else { raw_scale };
    AxisCoord { i0, frac, scale }
}

pub fn stencil(dims: &GridDims, bbox: &Aabb, x: Vec3) -> Stencil {
    let ax = axis_coord(x.x, bbox.min.x, bbox.max.x, dims.nx);
    let ay = axis_coord(x.y, bbox.min.y, bbox.max.y, dims.ny);
    let az = axis_coord(x.z, bbox.min.z, bbox.max.z, dims.nz);

    let ix1 = (ax.i0 + 1).min(dims.nx - 1);
    let iy1 = (ay.i0 + 1).min(dims.ny - 1);
    let iz1 = (az.i0 + 1).min(dims.nz - 1);

    let fx = [1.0 - ax.frac, ax.frac];
    let fy = [1.0 - ay.frac, ay.frac];
    let fz = [1.0 - az.frac, az.frac];
    // d frac weight / d frac for the low/high corner.
    let gx = [-1.0, 1.0];

    let xs = [ax.i0, ix1];
    let ys = [ay.i0, iy1];
    let zs = [az.i0, iz1];

    let mut out = Stencil { idx: [0; 8], w: [0.0; 8], dw: [[0.0; 3]; 8] };
    let mut k = 0;
    for (cx, &ixv) in xs.iter().enumerate() {
        for (cy, &iyv) in ys.iter().enumerate() {
            for (cz, &izv) in zs.iter().enumerate() {
                out.idx[k] = dims.voxel_base(ixv, iyv, izv);
                out.w[k] = fx[cx] * fy[cy] * fz[cz];
                out.dw[k] = [
                    gx[cx] * fy[cy] * fz[cz] * ax.scale,
                    fx[cx] * gx[cy] * fz[cz] * ay.scale,
                    fx[cx] * fy[cy] * gx[cz] * az.scale,
                ];
                k += 1;
            }
        }
    }
    out
}

/// Trilinear interpolation of all channels at `x` into `out`.
pub fn sample(values: &[f64], dims: &GridDims, bbox: &Aabb, x: Vec3, out: &mut [f64]) {
    debug_assert_eq!(out.len(), dims.channels);
    let st = stencil(dims, bbox, x);
    out.fill(0.0);
    for k in 0..8 {
        let base = st.idx[k];
        let w = st.w[k];
        for c in 0..dims.channels {
            out[c] += w * values[base + c];
        }
    }
}

/// Reverse-mode rule of `sample`: spreads `upstream` over the 8 corners.
pub fn sample_backward(
    dims: &GridDims,
    bbox: &Aabb,
    x: Vec3,
    upstream: &[f64],
    grad_values: &mut [f64],
) {
    let st = stencil(dims, bbox, x);
    for k in 0..8 {
        let base = st.idx[k];
        let w = st.w[k];
        if w == 0.0 {
            continue;
        }
        for c in 0..dims.channels {
            grad_values[base + c] += w * upstream[c];
        }
    }
}

/// Interpolated value and its spatial gradient (per channel) at `x`.
/// The gradient is the analytic derivative of the trilinear interpolant,
/// piecewise multilinear per cell, zero in the clamp region.
pub fn sample_with_spatial_grad(
    values: &[f64],
    dims: &GridDims,
    bbox: &Aabb,
    x: Vec3,
    out: &mut [f64],
    out_grad: &mut [Vec3],
) {
    debug_assert_eq!(out.len(), dims.channels);
    debug_assert_eq!(out_grad.len(), dims.channels);
    let st = stencil(dims, bbox, x);
    out.fill(0.0);
    out_grad.fill(Vec3::ZERO);
    for k in 0..8 {
        let base = st.idx[k];
        for c in 0..dims.channels {
            let v = values[base + c];
            out[c] += st.w[k] * v;
            out_grad[c] += Vec3::new(st.dw[k][0], st.dw[k][1], st.dw[k][2]) * v;
        }
    }
}

/// Reverse-mode rule covering both outputs of `sample_with_spatial_grad`:
/// upstream on the value and upstream on the spatial gradient both land on
/// the corner voxels.
pub fn spatial_grad_backward(
    dims: &GridDims,
    bbox: &Aabb,
    x: Vec3,
    upstream_value: &[f64],
    upstream_grad: &[Vec3],
    grad_values: &mut [f64],
) {
    let st = stencil(dims, bbox, x);
    for k in 0..8 {
        let base = st.idx[k];
        let dw = Vec3::new(st.dw[k][0], st.dw[k][1], st.dw[k][2]);
        for c in 0..dims.channels {
            grad_values[base + c] += st.w[k] * upstream_value[c] + dw.dot(upstream_grad[c]);
        }
    }
}

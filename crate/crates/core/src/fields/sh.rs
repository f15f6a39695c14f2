//! Real spherical-harmonic basis of degree 2 (9 functions) for directional
//! encoding of the radiance heads.

use crate::math::Vec3;

pub const SH_DIM: usize = 9;

const C0: f64 = 0.282_094_791_773_878_14;
const C1: f64 = 0.488_602_511_902_919_9;
const C2_0: f64 = 1.092_548_430_592_079_2;
const C2_2: f64 = 0.315_391_565_252_520_05;
const C2_4: f64 = 0.546_274_215_296_039_6;

pub fn sh_basis(d: Vec3, out: &mut [f64; SH_DIM]) {
    let (x, y, z) = (d.x, d.y, d.z);
    out[0] = C0;
    out[1] = -C1 * y;
    out[2] = C1 * z;
    out[3] = -C1 * x;
    out[4] = C2_0 * x * y;
    out[5] = -C2_0 * y * z;
    out[6] = C2_2 * (3.0 * z * z - 1.0);
    out[7] = -C2_0 * x * z;
    out[8] = C2_4 * (x * x - y * y);
}

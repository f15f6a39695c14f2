//! Two-layer fully connected heads used by the radiance fields and the
//! tone-mapper. tanh hidden activation; the output activation (softplus or
//! sigmoid) is applied by the caller.
//!
//! Parameter layout: w1 [hidden][in] row-major, b1 [hidden], w2 [out][hidden],
//! b2 [out].

use serde::{Deserialize, Serialize};

use crate::math::tanh_deriv;
use crate::sampler::Stream;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpDims {
    pub input: usize,
    pub hidden: usize,
    pub output: usize,
}

impl MlpDims {
    pub fn n_params(&self) -> usize {
        (self.input + 1) * self.hidden + (self.hidden + 1) * self.output
    }

    fn w1(&self) -> usize {
        0
    }

    fn b1(&self) -> usize {
        self.input * self.hidden
    }

    fn w2(&self) -> usize {
        self.b1() + self.hidden
    }

    fn b2(&self) -> usize {
        self.w2() + self.hidden * self.output
    }
}

/// Forward pass producing raw (pre-activation) outputs.
pub fn forward(dims: &MlpDims, params: &[f64], input: &[f64], out: &mut [f64]) {
    debug_assert_eq!(params.len(), dims.n_params());
    debug_assert_eq!(input.len(), dims.input);
    debug_assert_eq!(out.len(), dims.output);
    let mut hidden = [0.0f64; 128];
    let hidden = &mut hidden[..dims.hidden];
    forward_hidden(dims, params, input, hidden);
    let w2 = &params[dims.w2()..];
    let b2 = &params[dims.b2()..];
    for o in 0..dims.output {
        let row = &w2[o * dims.hidden..(o + 1) * dims.hidden];
        let mut acc = b2[o];
        for (w, h) in row.iter().zip(hidden.iter()) {
            acc += w * h;
        }
        out[o] = acc;
    }
}

fn forward_hidden(dims: &MlpDims, params: &[f64], input: &[f64], hidden: &mut [f64]) {
    let w1 = &params[dims.w1()..];
    let b1 = &params[dims.b1()..];
    for hdx in 0..dims.hidden {
        let row = &w1[hdx * dims.input..(hdx + 1) * dims.input];
        let mut acc = b1[hdx];
        for (w, x) in row.iter().zip(input.iter()) {
            acc += w * x;
        }
        hidden[hdx] = acc.tanh();
    }
}

/// Reverse-mode rule. `upstream` is d loss / d raw output. Parameter
/// gradients accumulate into `grad_params` (same layout as `params`);
/// gradients with respect to the input accumulate into `grad_input` when
/// provided. The forward pass is recomputed internally.
pub fn backward(
    dims: &MlpDims,
    params: &[f64],
    input: &[f64],
    upstream: &[f64],
    grad_params: &mut [f64],
    mut grad_input: Option<&mut [f64]>,
) {
    debug_assert_eq!(grad_params.len(), dims.n_params());
    let mut pre = [0.0f64; 128];
    let mut hidden = [0.0f64; 128];
    let pre = &mut pre[..dims.hidden];
    let hidden = &mut hidden[..dims.hidden];

    let w1 = &params[dims.w1()..];
    let b1 = &params[dims.b1()..];
    for hdx in 0..dims.hidden {
        let row = &w1[hdx * dims.input..(hdx + 1) * dims.input];
        let mut acc = b1[hdx];
        for (w, x) in row.iter().zip(input.iter()) {
            acc += w * x;
        }
        pre[hdx] = acc;
        hidden[hdx] = acc.tanh();
    }

    let w2 = &params[dims.w2()..];
    let (gw2, rest) = grad_params[dims.w2()..].split_at_mut(dims.hidden * dims.output);
    let gb2 = &mut rest[..dims.output];

    let mut d_hidden = [0.0f64; 128];
    let d_hidden = &mut d_hidden[..dims.hidden];
    for o in 0..dims.output {
        let u = upstream[o];
        gb2[o] += u;
        let row = &w2[o * dims.hidden..(o + 1) * dims.hidden];
        let grow = &mut gw2[o * dims.hidden..(o + 1) * dims.hidden];
        for hdx in 0..dims.hidden {
            grow[hdx] += u * hidden[hdx];
            d_hidden[hdx] += u * row[hdx];
        }
    }

    let (gw1, rest) = grad_params[..dims.w2()].split_at_mut(dims.b1());
    let gb1 = &mut rest[..dims.hidden];
    for hdx in 0..dims.hidden {
        let d_pre = d_hidden[hdx] * tanh_deriv(pre[hdx]);
        gb1[hdx] += d_pre;
        let row = &w1[hdx * dims.input..(hdx + 1) * dims.input];
        let grow = &mut gw1[hdx * dims.input..(hdx + 1) * dims.input];
        for i in 0..dims.input {
            grow[i] += d_pre * input[i];
            if let Some(gi) = grad_input.as_deref_mut() {
                gi[i] += d_pre * row[i];
            }
        }
    }
}

/// Scaled random init: weights ~ gauss / sqrt(fan_in), zero biases except
/// the output bias which is set to `out_bias`.
pub fn init_params(dims: &MlpDims, rng: &mut Stream, out_bias: f64, out: &mut [f64]) {
    debug_assert_eq!(out.len(), dims.n_params());
    let s1 = 1.0 / (dims.input as f64).sqrt();
    for v in &mut out[dims.w1()..dims.b1()] {
        *v = rng.next_gauss() * s1;
    }
    for v in &mut out[dims.b1()..dims.w2()] {
        *v = 0.0;
    }
    let s2 = 1.0 / (dims.hidden as f64).sqrt();
    let b2 = dims.b2();
    for v in &mut out[dims.w2()..b2] {
        *v = rng.next_gauss() * s2;
    }
    for v in &mut out[b2..] {
        *v = out_bias;
    }
}

//! Flat parameter/gradient storage with named, typed views onto every
//! learnable field. The layout is computed once from the field configuration
//! and shared by parameters, gradients, and optimizer state.

use std::ops::Range;

use serde::{Deserialize, Serialize};

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ParamClass {
    SdfGrid,
    Sharpness,
    BrdfGrid,
    EmissionGrid,
    RadianceSGrid,
    RadianceSHead,
    RadianceEGrid,
    RadianceEHead,
    EnvMap,
    ToneMap,
}

impl ParamClass {
    pub const ALL: [ParamClass; 10] = [
        ParamClass::SdfGrid,
        ParamClass::Sharpness,
        ParamClass::BrdfGrid,
        ParamClass::EmissionGrid,
        ParamClass::RadianceSGrid,
        ParamClass::RadianceSHead,
        ParamClass::RadianceEGrid,
        ParamClass::RadianceEHead,
        ParamClass::EnvMap,
        ParamClass::ToneMap,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ParamClass::SdfGrid => "sdf_grid",
            ParamClass::Sharpness => "sharpness",
            ParamClass::BrdfGrid => "brdf_grid",
            ParamClass::EmissionGrid => "emission_grid",
            ParamClass::RadianceSGrid => "radiance_s_grid",
            ParamClass::RadianceSHead => "radiance_s_head",
            ParamClass::RadianceEGrid => "radiance_e_grid",
            ParamClass::RadianceEHead => "radiance_e_head",
            ParamClass::EnvMap => "envmap",
            ParamClass::ToneMap => "tonemap",
        }
    }

    /// True for the dense voxel blocks (they get the larger learning rate).
    pub fn is_grid(&self) -> bool {
        matches!(
            self,
            ParamClass::SdfGrid
                | ParamClass::BrdfGrid
                | ParamClass::EmissionGrid
                | ParamClass::RadianceSGrid
                | ParamClass::RadianceEGrid
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    ranges: Vec<(ParamClass, Range<usize>)>,
    total: usize,
}

impl Layout {
    pub fn build(sizes: &[(ParamClass, usize)]) -> Layout {
        let mut ranges = Vec::with_capacity(sizes.len());
        let mut offset = 0;
        for &(class, len) in sizes {
            ranges.push((class, offset..offset + len));
            offset += len;
        }
        Layout { ranges, total: offset }
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn range(&self, class: ParamClass) -> Range<usize> {
        self.ranges
            .iter()
            .find(|(c, _)| *c == class)
            .map(|(_, r)| r.clone())
            .expect("class present in layout")
    }

    pub fn class_at(&self, index: usize) -> ParamClass {
        for (c, r) in &self.ranges {
            if r.contains(&index) {
                return *c;
            }
        }
        panic!("index {index} outside layout of {} parameters", self.total)
    }

    pub fn classes(&self) -> impl Iterator<Item = (ParamClass, Range<usize>)> + '_ {
        self.ranges.iter().map(|(c, r)| (*c, r.clone()))
    }
}

/// Gradient accumulator aligned with a `Layout`. Workers each own one and
/// the trainer merges them in a fixed order so results do not depend on
/// scheduling.
#[derive(Clone, Debug)]
pub struct GradientStore {
    pub values: Vec<f64>,
}

impl GradientStore {
    pub fn zeros(layout: &Layout) -> GradientStore {
        GradientStore { values: vec![0.0; layout.total()] }
    }

    pub fn zero(&mut self) {
        self.values.fill(0.0);
    }

    pub fn add_from(&mut self, other: &GradientStore) {
        debug_assert_eq!(self.values.len(), other.values.len());
        for (a, b) in self.values.iter_mut().zip(other.values.iter()) {
            *a += *b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.values {
            *v *= s;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn slice(&self, layout: &Layout, class: ParamClass) -> &[f64] {
        &self.values[layout.range(class)]
    }
}

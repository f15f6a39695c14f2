//! Differentiable volumetric inverse rendering of scenes containing emissive
//! light sources.
//!
//! The crate reconstructs SDF geometry, Disney-style materials, an SG
//! environment map, and an HDR emission field from LDR multi-view images
//! captured with the emitters switched on and off, then uses the
//! reconstruction to identify sources and re-light the scene. A brute-force
//! Monte Carlo path tracer doubles as dataset synthesizer and as the oracle
//! the renderer is verified against.

pub mod brdf;
pub mod colorspace;
pub mod envmap;
pub mod editing;
pub mod error;
pub mod fields;
pub mod io;
pub mod math;
pub mod ops;
pub mod oracle;
pub mod renderer;
pub mod training;
pub mod sampler;

pub use error::{Error, Result};

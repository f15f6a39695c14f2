//! Ground-truth machinery: analytic test scenes, the brute-force Monte Carlo
//! path tracer, and synthetic dataset generation.

pub mod scene;
pub mod synth;
pub mod trace;

pub use scene::{AnalyticScene, BoxSceneParams, MaterialRegion, SdfPrim};
pub use synth::{synthesize_dataset, SynthConfig};
pub use trace::{path_trace, OracleModel, PathTraceConfig};

//! Loss assembly, progressive ray-group management, the optimizer loop, and
//! gradient verification.

pub mod gradcheck;
pub mod groups;
pub mod losses;
pub mod optimizer;
pub mod trainer;

pub use groups::{BatchSampler, RayGroups, ThresholdSchedule};
pub use losses::{LossWeights, LtsEMode, LtsPoint, TrainRay};
pub use optimizer::{project_constraints, Adam, OptimizerConfig};
pub use trainer::{train, TrainConfig, TrainOutput};

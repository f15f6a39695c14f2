//! Dataset, checkpoint, and metric persistence plus the camera model.

pub mod camera;
pub mod checkpoint;
pub mod dataset;
pub mod metrics;
pub mod pfm;

pub use camera::{spiral_cameras, Camera};
pub use dataset::{load_dataset, Dataset, Frame};
pub use metrics::{best_threshold_iou, metric_iou, metric_mse_hdr, metric_psnr_ldr};

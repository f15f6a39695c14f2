//! Evaluation metrics: mask IoU, HDR MSE, LDR PSNR.

use crate::math::Vec3;

/// Intersection over union of two binary masks. Two empty masks count as a
/// perfect match.
pub fn metric_iou(pred: &[bool], gt: &[bool]) -> f64 {
    debug_assert_eq!(pred.len(), gt.len());
    let mut inter = 0usize;
    let mut union = 0usize;
    for (&p, &g) in pred.iter().zip(gt.iter()) {
        if p && g {
            inter += 1;
        }
        if p || g {
            union += 1;
        }
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Mean squared error over all pixels and channels of HDR images.
pub fn metric_mse_hdr(pred: &[Vec3], gt: &[Vec3]) -> f64 {
    debug_assert_eq!(pred.len(), gt.len());
    if pred.is_empty() {
        return 0.0;
    }
    let sum: f64 = pred
        .iter()
        .zip(gt.iter())
        .map(|(a, b)| {
            let d = *a - *b;
            d.dot(d)
        })
        .sum();
    sum / (3 * pred.len()) as f64
}

/// PSNR in dB of LDR images in [0,1]; identical images report the 99 dB cap.
pub fn metric_psnr_ldr(pred: &[Vec3], gt: &[Vec3]) -> f64 {
    let mse = metric_mse_hdr(pred, gt);
    if mse <= 0.0 {
        return 99.0;
    }
    (-10.0 * mse.log10()).min(99.0)
}

/// Best threshold sweep at the given interval: threshold a scalar map and
/// report the best IoU against the ground-truth mask. Used for both the
/// LDR pixel-thresholding baseline and the composited-emission baseline.
pub fn best_threshold_iou(values: &[f64], gt: &[bool], lo: f64, hi: f64, step: f64) -> (f64, f64) {
    let mut best = (0.0f64, lo);
    let mut t = lo;
    while t <= hi + 1e-12 {
        let pred: Vec<bool> = values.iter().map(|&v| v > t).collect();
        let iou = metric_iou(&pred, gt);
        if iou > best.0 {
            best = (iou, t);
        }
        t += step;
    }
    best
}

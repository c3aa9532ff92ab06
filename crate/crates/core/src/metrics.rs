//! Image-quality and camera-parameter metrics.

use serde::{Deserialize, Serialize};

use crate::data::ImageBuf;
use crate::geometry::PoseErrorReport;
use crate::losses::{ssim, SSIM_C1, SSIM_C2, SSIM_WINDOW};

/// PSNR ceiling: identical images report 99 dB instead of infinity.
pub const PSNR_CAP_DB: f64 = 99.0;

/// Peak signal-to-noise ratio from a mean squared error on a [0, 1]
/// range: `-10 log10(mse)`, capped at 99 dB.
pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        return PSNR_CAP_DB;
    }
    (-10.0 * mse.log10()).min(PSNR_CAP_DB)
}

pub fn mse_images(a: &ImageBuf<f64>, b: &ImageBuf<f64>) -> f64 {
    assert_eq!(a.width, b.width);
    assert_eq!(a.height, b.height);
    let n = a.data.len() as f64;
    a.data
        .iter()
        .zip(b.data.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / n
}

pub fn psnr_images(a: &ImageBuf<f64>, b: &ImageBuf<f64>) -> f64 {
    psnr_from_mse(mse_images(a, b))
}

/// Mean SSIM over the three channels with the standard sliding
/// Gaussian window (size 11, sigma 1.5, clamped to the image).
pub fn ssim_images(a: &ImageBuf<f64>, b: &ImageBuf<f64>) -> f64 {
    assert_eq!(a.width, b.width);
    assert_eq!(a.height, b.height);
    let n = a.width * a.height;
    let mut total = 0.0;
    for c in 0..3 {
        let xa: Vec<f64> = (0..n).map(|i| a.data[i * 3 + c]).collect();
        let xb: Vec<f64> = (0..n).map(|i| b.data[i * 3 + c]).collect();
        total += ssim(&xa, &xb, a.width, a.height, SSIM_WINDOW, SSIM_C1, SSIM_C2)
            .expect("image large enough for SSIM");
    }
    total / 3.0
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ImageMetrics {
    pub id: u64,
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FocalGroupReport {
    pub group: usize,
    pub fx_est: f64,
    pub fy_est: f64,
    pub fx_gt: f64,
    pub fy_gt: f64,
    /// Mean absolute focal error in pixels.
    pub pixel_err: f64,
    /// Pixel error relative to the true focal.
    pub rel_err: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FocalReport {
    pub groups: Vec<FocalGroupReport>,
    pub mean_pixel_err: f64,
    pub mean_rel_err: f64,
    pub max_rel_err: f64,
}

/// Compare estimated per-group focals against ground truth.
pub fn focal_report(estimated: &[(f64, f64)], reference: &[(f64, f64)]) -> FocalReport {
    assert_eq!(estimated.len(), reference.len());
    let groups: Vec<FocalGroupReport> = estimated
        .iter()
        .zip(reference.iter())
        .enumerate()
        .map(|(group, (&(fx_est, fy_est), &(fx_gt, fy_gt)))| {
            let pixel_err = 0.5 * ((fx_est - fx_gt).abs() + (fy_est - fy_gt).abs());
            let rel_err = pixel_err / (0.5 * (fx_gt + fy_gt));
            FocalGroupReport {
                group,
                fx_est,
                fy_est,
                fx_gt,
                fy_gt,
                pixel_err,
                rel_err,
            }
        })
        .collect();
    let n = groups.len() as f64;
    FocalReport {
        mean_pixel_err: groups.iter().map(|g| g.pixel_err).sum::<f64>() / n,
        mean_rel_err: groups.iter().map(|g| g.rel_err).sum::<f64>() / n,
        max_rel_err: groups.iter().map(|g| g.rel_err).fold(0.0, f64::max),
        groups,
    }
}

/// Everything an evaluation pass produces. Pose and focal sections are
/// present only when the dataset carries the matching ground truth.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Which images the image metrics cover: "heldout" or "train".
    pub split: String,
    pub images: Vec<ImageMetrics>,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pose: Option<PoseErrorReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub focal: Option<FocalReport>,
    /// Translation error as a fraction of the scene extent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trans_err_frac: Option<f64>,
}

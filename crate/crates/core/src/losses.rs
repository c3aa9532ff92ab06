//! Photometric loss, SSIM, and training batch descriptions.
//!
//! The photometric loss is the mean squared error over a ray batch (the
//! mean rather than a sum keeps the learning rate batch-size invariant;
//! gradients differ from the summed form only by the constant 1/N). The
//! SSIM warmup term compares contiguous rendered patches against the
//! captured image with a Gaussian-window SSIM and is active only during
//! the first `ssim_warmup_epochs` epochs.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::autodiff::{Tape, Tensor, Var};
use crate::data::ImageBuf;
use crate::scalar::Scalar;

/// SSIM stabilization constants for a [0, 1] dynamic range.
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;
/// Default Gaussian window: size 11, sigma 1.5 (clamped to the patch).
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;

#[derive(Debug, Error)]
pub enum LossError {
    #[error("patch {width}x{height} too small for SSIM")]
    PatchTooSmall { width: usize, height: usize },
    #[error("wrong batch kind: {0}")]
    WrongBatchKind(String),
    #[error("length mismatch: {0} rendered vs {1} reference values")]
    LengthMismatch(usize, usize),
}

// ---- photometric ---------------------------------------------------------

/// Mean squared error over all channels.
pub fn photometric_loss<T: Scalar>(rendered: &[T], truth: &[T]) -> Result<T, LossError> {
    if rendered.len() != truth.len() {
        return Err(LossError::LengthMismatch(rendered.len(), truth.len()));
    }
    let n = T::of_usize(rendered.len());
    let sum: T = rendered
        .iter()
        .zip(truth.iter())
        .map(|(&r, &t)| (r - t) * (r - t))
        .sum();
    Ok(sum / n)
}

/// Differentiable photometric loss over a rendered batch.
pub fn photometric_on_tape<T: Scalar>(tape: &mut Tape<T>, rendered: Var, truth: Var) -> Var {
    let diff = tape.sub(rendered, truth);
    let sq = tape.square(diff);
    tape.mean(sq)
}

// ---- SSIM ----------------------------------------------------------------

/// Normalized 2-D Gaussian window, row-major `size x size`.
pub fn gaussian_window(size: usize, sigma: f64) -> Vec<f64> {
    let center = (size as f64 - 1.0) / 2.0;
    let mut w: Vec<f64> = (0..size * size)
        .map(|i| {
            let y = (i / size) as f64 - center;
            let x = (i % size) as f64 - center;
            (-(x * x + y * y) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = w.iter().sum();
    for v in w.iter_mut() {
        *v /= total;
    }
    w
}

/// SSIM between two single-channel patches (row-major `width x height`),
/// Gaussian window of `window` (clamped to the patch) with sigma 1.5.
/// With the window smaller than the patch the result is the mean over
/// all window positions.
pub fn ssim<T: Scalar>(
    x: &[T],
    y: &[T],
    width: usize,
    height: usize,
    window: usize,
    c1: f64,
    c2: f64,
) -> Result<T, LossError> {
    if width < 2 || height < 2 || x.len() != width * height || y.len() != width * height {
        return Err(LossError::PatchTooSmall { width, height });
    }
    let win = window.min(width).min(height);
    let weights = gaussian_window(win, SSIM_SIGMA);
    let (c1, c2) = (T::of_f64(c1), T::of_f64(c2));
    let two = T::of_f64(2.0);

    let mut total = T::zero();
    let mut count = 0usize;
    for oy in 0..=(height - win) {
        for ox in 0..=(width - win) {
            let mut mu_x = T::zero();
            let mut mu_y = T::zero();
            let mut xx = T::zero();
            let mut yy = T::zero();
            let mut xy = T::zero();
            for wy in 0..win {
                for wx in 0..win {
                    let w = T::of_f64(weights[wy * win + wx]);
                    let xv = x[(oy + wy) * width + (ox + wx)];
                    let yv = y[(oy + wy) * width + (ox + wx)];
                    mu_x += w * xv;
                    mu_y += w * yv;
                    xx += w * xv * xv;
                    yy += w * yv * yv;
                    xy += w * xv * yv;
                }
            }
            let var_x = xx - mu_x * mu_x;
            let var_y = yy - mu_y * mu_y;
            let cov = xy - mu_x * mu_y;
            let num = (two * mu_x * mu_y + c1) * (two * cov + c2);
            let den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2);
            total += num / den;
            count += 1;
        }
    }
    Ok(total / T::of_usize(count))
}

/// Differentiable SSIM between a rendered patch (`[k*k]` tape var) and a
/// constant reference patch, with the window covering the whole patch.
pub fn ssim_on_tape<T: Scalar>(
    tape: &mut Tape<T>,
    x: Var,
    y: Var,
    k: usize,
) -> Var {
    let weights = gaussian_window(k, SSIM_SIGMA);
    let w = tape.constant(Tensor::from_vec(
        vec![k * k],
        weights.into_iter().map(T::of_f64).collect(),
    ));
    let (c1, c2) = (T::of_f64(SSIM_C1), T::of_f64(SSIM_C2));
    let two = T::of_f64(2.0);

    let wx = tape.mul(w, x);
    let mu_x = tape.sum(wx);
    let wy = tape.mul(w, y);
    let mu_y = tape.sum(wy);
    let x2 = tape.square(x);
    let wx2 = tape.mul(w, x2);
    let ex2 = tape.sum(wx2);
    let y2 = tape.square(y);
    let wy2 = tape.mul(w, y2);
    let ey2 = tape.sum(wy2);
    let xy = tape.mul(x, y);
    let wxy = tape.mul(w, xy);
    let exy = tape.sum(wxy);

    let mu_x2 = tape.square(mu_x);
    let mu_y2 = tape.square(mu_y);
    let mu_xy = tape.mul(mu_x, mu_y);
    let var_x = tape.sub(ex2, mu_x2);
    let var_y = tape.sub(ey2, mu_y2);
    let cov = tape.sub(exy, mu_xy);

    let n1 = tape.scale(mu_xy, two);
    let n1 = tape.add_scalar(n1, c1);
    let n2 = tape.scale(cov, two);
    let n2 = tape.add_scalar(n2, c2);
    let num = tape.mul(n1, n2);
    let d1 = tape.add(mu_x2, mu_y2);
    let d1 = tape.add_scalar(d1, c1);
    let d2 = tape.add(var_x, var_y);
    let d2 = tape.add_scalar(d2, c2);
    let den = tape.mul(d1, d2);
    tape.div(num, den)
}

/// Mean of `1 - SSIM` over every patch and color channel. `rendered`
/// holds the patch pixels as consecutive `k*k` row-major blocks,
/// `[n_patches * k * k, 3]`; `truth` is the matching constant.
pub fn ssim_loss_on_tape<T: Scalar>(
    tape: &mut Tape<T>,
    rendered: Var,
    truth: Var,
    k: usize,
    n_patches: usize,
) -> Result<Var, LossError> {
    if n_patches == 0 {
        return Err(LossError::WrongBatchKind(
            "SSIM loss needs at least one patch batch".into(),
        ));
    }
    let mut terms = Vec::with_capacity(n_patches * 3);
    for p in 0..n_patches {
        let x_block = tape.slice(rendered, 0, p * k * k, k * k);
        let y_block = tape.slice(truth, 0, p * k * k, k * k);
        for c in 0..3 {
            let xc0 = tape.slice(x_block, 1, c, 1);
            let xc = tape.reshape(xc0, vec![k * k]);
            let yc0 = tape.slice(y_block, 1, c, 1);
            let yc = tape.reshape(yc0, vec![k * k]);
            let s = ssim_on_tape(tape, xc, yc, k);
            let neg = tape.neg(s);
            terms.push(tape.add_scalar(neg, T::one()));
        }
    }
    let stacked = tape.concat(&terms, 0);
    Ok(tape.mean(stacked))
}

// ---- ray batches ----------------------------------------------------------

/// Pixels drawn from one image for a training step: `n_random` random
/// pixels followed by zero or more contiguous `patch_size^2` blocks.
#[derive(Clone, Debug)]
pub struct RayBatch {
    pub image_index: usize,
    /// All sampled pixel coordinates, random pixels first, then each
    /// patch in row-major order.
    pub pixels: Vec<(u32, u32)>,
    pub n_random: usize,
    pub patch_size: usize,
    pub patch_origins: Vec<(u32, u32)>,
    /// Ground-truth colors for `pixels`, interleaved RGB.
    pub gt_colors: Vec<f64>,
}

impl RayBatch {
    pub fn n_rays(&self) -> usize {
        self.pixels.len()
    }

    pub fn has_patches(&self) -> bool {
        !self.patch_origins.is_empty()
    }

    /// Index of the first patch pixel inside `pixels`.
    pub fn patch_start(&self) -> usize {
        self.n_random
    }
}

/// Draw a training batch: `rays` random pixels, and when `with_patches`
/// is set, half the budget is redirected to contiguous patches of
/// `patch_size^2` pixels (at least one patch).
pub fn sample_ray_batch(
    rng: &mut ChaCha8Rng,
    image: &ImageBuf<f64>,
    image_index: usize,
    rays: usize,
    with_patches: bool,
    patch_size: usize,
) -> RayBatch {
    let (w, h) = (image.width as u32, image.height as u32);
    let k = patch_size.min(image.width).min(image.height);
    let (n_random, n_patches) = if with_patches {
        let budget = rays / 2;
        (rays - budget, (budget / (k * k)).max(1))
    } else {
        (rays, 0)
    };

    let mut pixels = Vec::with_capacity(n_random + n_patches * k * k);
    for _ in 0..n_random {
        pixels.push((rng.gen_range(0..w), rng.gen_range(0..h)));
    }
    let mut patch_origins = Vec::with_capacity(n_patches);
    for _ in 0..n_patches {
        let ox = rng.gen_range(0..=(w - k as u32));
        let oy = rng.gen_range(0..=(h - k as u32));
        patch_origins.push((ox, oy));
        for py in 0..k as u32 {
            for px in 0..k as u32 {
                pixels.push((ox + px, oy + py));
            }
        }
    }
    let gt_colors = pixels
        .iter()
        .flat_map(|&(x, y)| image.get_pixel(x as usize, y as usize))
        .collect();
    RayBatch {
        image_index,
        pixels,
        n_random,
        patch_size: k,
        patch_origins,
        gt_colors,
    }
}

//! Differentiable volumetric rendering: stratified ray sampling and the
//! discrete transmittance quadrature.
//!
//! For samples `h_0 < .. < h_{n-1}` with spacings `delta_i` the renderer
//! computes `alpha_i = 1 - exp(-sigma_i delta_i)`, transmittance
//! `T_i = prod_{j<i}(1 - alpha_j)` (evaluated as `exp` of an exclusive
//! prefix sum, which is the same product exactly), weights
//! `w_i = T_i alpha_i` and color `sum_i w_i c_i`. The weights and the
//! final transmittance always sum to one.

use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Tensor, Var};
use crate::camera::{focal_of, pixel_to_ray, CameraGroup, FocalBank, Ray};
use crate::data::ImageBuf;
use crate::field::RadianceField;
use crate::geometry::PoseSE3;
use crate::nn::Binding;
use crate::scalar::Scalar;

/// Ascending sample distances along one ray.
#[derive(Clone, Debug)]
pub struct RaySamples<T> {
    pub distances: Vec<T>,
    pub jittered: bool,
}

/// Stratified sampling: bin `i` spans
/// `[near + i*delta, near + (i+1)*delta]` with `delta = (far-near)/n`;
/// midpoints when `jitter` is off, one uniform draw per bin when on.
pub fn sample_ray<T: Scalar>(
    ray: &Ray<T>,
    n: usize,
    jitter: bool,
    rng: &mut ChaCha8Rng,
) -> RaySamples<T> {
    assert!(n >= 2, "need at least 2 samples per ray");
    let span = ray.far - ray.near;
    let delta = span / T::of_usize(n);
    let distances = (0..n)
        .map(|i| {
            let offset = if jitter {
                T::of_f64(rand::Rng::gen_range(rng, 0.0..1.0))
            } else {
                T::of_f64(0.5)
            };
            ray.near + delta * (T::of_usize(i) + offset)
        })
        .collect();
    RaySamples {
        distances,
        jittered: jitter,
    }
}

/// Spacings between consecutive samples; the last spacing closes the
/// interval to `far`.
pub fn sample_deltas<T: Scalar>(distances: &[T], far: T) -> Vec<T> {
    let n = distances.len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n - 1 {
        out.push(distances[i + 1] - distances[i]);
    }
    out.push(far - distances[n - 1]);
    out
}

/// Value snapshot of one rendered ray.
#[derive(Clone, Debug)]
pub struct RenderResult<T> {
    pub color: [T; 3],
    pub weights: Vec<T>,
    pub transmittance_residual: T,
}

/// Tape handles for a batch of rendered rays.
pub struct RenderVars {
    /// `[n, 3]`
    pub color: Var,
    /// `[n, s]`
    pub weights: Var,
    /// `[n, 1]` transmittance left after the last sample.
    pub residual: Var,
}

/// Differentiable compositing of per-sample densities `[n, s]` and
/// colors `[n, s, 3]` with spacings `[n, s]`.
pub fn composite_on_tape<T: Scalar>(
    tape: &mut Tape<T>,
    sigma: Var,
    rgb: Var,
    deltas: Var,
    white_background: bool,
) -> RenderVars {
    let shape = tape.value(sigma).shape().to_vec();
    let (n, s) = (shape[0], shape[1]);
    let tau = tape.mul(sigma, deltas);
    let tau_excl = tape.cumsum_exclusive(tau);
    let neg_excl = tape.neg(tau_excl);
    let trans = tape.exp(neg_excl);
    let neg_tau = tape.neg(tau);
    let exp_neg_tau = tape.exp(neg_tau);
    let neg_exp = tape.neg(exp_neg_tau);
    let alpha = tape.add_scalar(neg_exp, T::one());
    let weights = tape.mul(trans, alpha);

    let w3 = tape.reshape(weights, vec![n, s, 1]);
    let weighted = tape.mul(w3, rgb);
    let summed = tape.sum_axis(weighted, 1);
    let mut color = tape.reshape(summed, vec![n, 3]);

    let tau_total = tape.sum_axis(tau, 1);
    let neg_total = tape.neg(tau_total);
    let residual = tape.exp(neg_total);

    if white_background {
        let res3 = tape.broadcast(residual, &[n, 3]);
        color = tape.add(color, res3);
    }

    RenderVars {
        color,
        weights,
        residual,
    }
}

/// Differentiable rendering of a ray batch through the field.
///
/// `origin` is the shared camera center (`[3]`), `dirs` the unit ray
/// directions (`[n, 3]`); `distances` are the per-ray sample positions
/// (constants — gradients flow through directions, not distances).
pub fn render_rays_on_tape<T: Scalar>(
    tape: &mut Tape<T>,
    field: &RadianceField<T>,
    binding: &Binding,
    origin: Var,
    dirs: Var,
    distances: &Tensor<T>,
    far: T,
    white_background: bool,
) -> RenderVars {
    let n = distances.shape()[0];
    let s = distances.shape()[1];
    assert_eq!(tape.value(dirs).shape(), &[n, 3], "one direction per ray");

    let mut deltas = vec![T::zero(); n * s];
    let dist_data = distances.data();
    for r in 0..n {
        let row = &dist_data[r * s..(r + 1) * s];
        let d = sample_deltas(row, far);
        deltas[r * s..(r + 1) * s].copy_from_slice(&d);
    }
    let deltas = tape.constant(Tensor::from_vec(vec![n, s], deltas));
    let h = tape.constant(distances.clone());

    let o3 = tape.reshape(origin, vec![1, 1, 3]);
    let d3 = tape.reshape(dirs, vec![n, 1, 3]);
    let h3 = tape.reshape(h, vec![n, s, 1]);
    let offsets = tape.mul(h3, d3);
    let pts3 = tape.add(offsets, o3);
    let pts = tape.reshape(pts3, vec![n * s, 3]);
    let dirs_rep = tape.broadcast(d3, &[n, s, 3]);
    let dirs_flat = tape.reshape(dirs_rep, vec![n * s, 3]);

    let (density, rgb) = field.forward_on_tape(tape, binding, pts, dirs_flat);
    let sigma = tape.reshape(density, vec![n, s]);
    let rgb3 = tape.reshape(rgb, vec![n, s, 3]);
    composite_on_tape(tape, sigma, rgb3, deltas, white_background)
}

/// Render one ray to a value snapshot. Differentiable variants go
/// through [`render_rays_on_tape`] with the pose and focal as tape vars.
pub fn render_ray<T: Scalar>(
    field: &RadianceField<T>,
    ray: &Ray<T>,
    samples: &RaySamples<T>,
    white_background: bool,
) -> RenderResult<T> {
    let mut tape = Tape::new();
    let binding = field.params.bind(&mut tape);
    let origin = tape.constant(Tensor::from_vec(
        vec![3],
        vec![ray.origin.x, ray.origin.y, ray.origin.z],
    ));
    let dirs = tape.constant(Tensor::from_vec(
        vec![1, 3],
        vec![ray.direction.x, ray.direction.y, ray.direction.z],
    ));
    let distances = Tensor::from_vec(vec![1, samples.distances.len()], samples.distances.clone());
    let out = render_rays_on_tape(
        &mut tape,
        field,
        &binding,
        origin,
        dirs,
        &distances,
        ray.far,
        white_background,
    );
    let c = tape.value(out.color).to_vec();
    RenderResult {
        color: [c[0], c[1], c[2]],
        weights: tape.value(out.weights).to_vec(),
        transmittance_residual: tape.value(out.residual).item(),
    }
}

/// Render every `stride`-th pixel of a view into an image of
/// `ceil(W/stride) x ceil(H/stride)`. Deterministic: sampling is
/// midpoint (no jitter) and each pixel's value is independent of the
/// batch it lands in.
#[allow(clippy::too_many_arguments)]
pub fn render_image<T: Scalar>(
    field: &RadianceField<T>,
    pose: &PoseSE3<T>,
    group: &CameraGroup,
    bank: &FocalBank<T>,
    bounds: (T, T),
    samples_per_ray: usize,
    stride: usize,
    white_background: bool,
) -> ImageBuf<T> {
    assert!(stride >= 1);
    let out_w = group.width.div_ceil(stride);
    let out_h = group.height.div_ceil(stride);
    let mut img = ImageBuf::new(out_w, out_h);
    let (_fx, _fy) = focal_of(bank, group).expect("valid focal");

    let pixel_list: Vec<(usize, usize)> = (0..out_h)
        .flat_map(|oy| (0..out_w).map(move |ox| (ox, oy)))
        .collect();

    const CHUNK: usize = 1024;
    for chunk in pixel_list.chunks(CHUNK) {
        let mut tape = Tape::new();
        let binding = field.params.bind(&mut tape);
        let n = chunk.len();
        let mut dirs = Vec::with_capacity(n * 3);
        let mut origin = [T::zero(); 3];
        let mut distances = Vec::with_capacity(n * samples_per_ray);
        for &(ox, oy) in chunk {
            let (u, v) = ((ox * stride) as f64, (oy * stride) as f64);
            let ray = pixel_to_ray(pose, group, bank, T::of_f64(u), T::of_f64(v), bounds)
                .expect("pixel in bounds");
            dirs.extend_from_slice(&[ray.direction.x, ray.direction.y, ray.direction.z]);
            origin = [ray.origin.x, ray.origin.y, ray.origin.z];
            let span = bounds.1 - bounds.0;
            let delta = span / T::of_usize(samples_per_ray);
            for i in 0..samples_per_ray {
                distances.push(bounds.0 + delta * (T::of_usize(i) + T::of_f64(0.5)));
            }
        }
        let origin = tape.constant(Tensor::from_vec(vec![3], origin.to_vec()));
        let dirs = tape.constant(Tensor::from_vec(vec![n, 3], dirs));
        let distances = Tensor::from_vec(vec![n, samples_per_ray], distances);
        let out = render_rays_on_tape(
            &mut tape,
            field,
            &binding,
            origin,
            dirs,
            &distances,
            bounds.1,
            white_background,
        );
        let colors = tape.value(out.color).data().to_vec();
        for (i, &(ox, oy)) in chunk.iter().enumerate() {
            img.set_pixel(ox, oy, [colors[i * 3], colors[i * 3 + 1], colors[i * 3 + 2]]);
        }
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::seeded_rng;
    use crate::field::FieldConfig;
    use nalgebra::Vector3;
    use proptest::prelude::*;

    /// Independent transmittance-product oracle: walks the samples one
    /// by one, multiplying alpha complements directly.
    fn composite_oracle(
        sigma: &[f64],
        rgb: &[f64],
        deltas: &[f64],
    ) -> ([f64; 3], Vec<f64>, f64) {
        let mut t = 1.0;
        let mut color = [0.0f64; 3];
        let mut weights = Vec::with_capacity(sigma.len());
        for i in 0..sigma.len() {
            let alpha = 1.0 - (-sigma[i] * deltas[i]).exp();
            let w = t * alpha;
            for c in 0..3 {
                color[c] += w * rgb[i * 3 + c];
            }
            weights.push(w);
            t *= 1.0 - alpha;
        }
        (color, weights, t)
    }

    fn run_composite(
        sigma: Vec<f64>,
        rgb: Vec<f64>,
        deltas: Vec<f64>,
        n: usize,
        s: usize,
    ) -> ([f64; 3], Vec<f64>, f64) {
        let mut tape = Tape::<f64>::new();
        let sv = tape.constant(Tensor::from_vec(vec![n, s], sigma));
        let cv = tape.constant(Tensor::from_vec(vec![n, s, 3], rgb));
        let dv = tape.constant(Tensor::from_vec(vec![n, s], deltas));
        let out = composite_on_tape(&mut tape, sv, cv, dv, false);
        let color = tape.value(out.color).to_vec();
        (
            [color[0], color[1], color[2]],
            tape.value(out.weights).to_vec(),
            tape.value(out.residual).item(),
        )
    }

    #[test]
    fn midpoint_sampling_two_bins() {
        let ray = Ray::<f64> {
            origin: Vector3::zeros(),
            direction: Vector3::new(0.0, 0.0, -1.0),
            near: 0.0,
            far: 1.0,
        };
        let mut rng = seeded_rng(0, 0);
        let s = sample_ray(&ray, 2, false, &mut rng);
        assert_eq!(s.distances, vec![0.25, 0.75]);
    }

    #[test]
    fn jittered_samples_stay_in_bins_and_are_deterministic() {
        let ray = Ray::<f64> {
            origin: Vector3::zeros(),
            direction: Vector3::new(0.0, 0.0, -1.0),
            near: 2.0,
            far: 6.0,
        };
        let mut rng = seeded_rng(5, 0);
        let a = sample_ray(&ray, 16, true, &mut rng);
        let mut rng = seeded_rng(5, 0);
        let b = sample_ray(&ray, 16, true, &mut rng);
        assert_eq!(a.distances, b.distances);
        let delta = 4.0 / 16.0;
        for (i, &d) in a.distances.iter().enumerate() {
            let lo = 2.0 + i as f64 * delta;
            assert!((lo..lo + delta).contains(&d), "sample {i} = {d}");
        }
    }

    #[test]
    fn stratified_spacing_statistics() {
        let ray = Ray::<f64> {
            origin: Vector3::zeros(),
            direction: Vector3::new(0.0, 0.0, -1.0),
            near: 2.0,
            far: 6.0,
        };
        let mut rng = seeded_rng(0, 0);
        let s = sample_ray(&ray, 128, false, &mut rng);
        assert_eq!(s.distances.len(), 128);
        let expected_delta = 4.0 / 128.0; // 1/32
        for w in s.distances.windows(2) {
            assert!((w[1] - w[0] - expected_delta).abs() < 1e-12);
        }
        assert!((s.distances[0] - (2.0 + expected_delta / 2.0)).abs() < 1e-12);
    }

    #[test]
    fn empty_space_renders_black() {
        let (color, weights, residual) =
            run_composite(vec![0.0; 8], vec![0.5; 24], vec![0.5; 8], 1, 8);
        assert_eq!(color, [0.0, 0.0, 0.0]);
        assert!(weights.iter().all(|&w| w == 0.0));
        assert_eq!(residual, 1.0);
    }

    #[test]
    fn opaque_sample_dominates() {
        // single sample with sigma*delta = 20 and red color
        let mut sigma = vec![0.0; 8];
        sigma[3] = 40.0;
        let mut rgb = vec![0.0; 24];
        rgb[9] = 1.0; // red channel of sample 3
        let deltas = vec![0.5; 8];
        let (color, _, residual) = run_composite(sigma, rgb, deltas, 1, 8);
        assert!((color[0] - (1.0 - (-20.0f64).exp())).abs() < 1e-6);
        assert!(color[0] > 1.0 - 1e-6);
        assert!(color[1] == 0.0 && color[2] == 0.0);
        assert!(residual < 1e-8);
    }

    #[test]
    fn matches_transmittance_product_oracle() {
        let mut rng = seeded_rng(42, 9);
        for _ in 0..200 {
            let s = 16;
            let sigma: Vec<f64> = (0..s).map(|_| rand::Rng::gen_range(&mut rng, 0.0..8.0)).collect();
            let rgb: Vec<f64> = (0..s * 3).map(|_| rand::Rng::gen_range(&mut rng, 0.0..1.0)).collect();
            let deltas: Vec<f64> = (0..s).map(|_| rand::Rng::gen_range(&mut rng, 0.01..0.5)).collect();
            let (color, weights, residual) =
                run_composite(sigma.clone(), rgb.clone(), deltas.clone(), 1, s);
            let (oc, ow, ot) = composite_oracle(&sigma, &rgb, &deltas);
            for c in 0..3 {
                assert!((color[c] - oc[c]).abs() < 1e-10);
            }
            for i in 0..s {
                assert!((weights[i] - ow[i]).abs() < 1e-10);
            }
            assert!((residual - ot).abs() < 1e-10);
        }
    }

    #[test]
    fn monotonicity_in_density() {
        let mut rng = seeded_rng(11, 2);
        let s = 12;
        let sigma: Vec<f64> = (0..s).map(|_| rand::Rng::gen_range(&mut rng, 0.0..4.0)).collect();
        let rgb = vec![0.5; s * 3];
        let deltas = vec![0.25; s];
        let (_, w_base, _) = run_composite(sigma.clone(), rgb.clone(), deltas.clone(), 1, s);
        let alpha = |sig: f64, d: f64| 1.0 - (-sig * d).exp();
        for i in [2usize, 7] {
            let mut bumped = sigma.clone();
            bumped[i] += 1.5;
            let (_, w_bump, _) = run_composite(bumped.clone(), rgb.clone(), deltas.clone(), 1, s);
            assert!(alpha(bumped[i], deltas[i]) >= alpha(sigma[i], deltas[i]));
            // transmittance past i never increases; weights before i unchanged
            for j in 0..i {
                assert!((w_bump[j] - w_base[j]).abs() < 1e-12);
            }
            let t_base: f64 = 1.0 - w_base[..=i].iter().sum::<f64>();
            let t_bump: f64 = 1.0 - w_bump[..=i].iter().sum::<f64>();
            assert!(t_bump <= t_base + 1e-12);
        }
    }

    proptest! {
        #[test]
        fn weight_simplex_invariant(seed in 0u64..500) {
            let mut rng = seeded_rng(seed, 31);
            let s = 10;
            let sigma: Vec<f64> = (0..s).map(|_| rand::Rng::gen_range(&mut rng, 0.0..50.0)).collect();
            let rgb: Vec<f64> = vec![0.3; s * 3];
            let deltas: Vec<f64> = (0..s).map(|_| rand::Rng::gen_range(&mut rng, 0.001..1.0)).collect();
            let (_, weights, residual) = run_composite(sigma, rgb, deltas, 1, s);
            prop_assert!(weights.iter().all(|&w| w >= 0.0));
            let total: f64 = weights.iter().sum::<f64>() + residual;
            prop_assert!((total - 1.0).abs() < 1e-6, "sum {total}");
            prop_assert!(weights.iter().sum::<f64>() <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn render_ray_with_zeroed_density_is_black() {
        let mut field = RadianceField::<f64>::new(
            FieldConfig {
                width: 8,
                depth: 2,
                skip_at: 1,
                pos_bands: 2,
                pos_sigma: 4.0,
                dir_bands: 1,
                dir_sigma: 2.0,
                include_input: true,
            },
            3,
        );
        // zero the density head (weights and the fog bias) so sigma == 0
        for name in ["density.w", "density.b"] {
            let idx = field.params.names().iter().position(|n| n == name).unwrap();
            let shape = field.params.tensors()[idx].shape().to_vec();
            field.params.tensors_mut()[idx] = Tensor::zeros(shape);
        }
        let ray = Ray {
            origin: Vector3::new(0.0, 0.0, 0.0),
            direction: Vector3::new(0.0, 0.0, -1.0),
            near: 2.0,
            far: 6.0,
        };
        let mut rng = seeded_rng(0, 0);
        let samples = sample_ray(&ray, 8, false, &mut rng);
        let out = render_ray(&field, &ray, &samples, false);
        assert_eq!(out.color, [0.0, 0.0, 0.0]);
        assert_eq!(out.transmittance_residual, 1.0);
        // and with a white background the same ray is white
        let out_white = render_ray(&field, &ray, &samples, true);
        assert_eq!(out_white.color, [1.0, 1.0, 1.0]);
    }

    #[test]
    fn render_image_stride_consistency() {
        let field = RadianceField::<f64>::new(
            FieldConfig {
                width: 8,
                depth: 2,
                skip_at: 1,
                pos_bands: 2,
                pos_sigma: 4.0,
                dir_bands: 1,
                dir_sigma: 2.0,
                include_input: true,
            },
            19,
        );
        let group = CameraGroup::new(0, 12, 8).unwrap();
        let bank = FocalBank::new(1);
        let pose = PoseSE3::identity();
        let full = render_image(&field, &pose, &group, &bank, (2.0, 6.0), 6, 1, false);
        let quarter = render_image(&field, &pose, &group, &bank, (2.0, 6.0), 6, 4, false);
        assert_eq!(quarter.width, 3);
        assert_eq!(quarter.height, 2);
        for oy in 0..quarter.height {
            for ox in 0..quarter.width {
                assert_eq!(quarter.get_pixel(ox, oy), full.get_pixel(ox * 4, oy * 4));
            }
        }
    }
}

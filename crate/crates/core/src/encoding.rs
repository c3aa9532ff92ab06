//! Input feature mappings: deterministic positional encoding and
//! randomized Gaussian Fourier features.
//!
//! Both lift a low-dimensional input to a bank of sinusoids. The
//! positional encoding uses the geometric frequency ladder
//! `2*pi*sigma^(j/m)`; the Gaussian map projects through a fixed random
//! matrix `B` with entries from `N(0, sigma^2)`. The scene MLP consumes
//! positional encodings of position and view direction; the pose network
//! consumes either mapping of the normalized image index.

use num_traits::Float;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::autodiff::{Tape, Tensor, Var};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum EncodingError {
    #[error("dimension mismatch: expected input of dim {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Deterministic sinusoidal encoding (frequencies `2*pi*sigma^(j/m)`,
/// `j = 0..m-1`), concatenating cos then sin blocks, optionally preceded
/// by the raw input.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PositionalEncoding {
    pub m: usize,
    pub sigma: f64,
    pub include_input: bool,
}

impl PositionalEncoding {
    pub fn new(m: usize, sigma: f64, include_input: bool) -> Self {
        PositionalEncoding {
            m,
            sigma,
            include_input,
        }
    }

    /// Output dimension for an input of dimension `d`.
    pub fn output_dim(&self, d: usize) -> usize {
        2 * self.m * d + if self.include_input { d } else { 0 }
    }

    pub fn frequency(&self, j: usize) -> f64 {
        2.0 * std::f64::consts::PI * self.sigma.powf(j as f64 / self.m as f64)
    }
}

/// Encode a single vector: `[v?, cos(f_0 v), .., cos(f_{m-1} v),
/// sin(f_0 v), .., sin(f_{m-1} v)]`.
pub fn encode_positional<T: Scalar>(enc: &PositionalEncoding, v: &[T]) -> Vec<T> {
    let d = v.len();
    let mut out = Vec::with_capacity(enc.output_dim(d));
    if enc.include_input {
        out.extend_from_slice(v);
    }
    for j in 0..enc.m {
        let f = T::of_f64(enc.frequency(j));
        for &x in v {
            out.push(Float::cos(f * x));
        }
    }
    for j in 0..enc.m {
        let f = T::of_f64(enc.frequency(j));
        for &x in v {
            out.push(Float::sin(f * x));
        }
    }
    out
}

/// Tape version of [`encode_positional`] over a batch `[n, d]`,
/// differentiable w.r.t. the input rows.
pub fn encode_positional_on_tape<T: Scalar>(
    tape: &mut Tape<T>,
    enc: &PositionalEncoding,
    v: Var,
) -> Var {
    let freqs: Vec<T> = (0..enc.m).map(|j| T::of_f64(enc.frequency(j))).collect();
    tape.posenc(v, &freqs, enc.include_input)
}

/// Random Fourier feature map `v -> [cos(2 pi B v), sin(2 pi B v)]` with
/// `B` an `m x d` matrix of `N(0, sigma^2)` entries, fixed at
/// construction (not trained) and fully determined by the seed.
#[derive(Clone, Debug)]
pub struct GaussianFourierMap<T: Scalar> {
    b: Tensor<T>,
    pub m: usize,
    pub d: usize,
    pub sigma: f64,
    pub seed: u64,
}

impl<T: Scalar> GaussianFourierMap<T> {
    pub fn new(m: usize, d: usize, sigma: f64, seed: u64) -> Self {
        let normal = Normal::new(0.0, sigma).expect("finite sigma");
        let mut seed_bytes = [0u8; 32];
        seed_bytes[..8].copy_from_slice(&seed.to_le_bytes());
        seed_bytes[8..16].copy_from_slice(&0xfeed_f0f0_1234_5678u64.to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(seed_bytes);
        let data = (0..m * d)
            .map(|_| T::of_f64(normal.sample(&mut rng)))
            .collect();
        GaussianFourierMap {
            b: Tensor::from_vec(vec![m, d], data),
            m,
            d,
            sigma,
            seed,
        }
    }

    pub fn matrix(&self) -> &Tensor<T> {
        &self.b
    }

    pub fn output_dim(&self) -> usize {
        2 * self.m
    }
}

/// Encode a single vector of dimension `d`: length-`2m` feature
/// `[cos(2 pi B v), sin(2 pi B v)]`.
pub fn encode_gaussian<T: Scalar>(
    map: &GaussianFourierMap<T>,
    v: &[T],
) -> Result<Vec<T>, EncodingError> {
    if v.len() != map.d {
        return Err(EncodingError::DimensionMismatch {
            expected: map.d,
            got: v.len(),
        });
    }
    let two_pi = T::of_f64(2.0 * std::f64::consts::PI);
    let b = map.b.data();
    let mut phases = Vec::with_capacity(map.m);
    for row in 0..map.m {
        let mut acc = T::zero();
        for (k, &x) in v.iter().enumerate() {
            acc += b[row * map.d + k] * x;
        }
        phases.push(two_pi * acc);
    }
    let mut out = Vec::with_capacity(2 * map.m);
    out.extend(phases.iter().map(|&p| Float::cos(p)));
    out.extend(phases.iter().map(|&p| Float::sin(p)));
    Ok(out)
}

/// Tape version of [`encode_gaussian`] over a batch `[n, d]`.
pub fn encode_gaussian_on_tape<T: Scalar>(
    tape: &mut Tape<T>,
    map: &GaussianFourierMap<T>,
    v: Var,
) -> Var {
    let bt = {
        // B^T as a constant [d, m]
        let b = map.b.data();
        let mut data = vec![T::zero(); map.d * map.m];
        for r in 0..map.m {
            for c in 0..map.d {
                data[c * map.m + r] = b[r * map.d + c];
            }
        }
        tape.constant(Tensor::from_vec(vec![map.d, map.m], data))
    };
    let proj = tape.matmul(v, bt);
    let phases = tape.scale(proj, T::of_f64(2.0 * std::f64::consts::PI));
    let c = tape.cos(phases);
    let s = tape.sin(phases);
    tape.concat(&[c, s], 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn positional_zero_input() {
        let enc = PositionalEncoding::new(4, 10.0, false);
        let out = encode_positional(&enc, &[0.0f64, 0.0]);
        assert_eq!(out.len(), 16);
        assert!(out[..8].iter().all(|&x| x == 1.0));
        assert!(out[8..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn positional_first_band_quarter_period() {
        // m=1: only j=0, frequency 2*pi; v=0.25 -> phase pi/2.
        let enc = PositionalEncoding::new(1, 7.0, false);
        let out = encode_positional(&enc, &[0.25f64]);
        assert!(out[0].abs() < 1e-15, "cos(pi/2) = 0, got {}", out[0]);
        assert!((out[1] - 1.0).abs() < 1e-15, "sin(pi/2) = 1, got {}", out[1]);
    }

    #[test]
    fn positional_output_dim_with_input() {
        let enc = PositionalEncoding::new(10, 1024.0, true);
        assert_eq!(enc.output_dim(3), 63);
        assert_eq!(encode_positional(&enc, &[0.1f64, 0.2, 0.3]).len(), 63);
    }

    #[test]
    fn positional_gradient_matches_finite_differences() {
        let enc = PositionalEncoding::new(3, 5.0, true);
        let eval = |x: f64| -> (f64, f64) {
            let mut tape = Tape::<f64>::new();
            let v = tape.var(Tensor::from_vec(vec![1, 1], vec![x]));
            let e = encode_positional_on_tape(&mut tape, &enc, v);
            let sq = tape.square(e);
            let loss = tape.sum(sq);
            let grads = tape.backward(loss);
            (tape.value(loss).item(), grads.get(v).unwrap().item())
        };
        let x = 0.3721;
        let (_, g) = eval(x);
        let h = 1e-7;
        let fd = (eval(x + h).0 - eval(x - h).0) / (2.0 * h);
        assert!((g - fd).abs() / fd.abs().max(1e-9) < 1e-6, "{g} vs {fd}");
    }

    #[test]
    fn positional_tape_matches_plain_layout() {
        let enc = PositionalEncoding::new(5, 30.0, true);
        let vs = [0.31f64, -0.77, 1.9];
        let plain = encode_positional(&enc, &vs);
        let mut tape = Tape::<f64>::new();
        let v = tape.constant(Tensor::from_vec(vec![1, 3], vs.to_vec()));
        let e = encode_positional_on_tape(&mut tape, &enc, v);
        assert_eq!(tape.value(e).shape(), &[1, enc.output_dim(3)]);
        for (a, b) in plain.iter().zip(tape.value(e).data()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn gaussian_zero_input_is_ones_then_zeros() {
        let map = GaussianFourierMap::<f64>::new(8, 2, 10.0, 3);
        let out = encode_gaussian(&map, &[0.0, 0.0]).unwrap();
        assert!(out[..8].iter().all(|&x| x == 1.0));
        assert!(out[8..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn gaussian_deterministic_given_seed() {
        let a = GaussianFourierMap::<f64>::new(16, 1, 10.0, 99);
        let b = GaussianFourierMap::<f64>::new(16, 1, 10.0, 99);
        assert_eq!(a.matrix().to_vec(), b.matrix().to_vec());
        let va = encode_gaussian(&a, &[0.37]).unwrap();
        let vb = encode_gaussian(&b, &[0.37]).unwrap();
        assert_eq!(va, vb);
        let c = GaussianFourierMap::<f64>::new(16, 1, 10.0, 100);
        assert_ne!(a.matrix().to_vec(), c.matrix().to_vec());
    }

    #[test]
    fn gaussian_dimension_mismatch() {
        let map = GaussianFourierMap::<f64>::new(4, 2, 1.0, 0);
        assert!(matches!(
            encode_gaussian(&map, &[1.0]),
            Err(EncodingError::DimensionMismatch { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn gaussian_matrix_variance_in_chi2_band() {
        // sigma=10, m=128, d=1: sample variance of B entries must sit in
        // the 99% chi-square band [70, 135] for 128 draws of N(0, 100).
        for seed in [1u64, 7, 42, 1234, 99999] {
            let map = GaussianFourierMap::<f64>::new(128, 1, 10.0, seed);
            let data = map.matrix().data();
            let mean: f64 = data.iter().sum::<f64>() / 128.0;
            let var: f64 = data.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / 128.0;
            assert!(
                (70.0..=135.0).contains(&var),
                "seed {seed}: sample variance {var} outside band"
            );
        }
    }

    #[test]
    fn gaussian_tape_matches_plain() {
        let map = GaussianFourierMap::<f64>::new(12, 2, 4.0, 5);
        let v = [0.21, -0.73];
        let plain = encode_gaussian(&map, &v).unwrap();
        let mut tape = Tape::<f64>::new();
        let vv = tape.constant(Tensor::from_vec(vec![1, 2], v.to_vec()));
        let e = encode_gaussian_on_tape(&mut tape, &map, vv);
        let tape_out = tape.value(e).to_vec();
        for (a, b) in plain.iter().zip(tape_out.iter()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    proptest! {
        #[test]
        fn gaussian_rows_satisfy_pythagorean_identity(x in -2.0f64..2.0) {
            let map = GaussianFourierMap::<f64>::new(16, 1, 10.0, 8);
            let out = encode_gaussian(&map, &[x]).unwrap();
            for i in 0..16 {
                let s = out[i] * out[i] + out[16 + i] * out[16 + i];
                prop_assert!((s - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn positional_lipschitz_bound(a in -1.0f64..1.0, b in -1.0f64..1.0) {
            // |gamma(a) - gamma(b)| <= 2*pi*f_max * sqrt(2m) * |a-b|
            // componentwise: each sinusoid is (2*pi*f_j)-Lipschitz.
            let enc = PositionalEncoding::new(6, 10.0, false);
            let ea = encode_positional(&enc, &[a]);
            let eb = encode_positional(&enc, &[b]);
            for j in 0..6 {
                let l = enc.frequency(j);
                prop_assert!((ea[j] - eb[j]).abs() <= l * (a - b).abs() + 1e-12);
                prop_assert!((ea[6 + j] - eb[6 + j]).abs() <= l * (a - b).abs() + 1e-12);
            }
        }

        #[test]
        fn gaussian_lipschitz_bound(a in -1.0f64..1.0, b in -1.0f64..1.0) {
            let map = GaussianFourierMap::<f64>::new(8, 1, 10.0, 77);
            let ea = encode_gaussian(&map, &[a]).unwrap();
            let eb = encode_gaussian(&map, &[b]).unwrap();
            let bm = map.matrix().data();
            for i in 0..8 {
                let l = 2.0 * std::f64::consts::PI * bm[i].abs();
                prop_assert!((ea[i] - eb[i]).abs() <= l * (a - b).abs() + 1e-12);
                prop_assert!((ea[8 + i] - eb[8 + i]).abs() <= l * (a - b).abs() + 1e-12);
            }
        }
    }
}

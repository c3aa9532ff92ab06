//! Parameter initialization.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::tensor::Tensor;
use crate::scalar::Scalar;

/// Counter-based RNG seeded from a base seed and a stream id, so every
/// consumer (layer, dataset, map) gets an independent deterministic
/// stream regardless of construction order.
pub fn seeded_rng(base: u64, stream: u64) -> ChaCha8Rng {
    let mut seed = [0u8; 32];
    seed[..8].copy_from_slice(&base.to_le_bytes());
    seed[8..16].copy_from_slice(&stream.to_le_bytes());
    seed[16..24].copy_from_slice(&0x9e37_79b9_7f4a_7c15u64.to_le_bytes());
    ChaCha8Rng::from_seed(seed)
}

/// Kaiming-normal weight tensor of shape `[fan_in, fan_out]`:
/// entries drawn i.i.d. from N(0, 2/fan_in). Deterministic given `seed`.
///
/// `fan_in` must be at least 1.
pub fn kaiming_init<T: Scalar>(fan_in: usize, fan_out: usize, seed: u64) -> Tensor<T> {
    assert!(fan_in >= 1, "kaiming_init requires fan_in >= 1");
    let std = (2.0 / fan_in as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("finite std");
    let mut rng = seeded_rng(seed, 0);
    let data = (0..fan_in * fan_out)
        .map(|_| T::of_f64(normal.sample(&mut rng)))
        .collect();
    Tensor::from_vec(vec![fan_in, fan_out], data)
}

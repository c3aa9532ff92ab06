//! Scalar abstraction: all numeric code in this crate is generic over a
//! floating-point type, instantiated at `f32` (training default) or `f64`
//! (oracles, gradient checks, evaluation).

use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Element type tag carried by checkpoints and reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    pub fn code(self) -> u8 {
        match self {
            Dtype::F32 => 0,
            Dtype::F64 => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Dtype::F32),
            1 => Some(Dtype::F64),
            _ => None,
        }
    }

    pub fn size_bytes(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

impl Display for Dtype {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Dtype::F32 => write!(f, "f32"),
            Dtype::F64 => write!(f, "f64"),
        }
    }
}

/// Floating-point scalar usable everywhere in the crate.
///
/// `nalgebra::RealField` is required so geometry code can run SVD and
/// trigonometry through nalgebra at the same precision.
pub trait Scalar:
    num_traits::Float
    + num_traits::NumAssign
    + nalgebra::RealField
    + Copy
    + Default
    + Debug
    + Display
    + Sum
    + Send
    + Sync
    + 'static
{
    const DTYPE: Dtype;

    fn of_f64(x: f64) -> Self;
    fn to_f64_lossy(self) -> f64;
    fn of_usize(n: usize) -> Self {
        Self::of_f64(n as f64)
    }
    fn to_le_byte_vec(values: &[Self]) -> Vec<u8>;
    fn from_le_byte_slice(bytes: &[u8]) -> Vec<Self>;
}

impl Scalar for f32 {
    const DTYPE: Dtype = Dtype::F32;

    #[inline(always)]
    fn of_f64(x: f64) -> Self {
        x as f32
    }

    #[inline(always)]
    fn to_f64_lossy(self) -> f64 {
        self as f64
    }

    fn to_le_byte_vec(values: &[Self]) -> Vec<u8> {
        values.iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    fn from_le_byte_slice(bytes: &[u8]) -> Vec<Self> {
        bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect()
    }
}

impl Scalar for f64 {
    const DTYPE: Dtype = Dtype::F64;

    #[inline(always)]
    fn of_f64(x: f64) -> Self {
        x
    }

    #[inline(always)]
    fn to_f64_lossy(self) -> f64 {
        self
    }

    fn to_le_byte_vec(values: &[Self]) -> Vec<u8> {
        values.iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    fn from_le_byte_slice(bytes: &[u8]) -> Vec<Self> {
        bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect()
    }
}

//! Joint optimization of a neural radiance field with per-image camera
//! poses and per-camera-group focal lengths, trained end to end from
//! images alone.
//!
//! The crate is organized around a small reverse-mode autodiff engine
//! ([`autodiff`]) on which the scene MLP ([`field`]), the pose network
//! ([`posenet`]) and the learnable focal bank ([`camera::FocalBank`]) are
//! built. [`training`] runs the joint optimization loop; [`data`] loads
//! datasets from disk and generates synthetic scenes with exact ground
//! truth; [`geometry`] provides SE(3)/Sim(3) math and trajectory-error
//! metrics.
//!
//! All numeric code is generic over the scalar type (`f32` or `f64`);
//! see [`Scalar`]. Training defaults to `f32`, oracles and gradient
//! checks run at `f64`.

pub mod autodiff;
pub mod camera;
pub mod checkpoint;
pub mod data;
pub mod encoding;
pub mod field;
pub mod geometry;
mod lie;
pub mod losses;
pub mod metrics;
pub mod nn;
pub mod posenet;
pub mod render;
pub mod scalar;
pub mod training;

pub use scalar::{Dtype, Scalar};

pub type Tensor32 = autodiff::Tensor<f32>;
pub type Tensor64 = autodiff::Tensor<f64>;
pub type Pose = geometry::PoseSE3<f64>;
pub type Rotation = geometry::Rotation3<f64>;
pub type Twist = geometry::Twist6<f64>;
pub type Similarity = geometry::Sim3<f64>;

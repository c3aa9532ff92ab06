//! Pinhole camera model: per-camera-group learnable focal scales and
//! pixel-to-ray generation.
//!
//! The viewing convention is -z forward, principal point fixed at the
//! image center, pixel centers at half-integer offsets. Focal lengths
//! derive from a learnable scale `s` per camera group as `f_x = s^2 W`,
//! `f_y = s^2 H`, so each group's intrinsics are independent.

use nalgebra::Vector3;
use num_traits::Float;
use thiserror::Error;

use crate::autodiff::{Tape, Tensor, Var};
use crate::geometry::PoseSE3;
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum CameraError {
    #[error("unknown camera group {0}")]
    UnknownGroup(usize),
    #[error("degenerate focal length {focal} for group {group} (scale {scale})")]
    DegenerateFocal { group: usize, focal: f64, scale: f64 },
    #[error("pixel ({u}, {v}) outside {width}x{height} image")]
    OutOfBounds { u: f64, v: f64, width: usize, height: usize },
    #[error("invalid camera group: {0}")]
    InvalidGroup(String),
}

/// One camera (resolution class) in a multi-camera capture.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct CameraGroup {
    pub id: usize,
    pub width: usize,
    pub height: usize,
}

impl CameraGroup {
    pub fn new(id: usize, width: usize, height: usize) -> Result<Self, CameraError> {
        if width < 2 || height < 2 {
            return Err(CameraError::InvalidGroup(format!(
                "group {id}: dimensions {width}x{height} must be at least 2x2"
            )));
        }
        Ok(CameraGroup { id, width, height })
    }
}

/// Learnable focal scale per camera group. The stored parameter is the
/// square root of the focal multiplier; deriving `f = s^2 * dim` keeps
/// the focal positive and gives smoother optimization than learning `f`
/// directly.
#[derive(Clone, Debug)]
pub struct FocalBank<T: Scalar> {
    scales: Tensor<T>,
}

impl<T: Scalar> FocalBank<T> {
    /// Every scale starts at 1.0, i.e. `f_x = W`, `f_y = H`.
    pub fn new(n_groups: usize) -> Self {
        FocalBank {
            scales: Tensor::full(vec![n_groups], T::one()),
        }
    }

    /// Initialize scales so the bank reproduces the given per-group
    /// `f_x` values: `s = sqrt(f_x / W)`.
    pub fn from_focals(groups: &[CameraGroup], fx: &[f64]) -> Self {
        assert_eq!(groups.len(), fx.len(), "one focal per group");
        let data = groups
            .iter()
            .zip(fx.iter())
            .map(|(g, &f)| T::of_f64((f / g.width as f64).sqrt()))
            .collect();
        FocalBank {
            scales: Tensor::from_vec(vec![groups.len()], data),
        }
    }

    pub fn n_groups(&self) -> usize {
        self.scales.numel()
    }

    pub fn scales(&self) -> &Tensor<T> {
        &self.scales
    }

    pub fn scales_mut(&mut self) -> &mut Tensor<T> {
        &mut self.scales
    }

    pub fn set_scales(&mut self, scales: Tensor<T>) {
        assert_eq!(scales.numel(), self.scales.numel());
        self.scales = scales;
    }

    pub fn scale_of(&self, group: usize) -> Option<T> {
        self.scales.data().get(group).copied()
    }
}

/// Derived focal lengths in pixels for `group`: `(s^2 W, s^2 H)`.
pub fn focal_of<T: Scalar>(
    bank: &FocalBank<T>,
    group: &CameraGroup,
) -> Result<(T, T), CameraError> {
    let s = bank
        .scale_of(group.id)
        .ok_or(CameraError::UnknownGroup(group.id))?;
    let s2 = s * s;
    let fx = s2 * T::of_usize(group.width);
    let fy = s2 * T::of_usize(group.height);
    if !(fx > T::zero()) || !(fy > T::zero()) {
        return Err(CameraError::DegenerateFocal {
            group: group.id,
            focal: fx.to_f64_lossy(),
            scale: s.to_f64_lossy(),
        });
    }
    Ok((fx, fy))
}

/// World-space ray with sampling bounds.
#[derive(Clone, Copy, Debug)]
pub struct Ray<T: Scalar> {
    pub origin: Vector3<T>,
    /// Unit direction.
    pub direction: Vector3<T>,
    pub near: T,
    pub far: T,
}

/// Ray through pixel `(u, v)` (continuous coordinates; integer `u`
/// addresses the pixel whose center is at `u + 0.5`). The camera-space
/// direction is `((u+0.5-W/2)/f_x, -(v+0.5-H/2)/f_y, -1)`, rotated into
/// world space and normalized; the origin is the camera center.
pub fn pixel_to_ray<T: Scalar>(
    pose: &PoseSE3<T>,
    group: &CameraGroup,
    bank: &FocalBank<T>,
    u: T,
    v: T,
    bounds: (T, T),
) -> Result<Ray<T>, CameraError> {
    let (w, h) = (group.width, group.height);
    if u < T::zero() || u >= T::of_usize(w) || v < T::zero() || v >= T::of_usize(h) {
        return Err(CameraError::OutOfBounds {
            u: u.to_f64_lossy(),
            v: v.to_f64_lossy(),
            width: w,
            height: h,
        });
    }
    let (fx, fy) = focal_of(bank, group)?;
    let half = T::of_f64(0.5);
    let dx = (u + half - T::of_usize(w) * half) / fx;
    let dy = -((v + half - T::of_usize(h) * half) / fy);
    let dir_cam = Vector3::new(dx, dy, -T::one());
    let dir_world = pose.rotation.apply(&dir_cam);
    let direction = dir_world / Float::sqrt(dir_world.norm_squared());
    Ok(Ray {
        origin: pose.center(),
        direction,
        near: bounds.0,
        far: bounds.1,
    })
}

/// Differentiable batched ray generation on a tape.
///
/// `rotation`/`translation` come from the pose network (or constants for
/// evaluation); `fx`/`fy` are `[1]` vars from the focal bank. Returns the
/// shared origin (`[3]`) and unit directions (`[n, 3]`); gradients flow
/// into the pose and the focal scale through the directions.
pub fn rays_on_tape<T: Scalar>(
    tape: &mut Tape<T>,
    rotation: Var,
    translation: Var,
    fx: Var,
    fy: Var,
    group: &CameraGroup,
    pixels: &[(u32, u32)],
) -> (Var, Var) {
    let n = pixels.len();
    let half_w = group.width as f64 * 0.5;
    let half_h = group.height as f64 * 0.5;
    let cu: Vec<T> = pixels
        .iter()
        .map(|&(u, _)| T::of_f64(u as f64 + 0.5 - half_w))
        .collect();
    let cv: Vec<T> = pixels
        .iter()
        .map(|&(_, v)| T::of_f64(-(v as f64 + 0.5 - half_h)))
        .collect();
    let cu = tape.constant(Tensor::from_vec(vec![n, 1], cu));
    let cv = tape.constant(Tensor::from_vec(vec![n, 1], cv));
    let dx = tape.div(cu, fx);
    let dy = tape.div(cv, fy);
    let dz = tape.constant(Tensor::full(vec![n, 1], -T::one()));
    let dir_cam = tape.concat(&[dx, dy, dz], 1);
    let r_t = tape.transpose(rotation);
    let dir_world = tape.matmul(dir_cam, r_t);
    let sq = tape.square(dir_world);
    let norm2 = tape.sum_axis(sq, 1);
    let norm = tape.sqrt(norm2);
    let dirs = tape.div(dir_world, norm);
    (translation, dirs)
}

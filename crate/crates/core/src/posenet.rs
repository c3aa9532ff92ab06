//! The pose network: a small Fourier-feature MLP mapping an image index
//! to a 6-DoF camera-to-world pose.
//!
//! The normalized index `i / n_images` is lifted by a Gaussian Fourier
//! map (or positional encoding for the ablation), passed through three
//! GELU layers, and projected to a twist whose exponential is the pose.
//! The final affine layer is zero-initialized so every starting pose is
//! exactly the identity (the -z viewing direction), whatever the encoder
//! seed.

use thiserror::Error;

use crate::autodiff::{adam_step, AdamState, Tape, Tensor, Var};
use crate::encoding::{
    encode_gaussian, encode_positional, GaussianFourierMap, PositionalEncoding,
};
use crate::geometry::{exp_se3, log_se3, PoseSE3, Rotation3, Twist6};
use crate::nn::{Binding, Linear, ParamSet};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum PoseNetError {
    #[error("image index {index} out of range for {n_images} images")]
    IndexOutOfRange { index: usize, n_images: usize },
    #[error("pose target list has {got} entries for {expected} images")]
    TargetCountMismatch { expected: usize, got: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoseEncoderKind {
    Gaussian,
    Positional,
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PoseNetConfig {
    pub encoder: PoseEncoderKind,
    /// Frequency count; embedding size is twice this.
    pub bands: usize,
    pub sigma: f64,
    pub hidden: usize,
}

impl Default for PoseNetConfig {
    fn default() -> Self {
        PoseNetConfig {
            encoder: PoseEncoderKind::Gaussian,
            bands: 128,
            sigma: 10.0,
            hidden: 64,
        }
    }
}

#[derive(Clone, Debug)]
enum Encoder<T: Scalar> {
    Gaussian(GaussianFourierMap<T>),
    Positional(PositionalEncoding),
}

/// Tape handles for one predicted pose.
pub struct PoseVars {
    /// `[3, 3]`
    pub rotation: Var,
    /// `[3]`
    pub translation: Var,
    /// `[6]` twist (omega, v) behind the exponential.
    pub twist: Var,
}

#[derive(Clone, Debug)]
pub struct PoseNet<T: Scalar> {
    pub cfg: PoseNetConfig,
    pub params: ParamSet<T>,
    encoder: Encoder<T>,
    layers: [Linear; 3],
    head: Linear,
    /// Cached per-image embeddings `[n_images, 2*bands]`.
    embeddings: Tensor<T>,
    pub n_images: usize,
}

/// Fit report from [`PoseNet::pretrain_to`]. Failure to reach the
/// tolerances is reported, not raised; the joint optimization can still
/// proceed from whatever fit was achieved.
#[derive(Clone, Debug, serde::Serialize)]
pub struct PretrainReport {
    pub steps_run: u64,
    pub final_loss: f64,
    pub mean_rot_deg: f64,
    pub max_rot_deg: f64,
    pub mean_center_err: f64,
    pub max_center_err: f64,
    pub converged: bool,
}

impl<T: Scalar> PoseNet<T> {
    pub fn new(cfg: PoseNetConfig, n_images: usize, seed: u64) -> Self {
        assert!(n_images >= 1, "pose net needs at least one image");
        let encoder = match cfg.encoder {
            PoseEncoderKind::Gaussian => {
                Encoder::Gaussian(GaussianFourierMap::new(cfg.bands, 1, cfg.sigma, seed))
            }
            PoseEncoderKind::Positional => {
                Encoder::Positional(PositionalEncoding::new(cfg.bands, cfg.sigma, false))
            }
        };
        let emb_dim = 2 * cfg.bands;
        let mut embeddings = Vec::with_capacity(n_images * emb_dim);
        for i in 0..n_images {
            let v = [T::of_f64(i as f64 / n_images as f64)];
            let e = match &encoder {
                Encoder::Gaussian(map) => encode_gaussian(map, &v).expect("dim 1"),
                Encoder::Positional(enc) => encode_positional(enc, &v),
            };
            embeddings.extend(e);
        }
        let embeddings = Tensor::from_vec(vec![n_images, emb_dim], embeddings);

        let mut params = ParamSet::new();
        let layers = [
            Linear::new(&mut params, "pose.0", emb_dim, cfg.hidden, seed ^ 0xa1),
            Linear::new(&mut params, "pose.1", cfg.hidden, cfg.hidden, seed ^ 0xa2),
            Linear::new(&mut params, "pose.2", cfg.hidden, cfg.hidden, seed ^ 0xa3),
        ];
        let head = Linear::zeros(&mut params, "pose.head", cfg.hidden, 6);

        PoseNet {
            cfg,
            params,
            encoder,
            layers,
            head,
            embeddings,
            n_images,
        }
    }

    /// The Gaussian Fourier map behind the embeddings, when that encoder
    /// is active.
    pub fn gaussian_map(&self) -> Option<&GaussianFourierMap<T>> {
        match &self.encoder {
            Encoder::Gaussian(map) => Some(map),
            Encoder::Positional(_) => None,
        }
    }

    /// Twists for every image, `[n_images, 6]`.
    pub fn forward_all_on_tape(&self, tape: &mut Tape<T>, binding: &Binding) -> Var {
        let e = tape.constant(self.embeddings.clone());
        let mut h = e;
        for layer in &self.layers {
            h = layer.forward(tape, binding, h);
            h = tape.gelu(h);
        }
        self.head.forward(tape, binding, h)
    }

    /// Pose of one image as tape vars, differentiable to all MLP
    /// parameters.
    pub fn predict_on_tape(
        &self,
        tape: &mut Tape<T>,
        binding: &Binding,
        index: usize,
    ) -> Result<PoseVars, PoseNetError> {
        if index >= self.n_images {
            return Err(PoseNetError::IndexOutOfRange {
                index,
                n_images: self.n_images,
            });
        }
        let emb_dim = 2 * self.cfg.bands;
        let row = Tensor::from_vec(
            vec![1, emb_dim],
            self.embeddings.data()[index * emb_dim..(index + 1) * emb_dim].to_vec(),
        );
        let mut h = tape.constant(row);
        for layer in &self.layers {
            h = layer.forward(tape, binding, h);
            h = tape.gelu(h);
        }
        let out = self.head.forward(tape, binding, h);
        let twist = tape.reshape(out, vec![6]);
        let (rotation, translation) = exp_se3_on_tape(tape, twist);
        Ok(PoseVars {
            rotation,
            translation,
            twist,
        })
    }

    /// Pose of one image as a plain value.
    pub fn predict_pose(&self, index: usize) -> Result<PoseSE3<T>, PoseNetError> {
        if index >= self.n_images {
            return Err(PoseNetError::IndexOutOfRange {
                index,
                n_images: self.n_images,
            });
        }
        Ok(self.predict_all()[index])
    }

    /// Poses for every image.
    pub fn predict_all(&self) -> Vec<PoseSE3<T>> {
        let mut tape = Tape::new();
        let binding = self.params.bind(&mut tape);
        let twists = self.forward_all_on_tape(&mut tape, &binding);
        let data = tape.value(twists).to_vec();
        (0..self.n_images)
            .map(|i| exp_se3(&Twist6::from_slice(&data[i * 6..(i + 1) * 6])))
            .collect()
    }

    /// Fit the network to external per-image poses by Adam, regressing
    /// predicted twists onto the targets' logarithms (zero residual
    /// exactly when every predicted pose matches its target).
    pub fn pretrain_to(
        &mut self,
        targets: &[PoseSE3<T>],
        steps: u64,
        lr: f64,
    ) -> Result<PretrainReport, PoseNetError> {
        if targets.len() != self.n_images {
            return Err(PoseNetError::TargetCountMismatch {
                expected: self.n_images,
                got: targets.len(),
            });
        }
        let mut target_data = Vec::with_capacity(self.n_images * 6);
        for pose in targets {
            target_data.extend(log_se3(pose).to_array());
        }
        let target = Tensor::from_vec(vec![self.n_images, 6], target_data);

        let mut adam = AdamState::new(&self.params.shapes());
        let mut final_loss = 0.0f64;
        let mut steps_run = 0;
        for _ in 0..steps {
            let mut tape = Tape::new();
            let binding = self.params.bind(&mut tape);
            let twists = self.forward_all_on_tape(&mut tape, &binding);
            let tgt = tape.constant(target.clone());
            let diff = tape.sub(twists, tgt);
            let sq = tape.square(diff);
            let loss = tape.mean(sq);
            final_loss = tape.value(loss).item().to_f64_lossy();
            if final_loss < 1e-16 {
                break;
            }
            let mut grads = tape.backward(loss);
            let grad_list = binding.grads(&mut grads);
            adam_step(
                self.params.tensors_mut(),
                &grad_list,
                &mut adam,
                T::of_f64(lr),
            )
            .expect("pose-net shapes are fixed");
            steps_run += 1;
        }

        // residuals against the targets
        let fitted = self.predict_all();
        let mut rot_errs = Vec::with_capacity(targets.len());
        let mut center_errs = Vec::with_capacity(targets.len());
        for (f, t) in fitted.iter().zip(targets.iter()) {
            rot_errs.push(
                f.rotation
                    .geodesic_angle(&t.rotation)
                    .to_f64_lossy()
                    .to_degrees(),
            );
            center_errs.push((f.center() - t.center()).norm().to_f64_lossy());
        }
        let mut extent = 0.0f64;
        for i in 0..targets.len() {
            for j in i + 1..targets.len() {
                extent = extent
                    .max((targets[i].center() - targets[j].center()).norm().to_f64_lossy());
            }
        }
        let center_tol = (0.01 * extent).max(1e-6);
        let max_rot_deg = rot_errs.iter().cloned().fold(0.0, f64::max);
        let max_center_err = center_errs.iter().cloned().fold(0.0, f64::max);
        let n = targets.len() as f64;
        Ok(PretrainReport {
            steps_run,
            final_loss,
            mean_rot_deg: rot_errs.iter().sum::<f64>() / n,
            max_rot_deg,
            mean_center_err: center_errs.iter().sum::<f64>() / n,
            max_center_err,
            converged: max_rot_deg < 0.5 && max_center_err < center_tol,
        })
    }
}

/// SE(3) exponential as tape ops: twist `[6]` (omega, v) to a rotation
/// `[3, 3]` and translation `[3]`. Smooth through the zero twist.
pub fn exp_se3_on_tape<T: Scalar>(tape: &mut Tape<T>, twist: Var) -> (Var, Var) {
    let omega = tape.slice(twist, 0, 0, 3);
    let v = tape.slice(twist, 0, 3, 3);
    let sq = tape.square(omega);
    let u = tape.sum(sq);
    let a = tape.lie_a(u);
    let b = tape.lie_b(u);
    let c = tape.lie_c(u);
    let omega_hat = tape.hat(omega);
    let omega_hat2 = tape.matmul(omega_hat, omega_hat);
    let identity = tape.constant(Tensor::from_vec(
        vec![3, 3],
        vec![
            T::one(),
            T::zero(),
            T::zero(),
            T::zero(),
            T::one(),
            T::zero(),
            T::zero(),
            T::zero(),
            T::one(),
        ],
    ));
    let a_term = tape.mul(a, omega_hat);
    let b_term = tape.mul(b, omega_hat2);
    let partial = tape.add(identity, a_term);
    let rotation = tape.add(partial, b_term);

    let bv_term = tape.mul(b, omega_hat);
    let cv_term = tape.mul(c, omega_hat2);
    let vpartial = tape.add(identity, bv_term);
    let vmat = tape.add(vpartial, cv_term);
    let v_col = tape.reshape(v, vec![3, 1]);
    let t_col = tape.matmul(vmat, v_col);
    let translation = tape.reshape(t_col, vec![3]);
    (rotation, translation)
}

/// Read a pose value out of tape vars produced by [`exp_se3_on_tape`].
pub fn pose_from_vars<T: Scalar>(tape: &Tape<T>, rotation: Var, translation: Var) -> PoseSE3<T> {
    let r = tape.value(rotation).to_vec();
    let t = tape.value(translation).to_vec();
    PoseSE3::new(
        Rotation3::from_matrix_unchecked(nalgebra::Matrix3::new(
            r[0], r[1], r[2], r[3], r[4], r[5], r[6], r[7], r[8],
        )),
        nalgebra::Vector3::new(t[0], t[1], t[2]),
    )
}

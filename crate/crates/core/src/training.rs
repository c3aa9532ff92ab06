//! The joint optimization loop: simultaneous Adam updates of the
//! radiance field, the pose network and the focal bank, driven by the
//! photometric loss with an optional SSIM warmup term.
//!
//! Each epoch takes one gradient step per training image: sample a pixel
//! batch, predict the image's pose, generate rays with the current focal
//! scales, render, and step all three parameter groups at their
//! scheduled learning rates. Runs are deterministic given the seed, and
//! a checkpoint restores training exactly (same subsequent steps as an
//! uninterrupted run).

use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::autodiff::{adam_step, AdamState, LrSchedule, ScheduleKind, Tape, Tensor};
use crate::camera::{rays_on_tape, CameraError, FocalBank};
use crate::checkpoint::{
    load_checkpoint, save_checkpoint, CheckpointData, CheckpointError, CheckpointSet,
};
use crate::data::{DataError, SceneDataset};
use crate::field::{FieldConfig, RadianceField};
use crate::geometry::{align_sim3, pose_errors, GeometryError, PoseSE3};
use crate::losses::{photometric_on_tape, sample_ray_batch, ssim_loss_on_tape, LossError};
use crate::metrics::{
    focal_report, psnr_from_mse, psnr_images, ssim_images, ImageMetrics, MetricsReport,
};
use crate::nn::ParamSet;
use crate::posenet::{PoseEncoderKind, PoseNet, PoseNetConfig, PoseNetError, PretrainReport};
use crate::render::{render_image, render_rays_on_tape};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("numerical divergence at epoch {epoch} (loss {loss}); diagnostic checkpoint: {diagnostic:?}")]
    NumericalDivergence {
        epoch: u64,
        loss: f64,
        diagnostic: Option<PathBuf>,
    },
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    PoseNet(#[from] PoseNetError),
    #[error(transparent)]
    Camera(#[from] CameraError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

/// All knobs of a training run. The defaults follow the published
/// configuration (1024 rays and 128 samples per image, width-128 field,
/// 1e-3 learning rates with the two step-decay schedules); [`desk`]
/// scales the counts down for CPU-sized experiments.
///
/// [`desk`]: TrainConfig::desk
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub epochs: u64,
    pub rays_per_image: usize,
    pub samples_per_ray: usize,
    pub field: FieldConfig,
    pub pose: PoseNetConfig,
    pub field_lr: LrSchedule,
    pub pose_lr: LrSchedule,
    pub focal_lr: LrSchedule,
    pub freeze_field: bool,
    pub freeze_pose: bool,
    pub freeze_focal: bool,
    pub seed: u64,
    /// Stratified jitter along rays during training.
    pub jitter: bool,
    pub ssim_warmup_epochs: u64,
    pub ssim_weight: f64,
    pub patch_size: usize,
    /// Run a full evaluation every this many epochs (0 = only on demand).
    pub eval_every: u64,
    /// Save a checkpoint every this many epochs (0 = only final).
    pub checkpoint_every: u64,
    /// Keep camera parameters (pose and focal) frozen for this many
    /// initial epochs so the field forms before cameras move. 0
    /// reproduces fully joint training from the first step.
    #[serde(default)]
    pub camera_delay_epochs: u64,
    /// Average camera (pose and focal) gradients over all images and
    /// take one optimizer step per epoch instead of stepping after every
    /// image. The field always steps per image.
    #[serde(default)]
    pub camera_accumulate: bool,
    /// Initialize the focal bank and pretrain the pose network from the
    /// dataset's initial-guess cameras.
    pub init_from_dataset: bool,
    pub pretrain_steps: u64,
    pub pretrain_lr: f64,
    /// Where to drop a diagnostic checkpoint on numerical divergence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 2000,
            rays_per_image: 1024,
            samples_per_ray: 128,
            field: FieldConfig::default(),
            pose: PoseNetConfig::default(),
            field_lr: LrSchedule::new(ScheduleKind::Field),
            pose_lr: LrSchedule::new(ScheduleKind::Camera),
            focal_lr: LrSchedule::new(ScheduleKind::Camera),
            freeze_field: false,
            freeze_pose: false,
            freeze_focal: false,
            seed: 0,
            jitter: true,
            ssim_warmup_epochs: 500,
            ssim_weight: 0.1,
            patch_size: 8,
            eval_every: 0,
            checkpoint_every: 0,
            camera_delay_epochs: 0,
            camera_accumulate: false,
            init_from_dataset: false,
            pretrain_steps: 1000,
            pretrain_lr: 1e-3,
            diagnostic_dir: None,
        }
    }
}

impl TrainConfig {
    /// Desk-scale profile: small field, ray and encoding sizes for CPU
    /// experiments on 32x32 synthetic scenes.
    pub fn desk() -> Self {
        TrainConfig {
            rays_per_image: 96,
            samples_per_ray: 20,
            field: FieldConfig {
                width: 36,
                pos_bands: 6,
                pos_sigma: 64.0,
                dir_bands: 2,
                dir_sigma: 4.0,
                ..FieldConfig::default()
            },
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.rays_per_image == 0 || self.samples_per_ray < 2 {
            return Err(TrainError::Config(format!(
                "need rays >= 1 and samples >= 2, got {} and {}",
                self.rays_per_image, self.samples_per_ray
            )));
        }
        if self.patch_size < 2 {
            return Err(TrainError::Config("patch_size must be at least 2".into()));
        }
        if !(self.ssim_weight.is_finite() && self.ssim_weight >= 0.0) {
            return Err(TrainError::Config(format!(
                "ssim_weight must be finite and non-negative, got {}",
                self.ssim_weight
            )));
        }
        Ok(())
    }
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EpochReport {
    pub epoch: u64,
    /// Mean photometric (pixel MSE) loss over the epoch.
    pub loss: f64,
    /// Training PSNR derived from `loss`.
    pub psnr: f64,
    /// Mean SSIM warmup term (exactly 0 outside the warmup window).
    pub ssim: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rot_err: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trans_err: Option<f64>,
    /// Mean per-group relative focal error.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub focal_err: Option<f64>,
    pub lr_field: f64,
    pub lr_pose: f64,
    pub lr_focal: f64,
    /// Mean rotation change of predicted poses since the previous epoch,
    /// degrees.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pose_drift_deg: Option<f64>,
    /// Current derived (f_x, f_y) per camera group.
    pub focals: Vec<(f64, f64)>,
}

pub struct Trainer<T: Scalar> {
    pub cfg: TrainConfig,
    pub dataset: SceneDataset,
    pub field: RadianceField<T>,
    pub posenet: PoseNet<T>,
    pub focal: FocalBank<T>,
    adam_field: AdamState<T>,
    adam_pose: AdamState<T>,
    adam_focal: AdamState<T>,
    pub epoch: u64,
    rng: ChaCha8Rng,
    rng_seed_bytes: [u8; 32],
    train_idx: Vec<usize>,
    prev_poses: Option<Vec<PoseSE3<f64>>>,
    pub pretrain_report: Option<PretrainReport>,
}

fn trainer_rng_seed(seed: u64) -> [u8; 32] {
    let mut bytes = [0u8; 32];
    bytes[..8].copy_from_slice(&seed.to_le_bytes());
    bytes[8..16].copy_from_slice(&0x7261_696e_5f72_6e67u64.to_le_bytes());
    bytes
}

impl<T: Scalar> Trainer<T> {
    /// Build a trainer; with `init_from_dataset` set, the focal bank
    /// starts from the dataset's initial-guess focals and the pose
    /// network is pretrained to its initial-guess poses.
    pub fn new(dataset: SceneDataset, cfg: TrainConfig) -> Result<Self, TrainError> {
        let (poses, focals) = if cfg.init_from_dataset {
            let poses = dataset.init_trajectory.clone().ok_or_else(|| {
                TrainError::Config("init_from_dataset set but dataset has no init poses".into())
            })?;
            let focals = dataset.init_focals.clone();
            (Some(poses), focals)
        } else {
            (None, None)
        };
        Self::with_external_init(dataset, cfg, poses, focals)
    }

    /// Build a trainer with explicit initial cameras: `init_poses` (one
    /// per image, in image order) pretrain the pose network;
    /// `init_focals` (one `(f_x, f_y)` per group) seed the focal bank.
    pub fn with_external_init(
        dataset: SceneDataset,
        cfg: TrainConfig,
        init_poses: Option<Vec<PoseSE3<f64>>>,
        init_focals: Option<Vec<(f64, f64)>>,
    ) -> Result<Self, TrainError> {
        cfg.validate()?;
        dataset.validate()?;
        let train_idx = dataset.train_indices();
        if train_idx.is_empty() {
            return Err(TrainError::Config("dataset has no training images".into()));
        }
        if let Some(p) = &init_poses {
            if p.len() != dataset.images.len() {
                return Err(TrainError::Config(format!(
                    "{} init poses for {} images",
                    p.len(),
                    dataset.images.len()
                )));
            }
        }

        let field = RadianceField::new(cfg.field, cfg.seed ^ 0xf1e1d);
        let mut posenet = PoseNet::new(cfg.pose, train_idx.len(), cfg.seed ^ 0x90535);
        let focal = match &init_focals {
            Some(f) => {
                if f.len() != dataset.groups.len() {
                    return Err(TrainError::Config(format!(
                        "{} init focals for {} groups",
                        f.len(),
                        dataset.groups.len()
                    )));
                }
                FocalBank::from_focals(
                    &dataset.groups,
                    &f.iter().map(|x| x.0).collect::<Vec<_>>(),
                )
            }
            None => FocalBank::new(dataset.groups.len()),
        };

        let pretrain_report = match &init_poses {
            Some(poses) => {
                let targets: Vec<PoseSE3<T>> =
                    train_idx.iter().map(|&i| poses[i].cast::<T>()).collect();
                Some(posenet.pretrain_to(&targets, cfg.pretrain_steps, cfg.pretrain_lr)?)
            }
            None => None,
        };

        let adam_field = AdamState::new(&field.params.shapes());
        let adam_pose = AdamState::new(&posenet.params.shapes());
        let adam_focal = AdamState::new(&[vec![dataset.groups.len()]]);
        let rng_seed_bytes = trainer_rng_seed(cfg.seed);

        Ok(Trainer {
            cfg,
            dataset,
            field,
            posenet,
            focal,
            adam_field,
            adam_pose,
            adam_focal,
            epoch: 0,
            rng: ChaCha8Rng::from_seed(rng_seed_bytes),
            rng_seed_bytes,
            train_idx,
            prev_poses: None,
            pretrain_report: None,
        }
        .with_pretrain_report(pretrain_report))
    }

    fn with_pretrain_report(mut self, report: Option<PretrainReport>) -> Self {
        self.pretrain_report = report;
        self
    }

    pub fn n_train_images(&self) -> usize {
        self.train_idx.len()
    }

    /// Ground-truth poses of the training images, when available.
    fn gt_train_poses(&self) -> Option<Vec<PoseSE3<f64>>> {
        self.dataset
            .gt_trajectory
            .as_ref()
            .map(|traj| self.train_idx.iter().map(|&i| traj[i]).collect())
    }

    pub fn predicted_train_poses(&self) -> Vec<PoseSE3<f64>> {
        self.posenet
            .predict_all()
            .iter()
            .map(|p| p.cast::<f64>())
            .collect()
    }

    /// Derived focals per group. Reports tolerate degenerate values
    /// (a diverged run still gets a final report), so this bypasses the
    /// positivity validation of [`focal_of`].
    pub fn current_focals(&self) -> Vec<(f64, f64)> {
        let scales = self.focal.scales().data();
        self.dataset
            .groups
            .iter()
            .map(|g| {
                let s2 = scales[g.id].to_f64_lossy().powi(2);
                (s2 * g.width as f64, s2 * g.height as f64)
            })
            .collect()
    }

    /// One pass over all training images with per-image gradient steps.
    pub fn train_epoch(&mut self) -> Result<EpochReport, TrainError> {
        let epoch = self.epoch;
        let warmup_active =
            epoch < self.cfg.ssim_warmup_epochs && self.cfg.ssim_weight != 0.0;
        let lr_field = if self.cfg.freeze_field {
            0.0
        } else {
            self.cfg.field_lr.lr(epoch)
        };
        let camera_active = epoch >= self.cfg.camera_delay_epochs;
        let lr_pose = if self.cfg.freeze_pose || !camera_active {
            0.0
        } else {
            self.cfg.pose_lr.lr(epoch)
        };
        let lr_focal = if self.cfg.freeze_focal || !camera_active {
            0.0
        } else {
            self.cfg.focal_lr.lr(epoch)
        };

        let mut pix_sum = 0.0f64;
        let mut ssim_sum = 0.0f64;
        let mut pose_grad_acc: Vec<Option<Tensor<T>>> = Vec::new();
        let mut focal_grad_acc: Vec<Option<Tensor<T>>> = Vec::new();
        let near = T::of_f64(self.dataset.near);
        let far = T::of_f64(self.dataset.far);
        let n_samples = self.cfg.samples_per_ray;

        for local in 0..self.train_idx.len() {
            let img_idx = self.train_idx[local];
            let group = *self.dataset.group_of(img_idx);
            let image = &self.dataset.images[img_idx];
            let batch = sample_ray_batch(
                &mut self.rng,
                &image.pixels,
                local,
                self.cfg.rays_per_image,
                warmup_active,
                self.cfg.patch_size,
            );
            let n_rays = batch.n_rays();

            // stratified distances (constants on the tape)
            let span = far - near;
            let delta = span / T::of_usize(n_samples);
            let mut dist = Vec::with_capacity(n_rays * n_samples);
            for _ in 0..n_rays {
                for i in 0..n_samples {
                    let offset = if self.cfg.jitter {
                        T::of_f64(rand::Rng::gen_range(&mut self.rng, 0.0..1.0))
                    } else {
                        T::of_f64(0.5)
                    };
                    dist.push(near + delta * (T::of_usize(i) + offset));
                }
            }
            let distances = Tensor::from_vec(vec![n_rays, n_samples], dist);

            let mut tape = Tape::new();
            let field_binding = self.field.params.bind(&mut tape);
            let pose_binding = self.posenet.params.bind(&mut tape);
            let scales_var = tape.var(self.focal.scales().clone());

            let pose_vars = self
                .posenet
                .predict_on_tape(&mut tape, &pose_binding, local)?;
            let s = tape.slice(scales_var, 0, group.id, 1);
            let s2 = tape.square(s);
            let fx = tape.scale(s2, T::of_usize(group.width));
            let fy = tape.scale(s2, T::of_usize(group.height));
            let (origin, dirs) = rays_on_tape(
                &mut tape,
                pose_vars.rotation,
                pose_vars.translation,
                fx,
                fy,
                &group,
                &batch.pixels,
            );
            let out = render_rays_on_tape(
                &mut tape,
                &self.field,
                &field_binding,
                origin,
                dirs,
                &distances,
                far,
                self.dataset.white_background,
            );
            let gt = tape.constant(Tensor::from_vec(
                vec![n_rays, 3],
                batch.gt_colors.iter().map(|&c| T::of_f64(c)).collect(),
            ));
            let loss_pix = photometric_on_tape(&mut tape, out.color, gt);
            pix_sum += tape.value(loss_pix).item().to_f64_lossy();

            let total = if warmup_active && batch.has_patches() {
                let k = batch.patch_size;
                let patch_px = batch.patch_origins.len() * k * k;
                let rendered_patches = tape.slice(out.color, 0, batch.patch_start(), patch_px);
                let truth_patches = tape.slice(gt, 0, batch.patch_start(), patch_px);
                let sl = ssim_loss_on_tape(
                    &mut tape,
                    rendered_patches,
                    truth_patches,
                    k,
                    batch.patch_origins.len(),
                )?;
                ssim_sum += tape.value(sl).item().to_f64_lossy();
                let weighted = tape.scale(sl, T::of_f64(self.cfg.ssim_weight));
                tape.add(loss_pix, weighted)
            } else {
                loss_pix
            };

            let loss_val = tape.value(total).item().to_f64_lossy();
            if !loss_val.is_finite() {
                let diagnostic = self.write_diagnostic_checkpoint();
                return Err(TrainError::NumericalDivergence {
                    epoch,
                    loss: loss_val,
                    diagnostic,
                });
            }

            let mut grads = tape.backward(total);
            if lr_field > 0.0 {
                let g = field_binding.grads(&mut grads);
                adam_step(
                    self.field.params.tensors_mut(),
                    &g,
                    &mut self.adam_field,
                    T::of_f64(lr_field),
                )
                .map_err(TrainError::Config)?;
            }
            if lr_pose > 0.0 {
                let g = pose_binding.grads(&mut grads);
                if self.cfg.camera_accumulate {
                    accumulate_grads(&mut pose_grad_acc, g);
                } else {
                    adam_step(
                        self.posenet.params.tensors_mut(),
                        &g,
                        &mut self.adam_pose,
                        T::of_f64(lr_pose),
                    )
                    .map_err(TrainError::Config)?;
                }
            }
            if lr_focal > 0.0 {
                let g = vec![grads.take(scales_var)];
                if self.cfg.camera_accumulate {
                    accumulate_grads(&mut focal_grad_acc, g);
                } else {
                    adam_step(
                        std::slice::from_mut(self.focal.scales_mut()),
                        &g,
                        &mut self.adam_focal,
                        T::of_f64(lr_focal),
                    )
                    .map_err(TrainError::Config)?;
                }
            }
        }

        if self.cfg.camera_accumulate {
            let inv_n = T::of_f64(1.0 / self.train_idx.len() as f64);
            if lr_pose > 0.0 {
                let g = scale_grads(pose_grad_acc, inv_n);
                adam_step(
                    self.posenet.params.tensors_mut(),
                    &g,
                    &mut self.adam_pose,
                    T::of_f64(lr_pose),
                )
                .map_err(TrainError::Config)?;
            }
            if lr_focal > 0.0 {
                let g = scale_grads(focal_grad_acc, inv_n);
                adam_step(
                    std::slice::from_mut(self.focal.scales_mut()),
                    &g,
                    &mut self.adam_focal,
                    T::of_f64(lr_focal),
                )
                .map_err(TrainError::Config)?;
            }
        }

        // Non-finite parameters are divergence even when saturation
        // keeps the rendered loss finite.
        let params_finite = self
            .field
            .params
            .tensors()
            .iter()
            .chain(self.posenet.params.tensors())
            .all(|t| t.is_all_finite())
            && self.focal.scales().is_all_finite();
        if !params_finite {
            let diagnostic = self.write_diagnostic_checkpoint();
            return Err(TrainError::NumericalDivergence {
                epoch,
                loss: f64::NAN,
                diagnostic,
            });
        }

        self.epoch += 1;
        let n_imgs = self.train_idx.len() as f64;
        let loss = pix_sum / n_imgs;
        let ssim_term = ssim_sum / n_imgs;

        let poses = self.predicted_train_poses();
        let pose_drift_deg = self.prev_poses.as_ref().map(|prev| {
            prev.iter()
                .zip(poses.iter())
                .map(|(a, b)| a.rotation.geodesic_angle(&b.rotation).to_degrees())
                .sum::<f64>()
                / n_imgs
        });
        let (rot_err, trans_err) = match self.gt_train_poses() {
            Some(gt) => match pose_errors(&poses, &gt) {
                Ok(report) => (Some(report.mean_rot_deg), Some(report.mean_trans)),
                Err(_) => (None, None),
            },
            None => (None, None),
        };
        let focals = self.current_focals();
        let focal_err = self
            .dataset
            .gt_focals
            .as_ref()
            .map(|gt| focal_report(&focals, gt).mean_rel_err);
        self.prev_poses = Some(poses);

        Ok(EpochReport {
            epoch,
            loss,
            psnr: psnr_from_mse(loss),
            ssim: ssim_term,
            rot_err,
            trans_err,
            focal_err,
            lr_field,
            lr_pose,
            lr_focal,
            pose_drift_deg,
            focals,
        })
    }

    /// Train for `epochs` epochs, collecting the per-epoch reports.
    pub fn run(&mut self, epochs: u64) -> Result<Vec<EpochReport>, TrainError> {
        let mut reports = Vec::with_capacity(epochs as usize);
        for _ in 0..epochs {
            reports.push(self.train_epoch()?);
        }
        Ok(reports)
    }

    /// Render one dataset view with the current parameters: training
    /// images at their fitted poses, heldout images at the ground-truth
    /// pose mapped into the estimated frame through the Sim(3) alignment
    /// of the training trajectories.
    pub fn render_view(
        &self,
        image_idx: usize,
        stride: usize,
    ) -> Result<crate::data::ImageBuf<f64>, TrainError> {
        if image_idx >= self.dataset.images.len() {
            return Err(TrainError::Config(format!(
                "image index {image_idx} out of range"
            )));
        }
        let bounds = (T::of_f64(self.dataset.near), T::of_f64(self.dataset.far));
        let pose: PoseSE3<T> = if self.dataset.images[image_idx].heldout {
            let gt_all = self.dataset.gt_trajectory.as_ref().ok_or_else(|| {
                TrainError::Config("heldout view needs a ground-truth pose to render".into())
            })?;
            let gt_tr = self.gt_train_poses().expect("gt present");
            let est = self.predicted_train_poses();
            let gt_to_est = align_sim3(&gt_tr, &est)?;
            gt_to_est.apply_pose(&gt_all[image_idx]).cast()
        } else {
            let local = self
                .train_idx
                .iter()
                .position(|&i| i == image_idx)
                .expect("non-heldout image is a training image");
            self.predicted_train_poses()[local].cast()
        };
        Ok(render_image(
            &self.field,
            &pose,
            self.dataset.group_of(image_idx),
            &self.focal,
            bounds,
            self.cfg.samples_per_ray,
            stride,
            self.dataset.white_background,
        )
        .cast::<f64>())
    }

    /// Full evaluation on a parameter snapshot (no RNG, pure).
    ///
    /// With ground-truth cameras and a heldout split, heldout views are
    /// rendered at the ground-truth poses mapped into the estimated frame
    /// through the Sim(3) alignment of the training trajectories; without
    /// ground truth, training views are rendered at their fitted poses.
    pub fn evaluate(&self) -> MetricsReport {
        let est_poses = self.predicted_train_poses();
        let gt_train = self.gt_train_poses();
        let pose = gt_train
            .as_ref()
            .and_then(|gt| pose_errors(&est_poses, gt).ok());
        let trans_err_frac = pose
            .as_ref()
            .map(|p| p.mean_trans / self.dataset.scene_extent());
        let focal = self
            .dataset
            .gt_focals
            .as_ref()
            .map(|gt| focal_report(&self.current_focals(), gt));

        let heldout = self.dataset.heldout_indices();
        let bounds = (T::of_f64(self.dataset.near), T::of_f64(self.dataset.far));
        let mut images = Vec::new();
        let mut split = "train";
        if !heldout.is_empty() {
            if let (Some(gt_all), Some(gt_tr)) =
                (self.dataset.gt_trajectory.as_ref(), gt_train.as_ref())
            {
                // map ground truth into the estimated frame
                if let Ok(gt_to_est) = align_sim3(gt_tr, &est_poses) {
                    split = "heldout";
                    for &idx in &heldout {
                        let pose_est_frame = gt_to_est.apply_pose(&gt_all[idx]).cast::<T>();
                        let group = self.dataset.group_of(idx);
                        let rendered = render_image(
                            &self.field,
                            &pose_est_frame,
                            group,
                            &self.focal,
                            bounds,
                            self.cfg.samples_per_ray,
                            1,
                            self.dataset.white_background,
                        )
                        .cast::<f64>();
                        let truth = &self.dataset.images[idx].pixels;
                        images.push(ImageMetrics {
                            id: self.dataset.images[idx].id,
                            psnr: psnr_images(&rendered, truth),
                            ssim: ssim_images(&rendered, truth),
                        });
                    }
                }
            }
        }
        if images.is_empty() {
            split = "train";
            for (local, &idx) in self.train_idx.iter().enumerate() {
                let pose = est_poses[local].cast::<T>();
                let group = self.dataset.group_of(idx);
                let rendered = render_image(
                    &self.field,
                    &pose,
                    group,
                    &self.focal,
                    bounds,
                    self.cfg.samples_per_ray,
                    1,
                    self.dataset.white_background,
                )
                .cast::<f64>();
                let truth = &self.dataset.images[idx].pixels;
                images.push(ImageMetrics {
                    id: self.dataset.images[idx].id,
                    psnr: psnr_images(&rendered, truth),
                    ssim: ssim_images(&rendered, truth),
                });
            }
        }
        let n = images.len().max(1) as f64;
        MetricsReport {
            split: split.to_string(),
            mean_psnr: images.iter().map(|m| m.psnr).sum::<f64>() / n,
            mean_ssim: images.iter().map(|m| m.ssim).sum::<f64>() / n,
            images,
            pose,
            focal,
            trans_err_frac,
        }
    }

    // ---- checkpointing -----------------------------------------------

    fn focal_param_set(&self) -> ParamSet<T> {
        let mut set = ParamSet::new();
        set.add("scales", self.focal.scales().clone());
        set
    }

    pub fn save_checkpoint(&self, path: &std::path::Path) -> Result<(), TrainError> {
        let data = CheckpointData {
            epoch: self.epoch,
            rng_seed: self.rng_seed_bytes,
            rng_word_pos: self.rng.get_word_pos(),
            sets: vec![
                CheckpointSet {
                    name: "field".into(),
                    params: self.field.params.clone(),
                    adam: self.adam_field.clone(),
                },
                CheckpointSet {
                    name: "pose".into(),
                    params: self.posenet.params.clone(),
                    adam: self.adam_pose.clone(),
                },
                CheckpointSet {
                    name: "focal".into(),
                    params: self.focal_param_set(),
                    adam: self.adam_focal.clone(),
                },
            ],
        };
        save_checkpoint(path, &data)?;
        Ok(())
    }

    fn write_diagnostic_checkpoint(&self) -> Option<PathBuf> {
        let dir = self.cfg.diagnostic_dir.as_ref()?;
        std::fs::create_dir_all(dir).ok()?;
        let path = dir.join(format!("diverged_epoch_{:06}.ntf4", self.epoch));
        self.save_checkpoint(&path).ok()?;
        Some(path)
    }

    /// Rebuild a trainer from a checkpoint; resumed training reproduces
    /// the uninterrupted run exactly. The config and dataset must match
    /// the checkpointed run.
    pub fn resume(
        dataset: SceneDataset,
        cfg: TrainConfig,
        path: &std::path::Path,
    ) -> Result<Self, TrainError> {
        let data: CheckpointData<T> = load_checkpoint(path)?;
        // construct without pretraining (parameters come from the file)
        let mut trainer = Self::with_external_init(dataset, cfg, None, None)?;
        if data.sets.len() != 3 {
            return Err(TrainError::Config(format!(
                "checkpoint has {} parameter sets, expected 3",
                data.sets.len()
            )));
        }
        for set in data.sets {
            match set.name.as_str() {
                "field" => {
                    check_shapes(&trainer.field.params, &set.params)?;
                    trainer.field.params = set.params;
                    trainer.adam_field = set.adam;
                }
                "pose" => {
                    check_shapes(&trainer.posenet.params, &set.params)?;
                    trainer.posenet.params = set.params;
                    trainer.adam_pose = set.adam;
                }
                "focal" => {
                    if set.params.len() != 1
                        || set.params.tensors()[0].numel() != trainer.dataset.groups.len()
                    {
                        return Err(TrainError::Config(
                            "checkpoint focal bank does not match dataset groups".into(),
                        ));
                    }
                    trainer.focal.set_scales(set.params.tensors()[0].clone());
                    trainer.adam_focal = set.adam;
                }
                other => {
                    return Err(TrainError::Config(format!(
                        "unknown parameter set {other:?} in checkpoint"
                    )))
                }
            }
        }
        trainer.epoch = data.epoch;
        trainer.rng_seed_bytes = data.rng_seed;
        trainer.rng = ChaCha8Rng::from_seed(data.rng_seed);
        trainer.rng.set_word_pos(data.rng_word_pos);
        trainer.prev_poses = None;
        Ok(trainer)
    }
}

fn accumulate_grads<T: Scalar>(acc: &mut Vec<Option<Tensor<T>>>, grads: Vec<Option<Tensor<T>>>) {
    if acc.is_empty() {
        *acc = grads;
        return;
    }
    for (slot, g) in acc.iter_mut().zip(grads) {
        match (slot.as_mut(), g) {
            (Some(a), Some(b)) => a.add_assign(&b),
            (None, Some(b)) => *slot = Some(b),
            _ => {}
        }
    }
}

fn scale_grads<T: Scalar>(acc: Vec<Option<Tensor<T>>>, factor: T) -> Vec<Option<Tensor<T>>> {
    acc.into_iter()
        .map(|g| g.map(|t| t.map(|x| x * factor)))
        .collect()
}

fn check_shapes<T: Scalar>(expected: &ParamSet<T>, got: &ParamSet<T>) -> Result<(), TrainError> {
    if expected.len() != got.len() {
        return Err(TrainError::Config(format!(
            "checkpoint has {} parameters, model has {}",
            got.len(),
            expected.len()
        )));
    }
    for i in 0..expected.len() {
        let id = crate::nn::ParamId(i);
        if expected.name(id) != got.name(id)
            || expected.get(id).shape() != got.get(id).shape()
        {
            return Err(TrainError::Config(format!(
                "checkpoint parameter {} ({:?}) does not match model parameter {} ({:?})",
                got.name(id),
                got.get(id).shape(),
                expected.name(id),
                expected.get(id).shape()
            )));
        }
    }
    Ok(())
}

// ---- experiment harnesses --------------------------------------------

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct BreakingPointRow {
    pub skip: usize,
    pub n_images: usize,
    pub mean_rot_deg: f64,
    pub mean_trans: f64,
    /// Rotation error below 20 degrees counts as success.
    pub success: bool,
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct BreakingPointTable {
    pub rows: Vec<BreakingPointRow>,
}

/// Success threshold for the breaking-point analysis, degrees.
pub const BREAKING_POINT_ROT_DEG: f64 = 20.0;

/// Keep every `skip`-th training image of `dataset` (heldout images are
/// dropped), producing a re-indexed sub-dataset.
pub fn subsample_dataset(dataset: &SceneDataset, skip: usize) -> SceneDataset {
    let train = dataset.train_indices();
    let kept: Vec<usize> = train.iter().copied().step_by(skip).collect();
    let images = kept
        .iter()
        .map(|&i| dataset.images[i].clone())
        .collect::<Vec<_>>();
    SceneDataset {
        images,
        groups: dataset.groups.clone(),
        near: dataset.near,
        far: dataset.far,
        white_background: dataset.white_background,
        gt_trajectory: dataset
            .gt_trajectory
            .as_ref()
            .map(|t| kept.iter().map(|&i| t[i]).collect()),
        gt_focals: dataset.gt_focals.clone(),
        init_trajectory: dataset
            .init_trajectory
            .as_ref()
            .map(|t| kept.iter().map(|&i| t[i]).collect()),
        init_focals: dataset.init_focals.clone(),
    }
}

/// Train on every `k`-th image for each `k` in `skips` and classify each
/// run by the 20-degree rotation-error rule. Every `k` must leave at
/// least 3 images.
pub fn breaking_point_run<T: Scalar>(
    dataset: &SceneDataset,
    skips: &[usize],
    cfg: &TrainConfig,
) -> Result<BreakingPointTable, TrainError> {
    let n_train = dataset.train_indices().len();
    for &k in skips {
        if k == 0 {
            return Err(TrainError::Config("skip of 0 is meaningless".into()));
        }
        let kept = n_train.div_ceil(k);
        if kept < 3 {
            return Err(TrainError::Config(format!(
                "skip {k} leaves only {kept} of {n_train} images; need at least 3"
            )));
        }
    }
    if dataset.gt_trajectory.is_none() {
        return Err(TrainError::Config(
            "breaking-point analysis needs ground-truth poses".into(),
        ));
    }
    let mut rows = Vec::with_capacity(skips.len());
    for &k in skips {
        let sub = subsample_dataset(dataset, k);
        let n_images = sub.images.len();
        let mut trainer: Trainer<T> = Trainer::new(sub, cfg.clone())?;
        trainer.run(cfg.epochs)?;
        let est = trainer.predicted_train_poses();
        let gt = trainer.gt_train_poses().expect("checked above");
        let report = pose_errors(&est, &gt)?;
        rows.push(BreakingPointRow {
            skip: k,
            n_images,
            mean_rot_deg: report.mean_rot_deg,
            mean_trans: report.mean_trans,
            success: report.mean_rot_deg < BREAKING_POINT_ROT_DEG,
        });
    }
    Ok(BreakingPointTable { rows })
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct AblationReport {
    pub gaussian_rot_errs: Vec<f64>,
    pub positional_rot_errs: Vec<f64>,
    pub gaussian_median: f64,
    pub positional_median: f64,
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// From-scratch comparison of the two pose encoders over several seeds:
/// final mean rotation error per run, plus medians.
pub fn encoding_ablation<T: Scalar>(
    dataset: &SceneDataset,
    base_cfg: &TrainConfig,
    seeds: &[u64],
) -> Result<AblationReport, TrainError> {
    let mut gaussian_rot_errs = Vec::with_capacity(seeds.len());
    let mut positional_rot_errs = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        for encoder in [PoseEncoderKind::Gaussian, PoseEncoderKind::Positional] {
            let mut cfg = base_cfg.clone();
            cfg.seed = seed;
            cfg.pose.encoder = encoder;
            cfg.init_from_dataset = false;
            let mut trainer: Trainer<T> = Trainer::new(dataset.clone(), cfg.clone())?;
            trainer.run(cfg.epochs)?;
            let est = trainer.predicted_train_poses();
            let gt = trainer
                .gt_train_poses()
                .ok_or_else(|| TrainError::Config("ablation needs ground truth".into()))?;
            let rot = pose_errors(&est, &gt)?.mean_rot_deg;
            match encoder {
                PoseEncoderKind::Gaussian => gaussian_rot_errs.push(rot),
                PoseEncoderKind::Positional => positional_rot_errs.push(rot),
            }
        }
    }
    Ok(AblationReport {
        gaussian_median: median(&gaussian_rot_errs),
        positional_median: median(&positional_rot_errs),
        gaussian_rot_errs,
        positional_rot_errs,
    })
}

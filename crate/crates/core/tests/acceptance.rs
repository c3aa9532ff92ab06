//! Acceptance suite: one test per criterion, each printing a PASS line
//! with its measured numbers (run with `--nocapture` to see them on
//! success).

use nalgebra::Vector3;
use rand::Rng;

use ntf4::autodiff::{seeded_rng, Tape, Tensor};
use ntf4::camera::{focal_of, rays_on_tape, CameraGroup, FocalBank};
use ntf4::data::{generate_synthetic, mini_preset, perturb_cameras, two_group_preset, ImageBuf};
use ntf4::field::{FieldConfig, RadianceField};
use ntf4::geometry::{align_sim3, exp_se3, pose_errors, PoseSE3, Rotation3, Sim3, Twist6};
use ntf4::losses::photometric_on_tape;
use ntf4::metrics::{mse_images, psnr_images, ssim_images, PSNR_CAP_DB};
use ntf4::posenet::{PoseEncoderKind, PoseNet, PoseNetConfig};
use ntf4::render::{composite_on_tape, render_rays_on_tape, sample_ray};
use ntf4::training::{
    breaking_point_run, encoding_ablation, TrainConfig, Trainer, BREAKING_POINT_ROT_DEG,
};

// --- shared toy pipeline for the gradient check -------------------------

/// Build the full training loss (pose net -> rays -> field -> renderer ->
/// photometric) for a fixed 4-ray, 8-sample toy setup and return the
/// loss plus gradients for every parameter, in (field, pose, focal)
/// order.
struct ToyPipeline {
    field: RadianceField<f64>,
    posenet: PoseNet<f64>,
    scales: Tensor<f64>,
    group: CameraGroup,
    pixels: Vec<(u32, u32)>,
    gt: Vec<f64>,
    distances: Tensor<f64>,
}

impl ToyPipeline {
    fn new() -> Self {
        let field = RadianceField::new(
            FieldConfig {
                width: 8,
                depth: 3,
                skip_at: 2,
                pos_bands: 3,
                pos_sigma: 8.0,
                dir_bands: 2,
                dir_sigma: 4.0,
                include_input: true,
            },
            21,
        );
        let mut posenet = PoseNet::new(
            PoseNetConfig {
                encoder: PoseEncoderKind::Gaussian,
                bands: 8,
                sigma: 10.0,
                hidden: 16,
            },
            3,
            5,
        );
        // move the pose off the identity so rotation gradients are alive
        let mut rng = seeded_rng(77, 0);
        let head_w = posenet.params.names().iter().position(|n| n == "pose.head.w").unwrap();
        let shape = posenet.params.tensors()[head_w].shape().to_vec();
        let data: Vec<f64> = (0..shape[0] * shape[1])
            .map(|_| rng.gen_range(-0.15..0.15))
            .collect();
        posenet.params.tensors_mut()[head_w] = Tensor::from_vec(shape, data);

        let group = CameraGroup::new(0, 16, 16).unwrap();
        let pixels = vec![(2u32, 3u32), (12, 4), (7, 11), (14, 14)];
        let gt: Vec<f64> = (0..12).map(|i| 0.1 + 0.07 * i as f64).collect();
        let mut dist = Vec::new();
        for r in 0..4 {
            for s in 0..8 {
                dist.push(2.0 + (s as f64 + 0.5 + 0.03 * r as f64) * 0.5);
            }
        }
        ToyPipeline {
            field,
            posenet,
            scales: Tensor::from_vec(vec![1], vec![1.07]),
            group,
            pixels,
            gt,
            distances: Tensor::from_vec(vec![4, 8], dist),
        }
    }

    fn loss_and_grads(&self) -> (f64, Vec<f64>) {
        let mut tape = Tape::<f64>::new();
        let fb = self.field.params.bind(&mut tape);
        let pb = self.posenet.params.bind(&mut tape);
        let sv = tape.var(self.scales.clone());
        let pose = self.posenet.predict_on_tape(&mut tape, &pb, 1).unwrap();
        let s = tape.slice(sv, 0, 0, 1);
        let s2 = tape.square(s);
        let fx = tape.scale(s2, 16.0);
        let fy = tape.scale(s2, 16.0);
        let (origin, dirs) = rays_on_tape(
            &mut tape,
            pose.rotation,
            pose.translation,
            fx,
            fy,
            &self.group,
            &self.pixels,
        );
        let out = render_rays_on_tape(
            &mut tape,
            &self.field,
            &fb,
            origin,
            dirs,
            &self.distances,
            6.0,
            false,
        );
        let gt = tape.constant(Tensor::from_vec(vec![4, 3], self.gt.clone()));
        let loss = photometric_on_tape(&mut tape, out.color, gt);
        let loss_val = tape.value(loss).item();
        let mut grads = tape.backward(loss);
        let mut flat = Vec::new();
        for g in fb.grads(&mut grads) {
            flat.extend(g.expect("field grad").to_vec());
        }
        for g in pb.grads(&mut grads) {
            flat.extend(g.expect("pose grad").to_vec());
        }
        flat.extend(grads.take(sv).expect("focal grad").to_vec());
        (loss_val, flat)
    }

    fn loss_only(&self) -> f64 {
        self.loss_and_grads().0
    }

    fn n_params(&self) -> usize {
        self.field.params.total_elements() + self.posenet.params.total_elements() + 1
    }

    fn perturb(&self, flat_index: usize, h: f64) -> ToyPipeline {
        let mut out = ToyPipeline {
            field: self.field.clone(),
            posenet: self.posenet.clone(),
            scales: self.scales.clone(),
            group: self.group,
            pixels: self.pixels.clone(),
            gt: self.gt.clone(),
            distances: self.distances.clone(),
        };
        let nf = self.field.params.total_elements();
        let np = self.posenet.params.total_elements();
        if flat_index < nf {
            let mut offset = flat_index;
            for t in out.field.params.tensors_mut() {
                if offset < t.numel() {
                    t.data_mut()[offset] += h;
                    return out;
                }
                offset -= t.numel();
            }
            unreachable!()
        } else if flat_index < nf + np {
            let mut offset = flat_index - nf;
            for t in out.posenet.params.tensors_mut() {
                if offset < t.numel() {
                    t.data_mut()[offset] += h;
                    return out;
                }
                offset -= t.numel();
            }
            unreachable!()
        } else {
            out.scales.data_mut()[flat_index - nf - np] += h;
            out
        }
    }
}

#[test]
fn criterion_01_gradient_integrity() {
    let start = std::time::Instant::now();
    let toy = ToyPipeline::new();
    let (_, analytic) = toy.loss_and_grads();
    let n = toy.n_params();
    assert_eq!(analytic.len(), n);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    let mut checked = 0usize;
    for i in 0..n {
        let plus = toy.perturb(i, h).loss_only();
        let minus = toy.perturb(i, -h).loss_only();
        let fd = (plus - minus) / (2.0 * h);
        let denom = analytic[i].abs().max(fd.abs());
        if denom < 1e-10 {
            // parameter does not influence this batch (dead ReLU path);
            // both sides agree that the gradient vanishes
            continue;
        }
        let rel = (analytic[i] - fd).abs() / denom.max(1e-8);
        worst = worst.max(rel);
        checked += 1;
        assert!(
            rel < 1e-4,
            "param {i}: analytic {} vs fd {fd} (rel {rel:.2e})",
            analytic[i]
        );
    }
    let elapsed = start.elapsed();
    assert!(checked > n / 2, "only {checked} of {n} params had live gradients");
    assert!(elapsed.as_secs() < 60, "took {elapsed:?}, budget 60 s");
    println!(
        "[criterion 1] PASS gradient integrity: {checked}/{n} live params, worst rel err {worst:.2e}, {elapsed:?}"
    );
}

#[test]
fn criterion_02_rendering_oracle_equivalence() {
    // independent transmittance-product oracle
    fn oracle(sigma: &[f64], rgb: &[f64], deltas: &[f64]) -> ([f64; 3], Vec<f64>, f64) {
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

    let mut rng = seeded_rng(2, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let s = 16;
        let sigma: Vec<f64> = (0..s).map(|_| rng.gen_range(0.0..12.0)).collect();
        let rgb: Vec<f64> = (0..s * 3).map(|_| rng.gen_range(0.0..1.0)).collect();
        let deltas: Vec<f64> = (0..s).map(|_| rng.gen_range(0.005..0.6)).collect();

        let mut tape = Tape::<f64>::new();
        let sv = tape.constant(Tensor::from_vec(vec![1, s], sigma.clone()));
        let cv = tape.constant(Tensor::from_vec(vec![1, s, 3], rgb.clone()));
        let dv = tape.constant(Tensor::from_vec(vec![1, s], deltas.clone()));
        let out = composite_on_tape(&mut tape, sv, cv, dv, false);
        let color = tape.value(out.color).to_vec();
        let weights = tape.value(out.weights).to_vec();
        let residual = tape.value(out.residual).item();

        let (oc, ow, ot) = oracle(&sigma, &rgb, &deltas);
        for c in 0..3 {
            worst = worst.max((color[c] - oc[c]).abs());
        }
        for i in 0..s {
            worst = worst.max((weights[i] - ow[i]).abs());
            assert!(weights[i] >= 0.0);
        }
        worst = worst.max((residual - ot).abs());
        assert!(worst < 1e-10, "oracle deviation {worst}");
        let total: f64 = weights.iter().sum::<f64>() + residual;
        assert!((total - 1.0).abs() < 1e-6, "weight simplex violated: {total}");
    }

    // the same quadrature reached through render_ray (field evaluation
    // feeding the compositor)
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
        3,
    );
    let ray = ntf4::camera::Ray {
        origin: Vector3::new(0.1, -0.2, 4.0),
        direction: Vector3::new(0.05, 0.02, -1.0).normalize(),
        near: 2.0,
        far: 6.0,
    };
    let mut rng2 = seeded_rng(9, 1);
    let samples = sample_ray(&ray, 16, true, &mut rng2);
    let result = ntf4::render::render_ray(&field, &ray, &samples, false);
    // recompute sigma/rgb at the samples and run the oracle on them
    let mut pts = Vec::new();
    let mut dirs = Vec::new();
    for &h in &samples.distances {
        let p = ray.origin + ray.direction * h;
        pts.extend_from_slice(&[p.x, p.y, p.z]);
        dirs.extend_from_slice(&[ray.direction.x, ray.direction.y, ray.direction.z]);
    }
    let (sigma, rgb) = field.eval(&pts, &dirs);
    let deltas = ntf4::render::sample_deltas(&samples.distances, ray.far);
    let (oc, _, ot) = oracle(&sigma, &rgb, &deltas);
    for c in 0..3 {
        assert!((result.color[c] - oc[c]).abs() < 1e-10);
    }
    assert!((result.transmittance_residual - ot).abs() < 1e-10);

    println!("[criterion 2] PASS rendering oracle: 1000 random fields, worst abs deviation {worst:.2e}");
}

#[test]
fn criterion_03_sim3_recovery() {
    let start = std::time::Instant::now();
    let mut rng = seeded_rng(3, 0);
    let mut worst_scale: f64 = 0.0;
    let mut worst_rot: f64 = 0.0;
    let mut worst_err: f64 = 0.0;
    for _ in 0..100 {
        let traj: Vec<PoseSE3<f64>> = (0..20)
            .map(|_| {
                exp_se3(&Twist6::new(
                    Vector3::new(
                        rng.gen_range(-1.2..1.2),
                        rng.gen_range(-1.2..1.2),
                        rng.gen_range(-1.2..1.2),
                    ),
                    Vector3::new(
                        rng.gen_range(-5.0..5.0),
                        rng.gen_range(-5.0..5.0),
                        rng.gen_range(-5.0..5.0),
                    ),
                ))
            })
            .collect();
        let g = Sim3::new(
            rng.gen_range(0.2..4.0),
            Rotation3::from_axis_angle(Vector3::new(
                rng.gen_range(-1.5..1.5),
                rng.gen_range(-1.5..1.5),
                rng.gen_range(-1.5..1.5),
            )),
            Vector3::new(
                rng.gen_range(-4.0..4.0),
                rng.gen_range(-4.0..4.0),
                rng.gen_range(-4.0..4.0),
            ),
        )
        .unwrap();
        let reference: Vec<PoseSE3<f64>> = traj.iter().map(|p| g.apply_pose(p)).collect();
        let recovered = align_sim3(&traj, &reference).unwrap();
        worst_scale = worst_scale.max((recovered.scale() - g.scale()).abs() / g.scale());
        worst_rot = worst_rot.max(
            recovered
                .rotation
                .geodesic_angle(&g.rotation)
                .to_degrees(),
        );
        let report = pose_errors(&traj, &reference).unwrap();
        worst_err = worst_err
            .max(report.mean_rot_deg)
            .max(report.mean_trans);
        assert!(worst_scale < 1e-8, "scale error {worst_scale}");
        assert!(worst_rot < 1e-7, "rotation error {worst_rot} deg");
        assert!(worst_err < 1e-7, "post-alignment error {worst_err}");
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 10, "took {elapsed:?}, budget 10 s");
    println!(
        "[criterion 3] PASS Sim(3) recovery: worst rel scale {worst_scale:.2e}, worst rot {worst_rot:.2e} deg, worst residual {worst_err:.2e}, {elapsed:?}"
    );
}

#[test]
fn criterion_08_metrics_self_consistency() {
    let mut rng = seeded_rng(8, 0);
    let mut img = ImageBuf::<f64>::new(12, 9);
    for v in img.data.iter_mut() {
        *v = rng.gen_range(0.0..1.0);
    }
    assert_eq!(psnr_images(&img, &img), PSNR_CAP_DB);
    assert!((ssim_images(&img, &img) - 1.0).abs() < 1e-9);

    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let mut a = ImageBuf::<f64>::new(7, 5);
        let mut b = ImageBuf::<f64>::new(7, 5);
        for v in a.data.iter_mut() {
            *v = rng.gen_range(0.0..1.0);
        }
        for v in b.data.iter_mut() {
            *v = rng.gen_range(0.0..1.0);
        }
        let expected = -10.0 * mse_images(&a, &b).log10();
        worst = worst.max((psnr_images(&a, &b) - expected).abs());
    }
    assert!(worst < 1e-9, "PSNR oracle deviation {worst}");
    println!("[criterion 8] PASS metrics self-consistency: PSNR cap {PSNR_CAP_DB} dB, worst oracle dev {worst:.2e} dB");
}

#[test]
fn criterion_10_focal_parameterization_exactness() {
    let groups = [
        CameraGroup::new(0, 780, 520).unwrap(),
        CameraGroup::new(1, 32, 32).unwrap(),
        CameraGroup::new(2, 1560, 1040).unwrap(),
    ];
    let bank = FocalBank::<f64>::new(3);
    for g in &groups {
        let (fx, fy) = focal_of(&bank, g).unwrap();
        assert_eq!(fx, g.width as f64, "f_x must equal W bit-exactly");
        assert_eq!(fy, g.height as f64, "f_y must equal H bit-exactly");
    }
    let bank32 = FocalBank::<f32>::new(3);
    for g in &groups {
        let (fx, fy) = focal_of(&bank32, g).unwrap();
        assert_eq!(fx, g.width as f32);
        assert_eq!(fy, g.height as f32);
    }
    println!("[criterion 10] PASS focal parameterization exactness: s=1 gives (W, H) bit-exactly at f32 and f64");
}

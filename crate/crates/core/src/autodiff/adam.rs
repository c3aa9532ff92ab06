//! Adam optimizer with bias correction, plus the step-decay learning-rate
//! schedules used for the scene MLP and the camera parameters.

use num_traits::Float;

use super::tensor::Tensor;
use crate::scalar::Scalar;

/// First/second moment estimates for one parameter list.
#[derive(Clone, Debug)]
pub struct AdamState<T> {
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
    pub step: u64,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
}

impl<T: Scalar> AdamState<T> {
    /// Zero-initialized moments matching `shapes`.
    pub fn new(shapes: &[Vec<usize>]) -> Self {
        AdamState {
            m: shapes.iter().map(|s| Tensor::zeros(s.clone())).collect(),
            v: shapes.iter().map(|s| Tensor::zeros(s.clone())).collect(),
            step: 0,
            beta1: T::of_f64(0.9),
            beta2: T::of_f64(0.999),
            eps: T::of_f64(1e-8),
        }
    }
}

/// One Adam update over a parameter list. `grads[i] = None` is treated as
/// a zero gradient (the moment estimates still decay).
///
/// Returns an error if any gradient shape disagrees with its parameter.
pub fn adam_step<T: Scalar>(
    params: &mut [Tensor<T>],
    grads: &[Option<Tensor<T>>],
    state: &mut AdamState<T>,
    lr: T,
) -> Result<(), String> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(format!(
            "adam_step: {} params, {} grads, {} moment slots",
            params.len(),
            grads.len(),
            state.m.len()
        ));
    }
    for (i, p) in params.iter().enumerate() {
        if let Some(g) = &grads[i] {
            if g.shape() != p.shape() {
                return Err(format!(
                    "adam_step: grad shape {:?} != param shape {:?} at index {i}",
                    g.shape(),
                    p.shape()
                ));
            }
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let bc1 = T::one() - Float::powi(b1, t);
    let bc2 = T::one() - Float::powi(b2, t);
    let one = T::one();
    for i in 0..params.len() {
        let zero_grad;
        let g = match &grads[i] {
            Some(g) => g,
            None => {
                zero_grad = Tensor::zeros(params[i].shape().to_vec());
                &zero_grad
            }
        };
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        let p = params[i].data_mut();
        let gd = g.data();
        for j in 0..p.len() {
            m[j] = b1 * m[j] + (one - b1) * gd[j];
            v[j] = b2 * v[j] + (one - b2) * gd[j] * gd[j];
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            p[j] -= lr * m_hat / (Float::sqrt(v_hat) + state.eps);
        }
    }
    Ok(())
}

/// Which parameter group a schedule drives.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScheduleKind {
    /// Scene MLP: decayed by 0.9954 every 10 epochs.
    Field,
    /// Pose network and focal scales: decayed by 0.9 every 100 epochs.
    Camera,
}

/// Step-decay learning-rate schedule: `base * decay^(epoch / every)`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LrSchedule {
    pub base: f64,
    pub decay: f64,
    pub every: u64,
}

impl LrSchedule {
    pub fn new(kind: ScheduleKind) -> Self {
        match kind {
            ScheduleKind::Field => LrSchedule {
                base: 1e-3,
                decay: 0.9954,
                every: 10,
            },
            ScheduleKind::Camera => LrSchedule {
                base: 1e-3,
                decay: 0.9,
                every: 100,
            },
        }
    }

    pub fn multiplier(&self, epoch: u64) -> f64 {
        self.decay.powi((epoch / self.every) as i32)
    }

    pub fn lr(&self, epoch: u64) -> f64 {
        self.base * self.multiplier(epoch)
    }

    /// Constant zero schedule (frozen parameter group).
    pub fn frozen() -> Self {
        LrSchedule {
            base: 0.0,
            decay: 1.0,
            every: 1,
        }
    }
}

/// Schedule multiplier for a parameter group at `epoch`.
pub fn lr_schedule(kind: ScheduleKind, epoch: u64) -> f64 {
    LrSchedule::new(kind).multiplier(epoch)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Reference Adam on a single scalar, written independently of
    /// `adam_step` (plain f64 arithmetic, textbook update).
    fn reference_adam_trace(g: f64, lr: f64, steps: usize) -> Vec<f64> {
        let (b1, b2, eps) = (0.9, 0.999, 1e-8);
        let (mut m, mut v, mut p) = (0.0, 0.0, 0.0);
        let mut out = Vec::new();
        for t in 1..=steps {
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t as i32));
            let vh = v / (1.0 - b2.powi(t as i32));
            p -= lr * mh / (vh.sqrt() + eps);
            out.push(p);
        }
        out
    }

    #[test]
    fn zero_grad_leaves_params_unchanged() {
        let mut params = vec![Tensor::<f64>::from_vec(vec![3], vec![1.0, -2.0, 3.0])];
        let before = params[0].to_vec();
        let mut state = AdamState::new(&[vec![3]]);
        let grads = vec![Some(Tensor::zeros(vec![3]))];
        adam_step(&mut params, &grads, &mut state, 1e-3).unwrap();
        assert_eq!(params[0].to_vec(), before);
    }

    #[test]
    fn first_step_moves_by_about_lr() {
        // Bias-corrected first step with unit gradient: p -= lr * g/|g|.
        let mut params = vec![Tensor::<f64>::scalar(0.0)];
        let mut state = AdamState::new(&[vec![1]]);
        let grads = vec![Some(Tensor::scalar(1.0))];
        adam_step(&mut params, &grads, &mut state, 1e-3).unwrap();
        let expected = -1e-3 / (1.0 + 1e-8);
        assert!((params[0].item() - expected).abs() < 1e-12);
    }

    #[test]
    fn matches_reference_trace_for_constant_grad() {
        let expected = reference_adam_trace(0.37, 1e-2, 2);
        let mut params = vec![Tensor::<f64>::scalar(0.0)];
        let mut state = AdamState::new(&[vec![1]]);
        for step in 0..2 {
            let grads = vec![Some(Tensor::scalar(0.37))];
            adam_step(&mut params, &grads, &mut state, 1e-2).unwrap();
            assert!(
                (params[0].item() - expected[step]).abs() < 1e-15,
                "step {step}: {} vs {}",
                params[0].item(),
                expected[step]
            );
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut params = vec![Tensor::<f64>::zeros(vec![2])];
        let mut state = AdamState::new(&[vec![2]]);
        let grads = vec![Some(Tensor::zeros(vec![3]))];
        assert!(adam_step(&mut params, &grads, &mut state, 1e-3).is_err());
    }

    #[test]
    fn schedule_closed_forms() {
        let field = LrSchedule::new(ScheduleKind::Field);
        let camera = LrSchedule::new(ScheduleKind::Camera);
        assert_eq!(field.lr(0), 1e-3);
        assert_eq!(camera.lr(0), 1e-3);
        assert!((field.lr(10) - 1e-3 * 0.9954).abs() < 1e-18);
        assert!((camera.lr(200) - 1e-3 * 0.81).abs() < 1e-18);
        assert_eq!(lr_schedule(ScheduleKind::Field, 9), 1.0);
        assert!((lr_schedule(ScheduleKind::Camera, 100) - 0.9).abs() < 1e-15);
    }
}

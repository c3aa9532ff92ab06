//! Minimal reverse-mode automatic differentiation over dense tensors.

mod adam;
mod init;
mod tape;
mod tensor;

pub use adam::{adam_step, lr_schedule, AdamState, LrSchedule, ScheduleKind};
pub use init::{kaiming_init, seeded_rng};
pub use tape::{Gradients, Tape, Var};
pub use tensor::{binary_broadcast, broadcast_shape, reduce_to_shape, sum_axis, Tensor};

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn finite(x: f64) -> bool {
        x.is_finite()
    }

    #[test]
    fn sum_backward_is_ones() {
        let mut tape = Tape::<f64>::new();
        let x = tape.var(Tensor::from_vec(vec![3], vec![1.0, 2.0, 3.0]));
        let s = tape.sum(x);
        let grads = tape.backward(s);
        assert_eq!(grads.get(x).unwrap().to_vec(), vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn gelu_at_zero() {
        let mut tape = Tape::<f64>::new();
        let x = tape.var(Tensor::scalar(0.0));
        let y = tape.gelu(x);
        assert_eq!(tape.value(y).item(), 0.0);
        let grads = tape.backward(y);
        assert!((grads.get(x).unwrap().item() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn matmul_forward_and_backward() {
        let mut tape = Tape::<f64>::new();
        let a = tape.var(Tensor::from_vec(vec![2, 3], vec![1., 2., 3., 4., 5., 6.]));
        let b = tape.var(Tensor::from_vec(vec![3, 2], vec![7., 8., 9., 10., 11., 12.]));
        let c = tape.matmul(a, b);
        assert_eq!(tape.value(c).to_vec(), vec![58., 64., 139., 154.]);
        let s = tape.sum(c);
        let grads = tape.backward(s);
        // dA = ones(2,2) * B^T
        assert_eq!(
            grads.get(a).unwrap().to_vec(),
            vec![15., 19., 23., 15., 19., 23.]
        );
        // dB = A^T * ones(2,2)
        assert_eq!(grads.get(b).unwrap().to_vec(), vec![5., 5., 7., 7., 9., 9.]);
    }

    #[test]
    #[should_panic(expected = "inner dims differ")]
    fn matmul_shape_mismatch_panics() {
        let mut tape = Tape::<f64>::new();
        let a = tape.var(Tensor::zeros(vec![2, 3]));
        let b = tape.var(Tensor::zeros(vec![2, 2]));
        tape.matmul(a, b);
    }

    #[test]
    fn cumsum_exclusive_forward() {
        let mut tape = Tape::<f64>::new();
        let x = tape.var(Tensor::from_vec(vec![2, 3], vec![1., 2., 3., 10., 20., 30.]));
        let y = tape.cumsum_exclusive(x);
        assert_eq!(tape.value(y).to_vec(), vec![0., 1., 3., 0., 10., 30.]);
    }

    #[test]
    fn backward_twice_is_identical() {
        let mut tape = Tape::<f64>::new();
        let x = tape.var(Tensor::from_vec(vec![4], vec![0.3, -0.7, 1.1, 0.05]));
        let y = tape.gelu(x);
        let z = tape.square(y);
        let s = tape.mean(z);
        let g1 = tape.backward(s);
        let g2 = tape.backward(s);
        assert_eq!(g1.get(x).unwrap().to_vec(), g2.get(x).unwrap().to_vec());
    }

    /// Build a random composite graph mixing most primitives and check
    /// every input gradient against central finite differences.
    #[test]
    fn composite_graph_matches_finite_differences() {
        let mut rng = seeded_rng(2024, 1);
        for round in 0..5 {
            let n = 3;
            let xs: Vec<f64> = (0..n * 3).map(|_| rng.gen_range(-1.2..1.2)).collect();
            let ws: Vec<f64> = (0..9).map(|_| rng.gen_range(-0.8..0.8)).collect();

            let eval = |xv: &[f64], wv: &[f64]| -> (f64, Vec<f64>, Vec<f64>) {
                let mut tape = Tape::<f64>::new();
                let x = tape.var(Tensor::from_vec(vec![n, 3], xv.to_vec()));
                let w = tape.var(Tensor::from_vec(vec![3, 3], wv.to_vec()));
                let h = tape.matmul(x, w);
                let hs = tape.sin(h);
                let hc = tape.cos(h);
                let mixed = tape.mul(hs, hc);
                let sq = tape.square(mixed);
                let e = tape.scale(sq, 0.5);
                let ne = tape.neg(e);
                let ex = tape.exp(ne);
                let g = tape.gelu(h);
                let cat = tape.concat(&[ex, g], 1);
                let row_sums = tape.sum_axis(cat, 1);
                let sig = tape.sigmoid(row_sums);
                let cs = tape.cumsum_exclusive(sig);
                let total = tape.mean(cs);
                let loss = tape.value(total).item();
                let grads = tape.backward(total);
                (
                    loss,
                    grads.get(x).unwrap().to_vec(),
                    grads.get(w).unwrap().to_vec(),
                )
            };

            let (_, gx, gw) = eval(&xs, &ws);
            let h = 1e-6;
            for i in 0..xs.len() {
                let mut plus = xs.clone();
                plus[i] += h;
                let mut minus = xs.clone();
                minus[i] -= h;
                let fd = (eval(&plus, &ws).0 - eval(&minus, &ws).0) / (2.0 * h);
                let denom = gx[i].abs().max(fd.abs()).max(1e-6);
                assert!(
                    finite(gx[i]) && (gx[i] - fd).abs() / denom < 1e-4,
                    "round {round}: dx[{i}] analytic {} vs fd {fd}",
                    gx[i]
                );
            }
            for i in 0..ws.len() {
                let mut plus = ws.clone();
                plus[i] += h;
                let mut minus = ws.clone();
                minus[i] -= h;
                let fd = (eval(&xs, &plus).0 - eval(&xs, &minus).0) / (2.0 * h);
                let denom = gw[i].abs().max(fd.abs()).max(1e-6);
                assert!(
                    (gw[i] - fd).abs() / denom < 1e-4,
                    "round {round}: dw[{i}] analytic {} vs fd {fd}",
                    gw[i]
                );
            }
        }
    }

    #[test]
    fn lie_and_hat_match_finite_differences() {
        let mut rng = seeded_rng(7, 3);
        let w0: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let eval = |wv: &[f64]| -> (f64, Vec<f64>) {
            let mut tape = Tape::<f64>::new();
            let w = tape.var(Tensor::from_vec(vec![3], wv.to_vec()));
            let sq = tape.square(w);
            let u = tape.sum(sq);
            let a = tape.lie_a(u);
            let b = tape.lie_b(u);
            let c = tape.lie_c(u);
            let omega = tape.hat(w);
            let omega2 = tape.matmul(omega, omega);
            let ao = tape.mul(a, omega);
            let bo = tape.mul(b, omega2);
            let co = tape.mul(c, omega2);
            let s1 = tape.add(ao, bo);
            let s2 = tape.add(s1, co);
            let total = tape.mean(s2);
            let loss = tape.value(total).item();
            let grads = tape.backward(total);
            (loss, grads.get(w).unwrap().to_vec())
        };
        let (_, g) = eval(&w0);
        let h = 1e-6;
        for i in 0..3 {
            let mut plus = w0.clone();
            plus[i] += h;
            let mut minus = w0.clone();
            minus[i] -= h;
            let fd = (eval(&plus).0 - eval(&minus).0) / (2.0 * h);
            assert!(
                (g[i] - fd).abs() / fd.abs().max(g[i].abs()).max(1e-6) < 1e-4,
                "dw[{i}] analytic {} vs fd {fd}",
                g[i]
            );
        }
        // Same graph at the exact zero twist must be finite.
        let (loss0, g0) = eval(&[0.0, 0.0, 0.0]);
        assert!(finite(loss0));
        assert!(g0.iter().all(|x| finite(*x)));
    }

    #[test]
    fn broadcast_add_reduces_gradient() {
        let mut tape = Tape::<f64>::new();
        let x = tape.var(Tensor::from_vec(vec![2, 3], vec![1., 2., 3., 4., 5., 6.]));
        let b = tape.var(Tensor::from_vec(vec![3], vec![0.1, 0.2, 0.3]));
        let y = tape.add(x, b);
        let s = tape.sum(y);
        let grads = tape.backward(s);
        assert_eq!(grads.get(b).unwrap().to_vec(), vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn slice_concat_roundtrip_gradient() {
        let mut tape = Tape::<f64>::new();
        let x = tape.var(Tensor::from_vec(vec![6], (1..=6).map(f64::from).collect()));
        let a = tape.slice(x, 0, 0, 3);
        let b = tape.slice(x, 0, 3, 3);
        let two_b = tape.scale(b, 2.0);
        let y = tape.concat(&[a, two_b], 0);
        let s = tape.sum(y);
        let grads = tape.backward(s);
        assert_eq!(
            grads.get(x).unwrap().to_vec(),
            vec![1.0, 1.0, 1.0, 2.0, 2.0, 2.0]
        );
    }

    #[test]
    fn no_nan_on_guarded_domains() {
        let mut tape = Tape::<f64>::new();
        let x = tape.var(Tensor::from_vec(vec![3], vec![0.0, 1e-18, 750.0]));
        let r = tape.sqrt(x);
        let e = tape.exp(x);
        assert!(tape.value(r).is_all_finite());
        assert!(tape.value(e).is_all_finite());
        let s1 = tape.sum(r);
        let grads = tape.backward(s1);
        assert!(grads.get(x).unwrap().is_all_finite());
    }
}

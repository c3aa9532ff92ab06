//! Reverse-mode tape over dense tensors.
//!
//! A [`Tape`] records every primitive as it evaluates (define-by-run);
//! [`Tape::backward`] replays the record once in reverse topological
//! order, accumulating exact vector-Jacobian products. One tape belongs
//! to one thread of execution; graphs for different batches are built on
//! separate tapes.
//!
//! Shape errors are programmer errors and panic with a message naming
//! the offending shapes.

use num_traits::Float;

use super::tensor::{
    binary_broadcast, expand_to, reduce_to_shape, sum_axis, Tensor,
};
use crate::lie;
use crate::scalar::Scalar;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Neg(Var),
    Scale(Var, T),
    AddScalar(Var, T),
    Matmul(Var, Var),
    Transpose(Var),
    Sum(Var),
    Mean(Var),
    SumAxis(Var, usize),
    Broadcast(Var),
    Concat(Vec<Var>, usize),
    Slice(Var, usize, usize),
    Reshape(Var),
    Sin(Var),
    Cos(Var),
    Exp(Var),
    Sqrt(Var),
    Square(Var),
    Relu(Var),
    Gelu(Var),
    Sigmoid(Var),
    CumsumExclusive(Var),
    LieA(Var),
    LieB(Var),
    LieC(Var),
    Hat(Var),
    Posenc {
        input: Var,
        freqs: Vec<T>,
        include_input: bool,
    },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

pub struct Tape<T: Scalar> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Value of a node (forward values always exist).
    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    /// Differentiable leaf (a trainable parameter).
    pub fn var(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Non-differentiable leaf.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn constant_scalar(&mut self, value: T) -> Var {
        self.constant(Tensor::scalar(value))
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn unary(&mut self, a: Var, value: Tensor<T>, op: Op<T>) -> Var {
        let rg = self.rg(a);
        self.push(value, op, rg)
    }

    fn binary(&mut self, a: Var, b: Var, value: Tensor<T>, op: Op<T>) -> Var {
        let rg = self.rg(a) || self.rg(b);
        self.push(value, op, rg)
    }

    // ---- elementwise binary ----------------------------------------

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = binary_broadcast(self.value(a), self.value(b), |x, y| x + y);
        self.binary(a, b, v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = binary_broadcast(self.value(a), self.value(b), |x, y| x - y);
        self.binary(a, b, v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = binary_broadcast(self.value(a), self.value(b), |x, y| x * y);
        self.binary(a, b, v, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        let v = binary_broadcast(self.value(a), self.value(b), |x, y| x / y);
        self.binary(a, b, v, Op::Div(a, b))
    }

    // ---- elementwise unary -----------------------------------------

    pub fn neg(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| -x);
        self.unary(a, v, Op::Neg(a))
    }

    pub fn scale(&mut self, a: Var, c: T) -> Var {
        let v = self.value(a).map(|x| x * c);
        self.unary(a, v, Op::Scale(a, c))
    }

    pub fn add_scalar(&mut self, a: Var, c: T) -> Var {
        let v = self.value(a).map(|x| x + c);
        self.unary(a, v, Op::AddScalar(a, c))
    }

    pub fn sin(&mut self, a: Var) -> Var {
        let v = self.value(a).map(Float::sin);
        self.unary(a, v, Op::Sin(a))
    }

    pub fn cos(&mut self, a: Var) -> Var {
        let v = self.value(a).map(Float::cos);
        self.unary(a, v, Op::Cos(a))
    }

    /// Exponential, input clamped to the largest value whose exp is
    /// finite so that finite inputs never produce non-finite outputs.
    /// NaN inputs propagate (the comparisons below are false for NaN).
    pub fn exp(&mut self, a: Var) -> Var {
        let clamp = exp_clamp::<T>();
        let v = self
            .value(a)
            .map(|x| Float::exp(if x > clamp { clamp } else { x }));
        self.unary(a, v, Op::Exp(a))
    }

    /// Square root. Domain is `x >= 0`; tiny negative inputs (rounding
    /// noise) are clamped to zero rather than producing NaN. NaN inputs
    /// propagate.
    pub fn sqrt(&mut self, a: Var) -> Var {
        let v = self
            .value(a)
            .map(|x| Float::sqrt(if x < T::zero() { T::zero() } else { x }));
        self.unary(a, v, Op::Sqrt(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x * x);
        self.unary(a, v, Op::Square(a))
    }

    /// NaN inputs propagate rather than flushing to zero.
    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| {
            if x > T::zero() || x != x {
                x
            } else {
                T::zero()
            }
        });
        self.unary(a, v, Op::Relu(a))
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(gelu_value);
        self.unary(a, v, Op::Gelu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(sigmoid_value);
        self.unary(a, v, Op::Sigmoid(a))
    }

    // ---- Lie rotation coefficients on u = theta^2 -------------------

    pub fn lie_a(&mut self, u: Var) -> Var {
        let v = self.value(u).map(lie::lie_a);
        self.unary(u, v, Op::LieA(u))
    }

    pub fn lie_b(&mut self, u: Var) -> Var {
        let v = self.value(u).map(lie::lie_b);
        self.unary(u, v, Op::LieB(u))
    }

    pub fn lie_c(&mut self, u: Var) -> Var {
        let v = self.value(u).map(lie::lie_c);
        self.unary(u, v, Op::LieC(u))
    }

    /// Fused sinusoidal (positional) encoding of a `[n, d]` batch:
    /// `[x?, cos(f_0 x), .., cos(f_{m-1} x), sin(f_0 x), .., sin(f_{m-1} x)]`
    /// concatenated along the feature axis, `[n, d * (2m + include)]`.
    /// One node instead of the ~4m ops of the unfused composition.
    pub fn posenc(&mut self, input: Var, freqs: &[T], include_input: bool) -> Var {
        let iv = self.value(input);
        assert_eq!(iv.shape().len(), 2, "posenc expects [n, d], got {:?}", iv.shape());
        let (n, d) = (iv.shape()[0], iv.shape()[1]);
        let m = freqs.len();
        let blocks = 2 * m + usize::from(include_input);
        let out_dim = d * blocks;
        let data = iv.data();
        let mut out = vec![T::zero(); n * out_dim];
        let base = usize::from(include_input) * d;
        for row in 0..n {
            let src = &data[row * d..(row + 1) * d];
            let dst = &mut out[row * out_dim..(row + 1) * out_dim];
            if include_input {
                dst[..d].copy_from_slice(src);
            }
            for (j, &f) in freqs.iter().enumerate() {
                for (k, &x) in src.iter().enumerate() {
                    let (s, c) = Float::sin_cos(f * x);
                    dst[base + j * d + k] = c;
                    dst[base + (m + j) * d + k] = s;
                }
            }
        }
        let v = Tensor::from_vec(vec![n, out_dim], out);
        self.unary(
            input,
            v,
            Op::Posenc {
                input,
                freqs: freqs.to_vec(),
                include_input,
            },
        )
    }

    /// Skew-symmetric (cross-product) matrix of a 3-vector.
    pub fn hat(&mut self, w: Var) -> Var {
        let wv = self.value(w);
        assert_eq!(wv.shape(), &[3], "hat expects shape [3], got {:?}", wv.shape());
        let d = wv.data();
        let (w0, w1, w2) = (d[0], d[1], d[2]);
        let z = T::zero();
        let v = Tensor::from_vec(vec![3, 3], vec![z, -w2, w1, w2, z, -w0, -w1, w0, z]);
        self.unary(w, v, Op::Hat(w))
    }

    // ---- structure ---------------------------------------------------

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.shape().len(), 2, "matmul lhs must be 2-D, got {:?}", av.shape());
        assert_eq!(bv.shape().len(), 2, "matmul rhs must be 2-D, got {:?}", bv.shape());
        let (n, k) = (av.shape()[0], av.shape()[1]);
        let (k2, m) = (bv.shape()[0], bv.shape()[1]);
        assert_eq!(k, k2, "matmul inner dims differ: {:?} x {:?}", av.shape(), bv.shape());
        let out = matmul_nn(av.data(), bv.data(), n, k, m);
        let v = Tensor::from_vec(vec![n, m], out);
        self.binary(a, b, v, Op::Matmul(a, b))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let av = self.value(a);
        assert_eq!(av.shape().len(), 2, "transpose expects 2-D, got {:?}", av.shape());
        let (n, m) = (av.shape()[0], av.shape()[1]);
        let v = Tensor::from_vec(vec![m, n], transpose_raw(av.data(), n, m));
        self.unary(a, v, Op::Transpose(a))
    }

    /// Sum of all elements, shape `[1]`.
    pub fn sum(&mut self, a: Var) -> Var {
        let s: T = self.value(a).data().iter().copied().sum();
        self.unary(a, Tensor::scalar(s), Op::Sum(a))
    }

    /// Mean of all elements, shape `[1]`.
    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).numel();
        let s: T = self.value(a).data().iter().copied().sum();
        let v = Tensor::scalar(s / T::of_usize(n));
        self.unary(a, v, Op::Mean(a))
    }

    /// Sum along `axis`, keeping the axis with size 1.
    pub fn sum_axis(&mut self, a: Var, axis: usize) -> Var {
        let v = sum_axis(self.value(a), axis, true);
        self.unary(a, v, Op::SumAxis(a, axis))
    }

    pub fn broadcast(&mut self, a: Var, shape: &[usize]) -> Var {
        let v = expand_to(self.value(a), shape);
        self.unary(a, v, Op::Broadcast(a))
    }

    pub fn reshape(&mut self, a: Var, shape: impl Into<Vec<usize>>) -> Var {
        let v = self.value(a).reshaped(shape);
        self.unary(a, v, Op::Reshape(a))
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Var {
        assert!(!parts.is_empty(), "concat of zero tensors");
        let first = self.value(parts[0]).shape().to_vec();
        let rank = first.len();
        assert!(axis < rank, "concat axis {} out of rank {}", axis, rank);
        let mut axis_total = 0usize;
        for &p in parts {
            let s = self.value(p).shape();
            assert_eq!(s.len(), rank, "concat rank mismatch");
            for d in 0..rank {
                if d != axis {
                    assert_eq!(s[d], first[d], "concat shape mismatch on axis {}", d);
                }
            }
            axis_total += s[axis];
        }
        let mut out_shape = first.clone();
        out_shape[axis] = axis_total;
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let mut out = vec![T::zero(); out_shape.iter().product()];
        let mut offset = 0usize;
        for &p in parts {
            let pv = self.value(p);
            let pa = pv.shape()[axis];
            let pd = pv.data();
            for o in 0..outer {
                let src = &pd[o * pa * inner..(o + 1) * pa * inner];
                let dst_base = o * axis_total * inner + offset * inner;
                out[dst_base..dst_base + pa * inner].copy_from_slice(src);
            }
            offset += pa;
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        self.push(
            Tensor::from_vec(out_shape, out),
            Op::Concat(parts.to_vec(), axis),
            rg,
        )
    }

    /// Contiguous range `[start, start+len)` along `axis`.
    pub fn slice(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Var {
        let av = self.value(a);
        let shape = av.shape().to_vec();
        assert!(axis < shape.len(), "slice axis {} out of rank {}", axis, shape.len());
        assert!(
            start + len <= shape[axis],
            "slice [{start}, {}) exceeds axis size {}",
            start + len,
            shape[axis]
        );
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let mid = shape[axis];
        let mut out = Vec::with_capacity(outer * len * inner);
        let data = av.data();
        for o in 0..outer {
            let base = o * mid * inner + start * inner;
            out.extend_from_slice(&data[base..base + len * inner]);
        }
        let mut out_shape = shape;
        out_shape[axis] = len;
        let v = Tensor::from_vec(out_shape, out);
        self.unary(a, v, Op::Slice(a, axis, start))
    }

    /// Exclusive prefix sum along the last axis:
    /// `y[..., i] = sum_{j < i} x[..., j]`.
    pub fn cumsum_exclusive(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let shape = av.shape().to_vec();
        let s = *shape.last().expect("cumsum_exclusive on 0-rank tensor");
        let rows = av.numel() / s;
        let data = av.data();
        let mut out = vec![T::zero(); av.numel()];
        for r in 0..rows {
            let base = r * s;
            let mut acc = T::zero();
            for i in 0..s {
                out[base + i] = acc;
                acc += data[base + i];
            }
        }
        let v = Tensor::from_vec(shape, out);
        self.unary(a, v, Op::CumsumExclusive(a))
    }

    // ---- backward ----------------------------------------------------

    /// Accumulate gradients of `loss` (a one-element tensor) with respect
    /// to every node that requires grad. Deterministic: same graph, same
    /// gradients, bit for bit.
    pub fn backward(&self, loss: Var) -> Gradients<T> {
        assert_eq!(
            self.value(loss).numel(),
            1,
            "backward expects a scalar loss, got shape {:?}",
            self.value(loss).shape()
        );
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(self.value(loss).shape().to_vec(), T::one()));

        for id in (0..=loss.0).rev() {
            if !self.nodes[id].requires_grad {
                continue;
            }
            let Some(g) = grads[id].clone() else { continue };
            match &self.nodes[id].op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    self.accum_reduced(&mut grads, *a, &g);
                    self.accum_reduced(&mut grads, *b, &g);
                }
                Op::Sub(a, b) => {
                    self.accum_reduced(&mut grads, *a, &g);
                    let neg = g.map(|x| -x);
                    self.accum_reduced(&mut grads, *b, &neg);
                }
                Op::Mul(a, b) => {
                    if self.rg(*a) {
                        let da = binary_broadcast(&g, self.value(*b), |x, y| x * y);
                        self.accum_reduced(&mut grads, *a, &da);
                    }
                    if self.rg(*b) {
                        let db = binary_broadcast(&g, self.value(*a), |x, y| x * y);
                        self.accum_reduced(&mut grads, *b, &db);
                    }
                }
                Op::Div(a, b) => {
                    if self.rg(*a) {
                        let da = binary_broadcast(&g, self.value(*b), |x, y| x / y);
                        self.accum_reduced(&mut grads, *a, &da);
                    }
                    if self.rg(*b) {
                        let y = &self.nodes[id].value;
                        let gy = binary_broadcast(&g, y, |x, v| x * v);
                        let db = binary_broadcast(&gy, self.value(*b), |x, y| -(x / y));
                        self.accum_reduced(&mut grads, *b, &db);
                    }
                }
                Op::Neg(a) => {
                    let da = g.map(|x| -x);
                    accum(&mut grads, *a, da);
                }
                Op::Scale(a, c) => {
                    let c = *c;
                    accum(&mut grads, *a, g.map(|x| x * c));
                }
                Op::AddScalar(a, _) => accum(&mut grads, *a, g),
                Op::Matmul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let (n, k) = (av.shape()[0], av.shape()[1]);
                    let m = bv.shape()[1];
                    if self.rg(*a) {
                        let da = matmul_nt(g.data(), bv.data(), n, m, k);
                        accum(&mut grads, *a, Tensor::from_vec(vec![n, k], da));
                    }
                    if self.rg(*b) {
                        let db = matmul_tn(av.data(), g.data(), n, k, m);
                        accum(&mut grads, *b, Tensor::from_vec(vec![k, m], db));
                    }
                }
                Op::Transpose(a) => {
                    let (m, n) = (g.shape()[0], g.shape()[1]);
                    let da = Tensor::from_vec(vec![n, m], transpose_raw(g.data(), m, n));
                    accum(&mut grads, *a, da);
                }
                Op::Sum(a) => {
                    let gs = g.item();
                    let da = Tensor::full(self.value(*a).shape().to_vec(), gs);
                    accum(&mut grads, *a, da);
                }
                Op::Mean(a) => {
                    let n = self.value(*a).numel();
                    let gs = g.item() / T::of_usize(n);
                    let da = Tensor::full(self.value(*a).shape().to_vec(), gs);
                    accum(&mut grads, *a, da);
                }
                Op::SumAxis(a, _axis) => {
                    let da = expand_to(&g, self.value(*a).shape());
                    accum(&mut grads, *a, da);
                }
                Op::Broadcast(a) => {
                    let da = reduce_to_shape(&g, self.value(*a).shape());
                    accum(&mut grads, *a, da);
                }
                Op::Reshape(a) => {
                    let da = g.reshaped(self.value(*a).shape().to_vec());
                    accum(&mut grads, *a, da);
                }
                Op::Concat(parts, axis) => {
                    let mut start = 0usize;
                    for &p in parts {
                        let pa = self.value(p).shape()[*axis];
                        if self.rg(p) {
                            let gp = slice_raw(&g, *axis, start, pa);
                            accum(&mut grads, p, gp);
                        }
                        start += pa;
                    }
                }
                Op::Slice(a, axis, start) => {
                    let av_shape = self.value(*a).shape().to_vec();
                    let da = scatter_slice(&g, &av_shape, *axis, *start);
                    accum(&mut grads, *a, da);
                }
                Op::Sin(a) => {
                    let da = binary_broadcast(&g, self.value(*a), |x, v| x * Float::cos(v));
                    accum(&mut grads, *a, da);
                }
                Op::Cos(a) => {
                    let da = binary_broadcast(&g, self.value(*a), |x, v| -(x * Float::sin(v)));
                    accum(&mut grads, *a, da);
                }
                Op::Exp(a) => {
                    let y = &self.nodes[id].value;
                    let da = binary_broadcast(&g, y, |x, v| x * v);
                    accum(&mut grads, *a, da);
                }
                Op::Sqrt(a) => {
                    let y = &self.nodes[id].value;
                    let floor = T::of_f64(1e-12);
                    let da = binary_broadcast(&g, y, |x, v| x / Float::max(v + v, floor));
                    accum(&mut grads, *a, da);
                }
                Op::Square(a) => {
                    let two = T::of_f64(2.0);
                    let da = binary_broadcast(&g, self.value(*a), |x, v| x * two * v);
                    accum(&mut grads, *a, da);
                }
                Op::Relu(a) => {
                    let da = binary_broadcast(&g, self.value(*a), |x, v| {
                        if v > T::zero() {
                            x
                        } else {
                            T::zero()
                        }
                    });
                    accum(&mut grads, *a, da);
                }
                Op::Gelu(a) => {
                    let da = binary_broadcast(&g, self.value(*a), |x, v| x * gelu_deriv(v));
                    accum(&mut grads, *a, da);
                }
                Op::Sigmoid(a) => {
                    let y = &self.nodes[id].value;
                    let da = binary_broadcast(&g, y, |x, v| x * v * (T::one() - v));
                    accum(&mut grads, *a, da);
                }
                Op::CumsumExclusive(a) => {
                    let s = *g.shape().last().unwrap();
                    let rows = g.numel() / s;
                    let gd = g.data();
                    let mut out = vec![T::zero(); g.numel()];
                    for r in 0..rows {
                        let base = r * s;
                        let mut acc = T::zero();
                        for i in (0..s).rev() {
                            out[base + i] = acc;
                            acc += gd[base + i];
                        }
                    }
                    accum(&mut grads, *a, Tensor::from_vec(g.shape().to_vec(), out));
                }
                Op::LieA(a) => {
                    let da = binary_broadcast(&g, self.value(*a), |x, u| x * lie::lie_a_deriv(u));
                    accum(&mut grads, *a, da);
                }
                Op::LieB(a) => {
                    let da = binary_broadcast(&g, self.value(*a), |x, u| x * lie::lie_b_deriv(u));
                    accum(&mut grads, *a, da);
                }
                Op::LieC(a) => {
                    let da = binary_broadcast(&g, self.value(*a), |x, u| x * lie::lie_c_deriv(u));
                    accum(&mut grads, *a, da);
                }
                Op::Hat(a) => {
                    let gd = g.data();
                    let da = Tensor::from_vec(
                        vec![3],
                        vec![
                            gd[7] - gd[5], // G[2,1] - G[1,2]
                            gd[2] - gd[6], // G[0,2] - G[2,0]
                            gd[3] - gd[1], // G[1,0] - G[0,1]
                        ],
                    );
                    accum(&mut grads, *a, da);
                }
                Op::Posenc {
                    input,
                    freqs,
                    include_input,
                } => {
                    let in_shape = self.value(*input).shape().to_vec();
                    let (n, d) = (in_shape[0], in_shape[1]);
                    let m = freqs.len();
                    let out_dim = d * (2 * m + usize::from(*include_input));
                    let base = usize::from(*include_input) * d;
                    let y = self.nodes[id].value.data();
                    let gd = g.data();
                    let mut dx = vec![T::zero(); n * d];
                    for row in 0..n {
                        let yrow = &y[row * out_dim..(row + 1) * out_dim];
                        let grow = &gd[row * out_dim..(row + 1) * out_dim];
                        let dxrow = &mut dx[row * d..(row + 1) * d];
                        if *include_input {
                            for k in 0..d {
                                dxrow[k] += grow[k];
                            }
                        }
                        for (j, &f) in freqs.iter().enumerate() {
                            for k in 0..d {
                                let c = yrow[base + j * d + k];
                                let s = yrow[base + (m + j) * d + k];
                                dxrow[k] +=
                                    f * (grow[base + (m + j) * d + k] * c
                                        - grow[base + j * d + k] * s);
                            }
                        }
                    }
                    accum(&mut grads, *input, Tensor::from_vec(vec![n, d], dx));
                }
            }
        }
        Gradients { grads }
    }

    fn accum_reduced(&self, grads: &mut Vec<Option<Tensor<T>>>, v: Var, g: &Tensor<T>) {
        if !self.rg(v) {
            return;
        }
        let target = self.value(v).shape().to_vec();
        let reduced = reduce_to_shape(g, &target);
        accum(grads, v, reduced);
    }
}

fn accum<T: Scalar>(grads: &mut Vec<Option<Tensor<T>>>, v: Var, delta: Tensor<T>) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&delta),
        slot @ None => *slot = Some(delta),
    }
}

// ---- kernels ---------------------------------------------------------

/// C = A(n,k) * B(k,m), row-major.
pub(crate) fn matmul_nn<T: Scalar>(a: &[T], b: &[T], n: usize, k: usize, m: usize) -> Vec<T> {
    let mut out = vec![T::zero(); n * m];
    for i in 0..n {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * m..(i + 1) * m];
        for (p, &aip) in arow.iter().enumerate() {
            let brow = &b[p * m..(p + 1) * m];
            for (o, &bv) in orow.iter_mut().zip(brow.iter()) {
                *o += aip * bv;
            }
        }
    }
    out
}

/// C = A(n,k) * B(m,k)^T -> (n,m): rows of both operands are contiguous.
fn matmul_nt<T: Scalar>(a: &[T], b: &[T], n: usize, k: usize, m: usize) -> Vec<T> {
    let mut out = vec![T::zero(); n * m];
    for i in 0..n {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * m..(i + 1) * m];
        for (j, o) in orow.iter_mut().enumerate() {
            let brow = &b[j * k..(j + 1) * k];
            let mut acc = T::zero();
            for (&x, &y) in arow.iter().zip(brow.iter()) {
                acc += x * y;
            }
            *o = acc;
        }
    }
    out
}

/// C = A(n,k)^T * G(n,m) -> (k,m).
fn matmul_tn<T: Scalar>(a: &[T], g: &[T], n: usize, k: usize, m: usize) -> Vec<T> {
    let mut out = vec![T::zero(); k * m];
    for i in 0..n {
        let arow = &a[i * k..(i + 1) * k];
        let grow = &g[i * m..(i + 1) * m];
        for (p, &aip) in arow.iter().enumerate() {
            let orow = &mut out[p * m..(p + 1) * m];
            for (o, &gv) in orow.iter_mut().zip(grow.iter()) {
                *o += aip * gv;
            }
        }
    }
    out
}

fn transpose_raw<T: Scalar>(a: &[T], n: usize, m: usize) -> Vec<T> {
    let mut out = vec![T::zero(); n * m];
    for i in 0..n {
        for j in 0..m {
            out[j * n + i] = a[i * m + j];
        }
    }
    out
}

fn slice_raw<T: Scalar>(t: &Tensor<T>, axis: usize, start: usize, len: usize) -> Tensor<T> {
    let shape = t.shape().to_vec();
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    let mid = shape[axis];
    let data = t.data();
    let mut out = Vec::with_capacity(outer * len * inner);
    for o in 0..outer {
        let base = o * mid * inner + start * inner;
        out.extend_from_slice(&data[base..base + len * inner]);
    }
    let mut out_shape = shape;
    out_shape[axis] = len;
    Tensor::from_vec(out_shape, out)
}

fn scatter_slice<T: Scalar>(
    g: &Tensor<T>,
    full_shape: &[usize],
    axis: usize,
    start: usize,
) -> Tensor<T> {
    let outer: usize = full_shape[..axis].iter().product();
    let inner: usize = full_shape[axis + 1..].iter().product();
    let mid = full_shape[axis];
    let len = g.shape()[axis];
    let mut out = vec![T::zero(); full_shape.iter().product()];
    let gd = g.data();
    for o in 0..outer {
        let src = &gd[o * len * inner..(o + 1) * len * inner];
        let base = o * mid * inner + start * inner;
        out[base..base + len * inner].copy_from_slice(src);
    }
    Tensor::from_vec(full_shape.to_vec(), out)
}

fn exp_clamp<T: Scalar>() -> T {
    // Slightly under ln(T::MAX).
    if T::DTYPE == crate::scalar::Dtype::F32 {
        T::of_f64(88.0)
    } else {
        T::of_f64(709.0)
    }
}

pub(crate) fn gelu_value<T: Scalar>(x: T) -> T {
    let c = T::of_f64(0.797_884_560_802_865_4); // sqrt(2/pi)
    let a = T::of_f64(0.044715);
    let half = T::of_f64(0.5);
    let inner = c * (x + a * x * x * x);
    half * x * (T::one() + Float::tanh(inner))
}

pub(crate) fn gelu_deriv<T: Scalar>(x: T) -> T {
    let c = T::of_f64(0.797_884_560_802_865_4);
    let a = T::of_f64(0.044715);
    let half = T::of_f64(0.5);
    let three = T::of_f64(3.0);
    let t = Float::tanh(c * (x + a * x * x * x));
    half * (T::one() + t) + half * x * (T::one() - t * t) * c * (T::one() + three * a * x * x)
}

pub(crate) fn sigmoid_value<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + Float::exp(-x))
}

//! Dense row-major tensors with cheap clones (shared storage).

use std::sync::Arc;

use crate::scalar::Scalar;

/// Dense n-dimensional array. Cloning shares storage; mutation goes
/// through [`Tensor::data_mut`], which copies on write when shared.
#[derive(Clone, Debug)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Arc<Vec<T>>,
}

impl<T: Scalar> Tensor<T> {
    pub fn from_vec(shape: impl Into<Vec<usize>>, data: Vec<T>) -> Self {
        let shape = shape.into();
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "tensor data length {} does not match shape {:?}",
            data.len(),
            shape
        );
        Tensor {
            shape,
            data: Arc::new(data),
        }
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        let shape = shape.into();
        let n = shape.iter().product();
        Tensor {
            shape,
            data: Arc::new(vec![T::zero(); n]),
        }
    }

    pub fn full(shape: impl Into<Vec<usize>>, value: T) -> Self {
        let shape = shape.into();
        let n = shape.iter().product();
        Tensor {
            shape,
            data: Arc::new(vec![value; n]),
        }
    }

    pub fn scalar(value: T) -> Self {
        Tensor::from_vec(vec![1], vec![value])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        Arc::<Vec<T>>::make_mut(&mut self.data)
    }

    pub fn to_vec(&self) -> Vec<T> {
        self.data.as_ref().clone()
    }

    /// Single element of a one-element tensor.
    pub fn item(&self) -> T {
        assert_eq!(self.numel(), 1, "item() requires a one-element tensor");
        self.data[0]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: Arc::new(self.data.iter().map(|&x| f(x)).collect()),
        }
    }

    pub fn reshaped(&self, shape: impl Into<Vec<usize>>) -> Self {
        let shape = shape.into();
        assert_eq!(
            shape.iter().product::<usize>(),
            self.numel(),
            "reshape {:?} -> {:?} changes element count",
            self.shape,
            shape
        );
        Tensor {
            shape,
            data: Arc::clone(&self.data),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor::from_vec(
            self.shape.clone(),
            self.data.iter().map(|x| U::of_f64(x.to_f64_lossy())).collect(),
        )
    }

    /// Element count along `axis`.
    pub fn dim(&self, axis: usize) -> usize {
        self.shape[axis]
    }

    /// In-place elementwise accumulation. Shapes must match.
    pub fn add_assign(&mut self, other: &Tensor<T>) {
        assert_eq!(self.shape, other.shape, "add_assign shape mismatch");
        let dst = self.data_mut();
        for (d, &s) in dst.iter_mut().zip(other.data.iter()) {
            *d += s;
        }
    }

    pub fn max_abs(&self) -> T {
        self.data
            .iter()
            .fold(T::zero(), |acc, &x| num_traits::Float::max(acc, num_traits::Float::abs(x)))
    }

    pub fn is_all_finite(&self) -> bool {
        self.data.iter().all(|x| num_traits::Float::is_finite(*x))
    }
}

/// Broadcast two shapes following the usual right-aligned rules.
/// Panics when the shapes are incompatible.
pub fn broadcast_shape(a: &[usize], b: &[usize]) -> Vec<usize> {
    let rank = a.len().max(b.len());
    let mut out = vec![0usize; rank];
    for i in 0..rank {
        let da = if i < rank - a.len() { 1 } else { a[i - (rank - a.len())] };
        let db = if i < rank - b.len() { 1 } else { b[i - (rank - b.len())] };
        out[i] = if da == db {
            da
        } else if da == 1 {
            db
        } else if db == 1 {
            da
        } else {
            panic!("shapes {:?} and {:?} are not broadcast-compatible", a, b)
        };
    }
    out
}

/// Row-major strides with zeros on broadcast (size-1 or missing) axes,
/// padded on the left to `out_rank`.
pub fn broadcast_strides(shape: &[usize], out_shape: &[usize]) -> Vec<usize> {
    let rank = out_shape.len();
    let offset = rank - shape.len();
    let mut strides = vec![0usize; rank];
    let mut acc = 1usize;
    for i in (0..shape.len()).rev() {
        strides[offset + i] = if shape[i] == 1 { 0 } else { acc };
        acc *= shape[i];
    }
    for i in 0..rank {
        if i < offset {
            strides[i] = 0;
        } else if out_shape[i] != 1 && shape[i - offset] == 1 {
            strides[i] = 0;
        }
    }
    strides
}

/// Apply `f` elementwise over the broadcast of `a` and `b`.
pub fn binary_broadcast<T: Scalar>(
    a: &Tensor<T>,
    b: &Tensor<T>,
    f: impl Fn(T, T) -> T,
) -> Tensor<T> {
    if a.shape() == b.shape() {
        let data = a
            .data()
            .iter()
            .zip(b.data().iter())
            .map(|(&x, &y)| f(x, y))
            .collect();
        return Tensor::from_vec(a.shape().to_vec(), data);
    }
    if b.numel() == 1 {
        let y = b.data()[0];
        return a.map(|x| f(x, y));
    }
    if a.numel() == 1 {
        let x = a.data()[0];
        return Tensor::from_vec(b.shape().to_vec(), b.data().iter().map(|&y| f(x, y)).collect());
    }
    let out_shape = broadcast_shape(a.shape(), b.shape());
    let n: usize = out_shape.iter().product();
    let sa = broadcast_strides(a.shape(), &out_shape);
    let sb = broadcast_strides(b.shape(), &out_shape);
    let rank = out_shape.len();
    let mut idx = vec![0usize; rank];
    let mut oa = 0usize;
    let mut ob = 0usize;
    let ad = a.data();
    let bd = b.data();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(f(ad[oa], bd[ob]));
        // odometer increment over the output index space
        for axis in (0..rank).rev() {
            idx[axis] += 1;
            oa += sa[axis];
            ob += sb[axis];
            if idx[axis] < out_shape[axis] {
                break;
            }
            oa -= sa[axis] * out_shape[axis];
            ob -= sb[axis] * out_shape[axis];
            idx[axis] = 0;
        }
    }
    Tensor::from_vec(out_shape, out)
}

/// Sum `t` down to `target_shape` (inverse of broadcasting).
pub fn reduce_to_shape<T: Scalar>(t: &Tensor<T>, target_shape: &[usize]) -> Tensor<T> {
    if t.shape() == target_shape {
        return t.clone();
    }
    let rank = t.shape().len();
    let offset = rank - target_shape.len();
    let padded: Vec<usize> = (0..rank)
        .map(|i| if i < offset { 1 } else { target_shape[i - offset] })
        .collect();
    let mut acc = t.clone();
    for axis in 0..rank {
        if padded[axis] == 1 && acc.shape()[axis] > 1 {
            acc = sum_axis(&acc, axis, true);
        }
    }
    acc.reshaped(target_shape.to_vec())
}

/// Sum along `axis`. With `keepdim` the axis stays with size 1.
pub fn sum_axis<T: Scalar>(t: &Tensor<T>, axis: usize, keepdim: bool) -> Tensor<T> {
    let shape = t.shape();
    assert!(axis < shape.len(), "sum_axis: axis {} out of rank {}", axis, shape.len());
    let outer: usize = shape[..axis].iter().product();
    let mid = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let mut out = vec![T::zero(); outer * inner];
    let data = t.data();
    for o in 0..outer {
        let base = o * mid * inner;
        let obase = o * inner;
        for m in 0..mid {
            let row = &data[base + m * inner..base + (m + 1) * inner];
            let orow = &mut out[obase..obase + inner];
            for (dst, &src) in orow.iter_mut().zip(row.iter()) {
                *dst += src;
            }
        }
    }
    let mut out_shape: Vec<usize> = shape.to_vec();
    if keepdim {
        out_shape[axis] = 1;
    } else {
        out_shape.remove(axis);
    }
    Tensor::from_vec(out_shape, out)
}

/// Broadcast (repeat) `t` to `shape`.
pub fn expand_to<T: Scalar>(t: &Tensor<T>, shape: &[usize]) -> Tensor<T> {
    binary_broadcast(t, &Tensor::zeros(shape.to_vec()), |x, _| x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn broadcast_shapes() {
        assert_eq!(broadcast_shape(&[4, 3], &[3]), vec![4, 3]);
        assert_eq!(broadcast_shape(&[4, 1, 3], &[1, 5, 1]), vec![4, 5, 3]);
        assert_eq!(broadcast_shape(&[1], &[2, 2]), vec![2, 2]);
    }

    #[test]
    #[should_panic(expected = "not broadcast-compatible")]
    fn broadcast_incompatible_panics() {
        broadcast_shape(&[4, 3], &[2, 3]);
    }

    #[test]
    fn binary_broadcast_bias_row() {
        let a = Tensor::from_vec(vec![2, 3], vec![1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = Tensor::from_vec(vec![3], vec![10.0f64, 20.0, 30.0]);
        let c = binary_broadcast(&a, &b, |x, y| x + y);
        assert_eq!(c.to_vec(), vec![11.0, 22.0, 33.0, 14.0, 25.0, 36.0]);
    }

    #[test]
    fn binary_broadcast_column() {
        let a = Tensor::from_vec(vec![2, 3], vec![1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = Tensor::from_vec(vec![2, 1], vec![10.0f64, 100.0]);
        let c = binary_broadcast(&a, &b, |x, y| x * y);
        assert_eq!(c.to_vec(), vec![10.0, 20.0, 30.0, 400.0, 500.0, 600.0]);
    }

    #[test]
    fn reduce_inverse_of_broadcast() {
        let a = Tensor::from_vec(vec![2, 3], vec![1.0f64; 6]);
        let r = reduce_to_shape(&a, &[3]);
        assert_eq!(r.shape(), &[3]);
        assert_eq!(r.to_vec(), vec![2.0, 2.0, 2.0]);
        let r2 = reduce_to_shape(&a, &[2, 1]);
        assert_eq!(r2.to_vec(), vec![3.0, 3.0]);
    }

    #[test]
    fn sum_axis_middle() {
        let t = Tensor::from_vec(vec![2, 2, 2], (1..=8).map(|x| x as f64).collect());
        let s = sum_axis(&t, 1, false);
        assert_eq!(s.shape(), &[2, 2]);
        assert_eq!(s.to_vec(), vec![4.0, 6.0, 12.0, 14.0]);
    }
}

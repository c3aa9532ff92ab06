//! Named parameter storage and affine layers shared by the scene MLP and
//! the pose network.

use crate::autodiff::{kaiming_init, Gradients, Tape, Tensor, Var};
use crate::scalar::Scalar;

/// Ordered, named list of trainable tensors. Order is the binding and
/// checkpoint order, so it must stay stable across runs.
#[derive(Clone, Debug)]
pub struct ParamSet<T> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
}

/// Index of a parameter inside its [`ParamSet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamId(pub usize);

impl<T: Scalar> Default for ParamSet<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParamSet<T> {
    pub fn new() -> Self {
        ParamSet {
            names: Vec::new(),
            tensors: Vec::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor<T>) -> ParamId {
        self.names.push(name.into());
        self.tensors.push(tensor);
        ParamId(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.tensors[id.0]
    }

    pub fn set(&mut self, id: ParamId, tensor: Tensor<T>) {
        assert_eq!(
            self.tensors[id.0].shape(),
            tensor.shape(),
            "parameter {} shape change",
            self.names[id.0]
        );
        self.tensors[id.0] = tensor;
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    pub fn shapes(&self) -> Vec<Vec<usize>> {
        self.tensors.iter().map(|t| t.shape().to_vec()).collect()
    }

    /// Register every parameter as a differentiable leaf on `tape`.
    pub fn bind(&self, tape: &mut Tape<T>) -> Binding {
        Binding {
            vars: self.tensors.iter().map(|t| tape.var(t.clone())).collect(),
        }
    }

    pub fn total_elements(&self) -> usize {
        self.tensors.iter().map(|t| t.numel()).sum()
    }

    pub fn cast<U: Scalar>(&self) -> ParamSet<U> {
        ParamSet {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(|t| t.cast()).collect(),
        }
    }
}

/// Tape leaves for one bound [`ParamSet`], in parameter order.
pub struct Binding {
    vars: Vec<Var>,
}

impl Binding {
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    /// Pull this binding's gradients out of a backward pass, aligned
    /// with the parameter order (`None` where a parameter was unused).
    pub fn grads<T: Scalar>(&self, gradients: &mut Gradients<T>) -> Vec<Option<Tensor<T>>> {
        self.vars.iter().map(|&v| gradients.take(v)).collect()
    }
}

/// Affine layer `x W + b` with weights `[in, out]`.
#[derive(Clone, Copy, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    /// Kaiming-initialized weights, zero biases.
    pub fn new<T: Scalar>(
        params: &mut ParamSet<T>,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        seed: u64,
    ) -> Self {
        let w = params.add(format!("{name}.w"), kaiming_init(in_dim, out_dim, seed));
        let b = params.add(format!("{name}.b"), Tensor::zeros(vec![out_dim]));
        Linear {
            w,
            b,
            in_dim,
            out_dim,
        }
    }

    /// All-zero initialization (weights and biases).
    pub fn zeros<T: Scalar>(
        params: &mut ParamSet<T>,
        name: &str,
        in_dim: usize,
        out_dim: usize,
    ) -> Self {
        let w = params.add(format!("{name}.w"), Tensor::zeros(vec![in_dim, out_dim]));
        let b = params.add(format!("{name}.b"), Tensor::zeros(vec![out_dim]));
        Linear {
            w,
            b,
            in_dim,
            out_dim,
        }
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, binding: &Binding, x: Var) -> Var {
        let xw = tape.matmul(x, binding.var(self.w));
        tape.add(xw, binding.var(self.b))
    }
}

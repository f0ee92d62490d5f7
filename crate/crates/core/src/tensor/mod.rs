//! Dense 64-bit real tensors and reverse-mode automatic differentiation.
//!
//! [`Tensor`] is a plain shape + row-major value container used for parameter
//! storage, dataset features, and op results. Differentiable computation runs
//! on a [`Tape`]: leaves are registered with [`Tape::parameter`] or
//! [`Tape::constant`], ops build new [`Var`]s, and [`Tape::backward`] replays
//! the recorded graph in reverse.

mod gradcheck;
mod optim;
mod tape;

pub use gradcheck::grad_check;
pub use optim::{AdamConfig, OptimizerState};
pub use tape::{concat, Tape, UnaryKind, Var};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TensorError {
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: axis {axis} out of range for shape {shape:?}")]
    AxisOutOfRange {
        op: &'static str,
        axis: usize,
        shape: Vec<usize>,
    },
    #[error("{op}: expected {expected} values for shape {shape:?}, got {got}")]
    DataLength {
        op: &'static str,
        shape: Vec<usize>,
        expected: usize,
        got: usize,
    },
    #[error("cross_entropy: label {label} out of range for {n_classes} classes")]
    LabelOutOfRange { label: usize, n_classes: usize },
    #[error("{op}: index {index} out of range for {len} elements")]
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        len: usize,
    },
    #[error("backward: loss must be a scalar, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },
    #[error("backward: gradients already computed; call reset_gradients first")]
    BackwardAlreadyRun,
    #[error("gradients not computed yet; call backward first")]
    NoGradients,
    #[error("{op}: operands belong to different tapes")]
    TapeMismatch { op: &'static str },
    #[error("{op}: empty input sequence")]
    EmptyInput { op: &'static str },
    #[error("leaky_relu: slope {0} outside (0, 1)")]
    InvalidSlope(f64),
    #[error("optimizer_step: {msg}")]
    Optimizer { msg: String },
}

/// Dense row-major tensor of 64-bit reals.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, TensorError> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(TensorError::DataLength {
                op: "Tensor::new",
                expected,
                got: data.len(),
                shape,
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn full(shape: Vec<usize>, value: f64) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape,
            data: vec![value; n],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
        }
    }

    /// 1-D tensor from a value list.
    pub fn vector(data: Vec<f64>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    /// 2-D tensor from row-major values.
    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, TensorError> {
        Tensor::new(vec![rows, cols], data)
    }

    pub fn from_fn(shape: Vec<usize>, mut f: impl FnMut(usize) -> f64) -> Self {
        let n: usize = shape.iter().product();
        Tensor {
            shape,
            data: (0..n).map(|i| f(i)).collect(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Value of a scalar (single-element) tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "item() on non-scalar tensor");
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Row `r` of a 2-D tensor as a slice.
    pub fn row(&self, r: usize) -> &[f64] {
        assert_eq!(self.shape.len(), 2, "row() on non-matrix tensor");
        let cols = self.shape[1];
        &self.data[r * cols..(r + 1) * cols]
    }
}

/// Argmax with ties broken by the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_rejects_bad_length() {
        let err = Tensor::new(vec![2, 3], vec![1.0; 5]).unwrap_err();
        assert!(matches!(err, TensorError::DataLength { expected: 6, got: 5, .. }));
    }

    #[test]
    fn row_major_row_access() {
        let t = Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(t.row(1), &[4.0, 5.0, 6.0]);
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[0.5, 0.5, 0.1]), 0);
        assert_eq!(argmax(&[0.1, 0.3, 0.3]), 1);
    }
}

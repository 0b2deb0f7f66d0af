//! Row-major dense storage and the handful of BLAS-1/2 kernels the
//! pipeline needs.

use crate::error::{Error, Result};

/// A dense vector or row-major matrix of `f64`.
///
/// Vectors have a one-element shape, matrices a two-element `[rows, cols]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        assert!(
            shape.len() == 1 || shape.len() == 2,
            "tensors are vectors or matrices"
        );
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::Shape(format!(
                "{rows}x{cols} matrix from {} values",
                data.len()
            )));
        }
        Ok(Tensor {
            shape: vec![rows, cols],
            data,
        })
    }

    pub fn from_shape(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        match shape {
            [n] if *n == data.len() => Ok(Tensor::vector(data)),
            [r, c] => Tensor::matrix(*r, *c, data),
            _ => Err(Error::Shape(format!(
                "shape {shape:?} with {} values",
                data.len()
            ))),
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

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Column count; a vector counts as a single column.
    pub fn cols(&self) -> usize {
        self.shape.get(1).copied().unwrap_or(1)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.cols();
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|v| *v = value);
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `out = W x + b` for a `rows x cols` matrix `W`.
pub fn affine(w: &Tensor, b: &Tensor, x: &[f64], out: &mut [f64]) {
    let cols = w.cols();
    debug_assert_eq!(x.len(), cols);
    for (i, o) in out.iter_mut().enumerate() {
        *o = dot(&w.data[i * cols..(i + 1) * cols], x) + b.data[i];
    }
}

/// `dx += W^T dy`
pub fn matvec_t_acc(w: &Tensor, dy: &[f64], dx: &mut [f64]) {
    let cols = w.cols();
    for (i, &g) in dy.iter().enumerate() {
        if g != 0.0 {
            axpy(g, &w.data[i * cols..(i + 1) * cols], dx);
        }
    }
}

/// `dW += dy x^T`
pub fn outer_acc(dw: &mut Tensor, dy: &[f64], x: &[f64]) {
    let cols = dw.cols();
    for (i, &g) in dy.iter().enumerate() {
        if g != 0.0 {
            axpy(g, x, &mut dw.data[i * cols..(i + 1) * cols]);
        }
    }
}

/// Unit vector along `v`, or `None` when `v` is exactly zero.
pub fn unit(v: &[f64]) -> Option<Vec<f64>> {
    let n = norm(v);
    (n > 0.0).then(|| v.iter().map(|x| x / n).collect())
}

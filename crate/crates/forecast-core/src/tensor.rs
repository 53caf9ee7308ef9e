//! Dense row-major f64 tensor and the activation/linear-algebra primitives the
//! network layers build on. No broadcasting, no BLAS: shapes here are small and
//! the layers own their loops.

use crate::error::{Error, Result};

/// Dense n-dimensional array of f64 in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Build a tensor from an explicit shape and flat row-major data.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::InvalidArgument(format!(
                "tensor dimensions must be positive, got {shape:?}"
            )));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::InvalidArgument(format!(
                "shape {shape:?} wants {expected} elements, data has {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n: usize = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let n: usize = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    /// 1-D tensor from a vector.
    pub fn from_vec(data: Vec<f64>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    /// 2-D tensor from equal-length rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidArgument("from_rows: no rows".into()));
        }
        let cols = rows[0].len();
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidArgument("from_rows: ragged rows".into()));
        }
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            data.extend_from_slice(r);
        }
        Tensor::new(vec![rows.len(), cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
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

    /// Reinterpret the data under a new shape of equal volume.
    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        Tensor::new(shape, self.data)
    }

    #[inline]
    pub fn at2(&self, i: usize, j: usize) -> f64 {
        debug_assert_eq!(self.rank(), 2);
        self.data[i * self.shape[1] + j]
    }

    #[inline]
    pub fn at2_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        debug_assert_eq!(self.rank(), 2);
        let cols = self.shape[1];
        &mut self.data[i * cols + j]
    }

    #[inline]
    pub fn at3(&self, i: usize, j: usize, k: usize) -> f64 {
        debug_assert_eq!(self.rank(), 3);
        self.data[(i * self.shape[1] + j) * self.shape[2] + k]
    }

    #[inline]
    pub fn at3_mut(&mut self, i: usize, j: usize, k: usize) -> &mut f64 {
        debug_assert_eq!(self.rank(), 3);
        let (d1, d2) = (self.shape[1], self.shape[2]);
        &mut self.data[(i * d1 + j) * d2 + k]
    }

    /// Row `i` of a rank-2 tensor as a slice.
    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        debug_assert_eq!(self.rank(), 2);
        let cols = self.shape[1];
        &self.data[i * cols..(i + 1) * cols]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Standard matrix product of two rank-2 tensors.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        if self.rank() != 2 || other.rank() != 2 || self.shape[1] != other.shape[0] {
            return Err(Error::ShapeMismatch {
                context: "matmul".into(),
                lhs: self.shape.clone(),
                rhs: other.shape.clone(),
            });
        }
        let (m, k, n) = (self.shape[0], self.shape[1], other.shape[1]);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for p in 0..k {
                let a = self.data[i * k + p];
                if a == 0.0 {
                    continue;
                }
                let brow = &other.data[p * n..(p + 1) * n];
                let orow = &mut out[i * n..(i + 1) * n];
                for (o, &b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        Ok(Tensor {
            shape: vec![m, n],
            data: out,
        })
    }
}

/// Largest f64 strictly below 1.0; activations saturate here instead of
/// rounding onto the excluded interval endpoint.
const ONE_MINUS_ULP: f64 = 1.0 - f64::EPSILON / 2.0;

/// Elementwise logistic function, 1/(1+e^-x). Outputs lie strictly in (0,1).
pub fn sigmoid(x: &Tensor) -> Tensor {
    x.map(sigmoid_scalar)
}

#[inline]
pub fn sigmoid_scalar(x: f64) -> f64 {
    // Split on sign so the exponential never overflows.
    let v = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    v.clamp(f64::MIN_POSITIVE, ONE_MINUS_ULP)
}

/// Elementwise hyperbolic tangent. Outputs lie in (-1,1).
pub fn tanh_act(x: &Tensor) -> Tensor {
    x.map(tanh_scalar)
}

#[inline]
pub fn tanh_scalar(x: f64) -> f64 {
    x.tanh().clamp(-ONE_MINUS_ULP, ONE_MINUS_ULP)
}

/// Elementwise max(0, x).
pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

/// Softmax of a 1-D tensor, computed with max-subtraction so large inputs
/// cannot overflow the exponential.
pub fn softmax(x: &Tensor) -> Result<Tensor> {
    if x.is_empty() {
        return Err(Error::InvalidArgument("softmax of an empty vector".into()));
    }
    let max = x.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.data().iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(Tensor {
        shape: vec![x.len()],
        data: exps.into_iter().map(|e| e / sum).collect(),
    })
}

/// Matrix-vector product for a rank-2 weight tensor, `w[rows x cols] * x[cols]`.
pub fn matvec(w: &Tensor, x: &[f64]) -> Vec<f64> {
    debug_assert_eq!(w.rank(), 2);
    debug_assert_eq!(w.shape()[1], x.len());
    let (rows, cols) = (w.shape()[0], w.shape()[1]);
    let mut out = vec![0.0; rows];
    for (i, o) in out.iter_mut().enumerate() {
        let wrow = &w.data()[i * cols..(i + 1) * cols];
        let mut acc = 0.0;
        for (wv, xv) in wrow.iter().zip(x) {
            acc += wv * xv;
        }
        *o = acc;
    }
    out
}

/// Transposed matrix-vector product, `w^T[cols x rows] * g[rows]`, accumulated
/// into `out`.
pub fn matvec_t_accum(w: &Tensor, g: &[f64], out: &mut [f64]) {
    debug_assert_eq!(w.rank(), 2);
    debug_assert_eq!(w.shape()[0], g.len());
    debug_assert_eq!(w.shape()[1], out.len());
    let cols = w.shape()[1];
    for (i, &gv) in g.iter().enumerate() {
        if gv == 0.0 {
            continue;
        }
        let wrow = &w.data()[i * cols..(i + 1) * cols];
        for (o, &wv) in out.iter_mut().zip(wrow) {
            *o += gv * wv;
        }
    }
}

/// Rank-1 update `out += g ⊗ x` for a rank-2 gradient accumulator.
pub fn outer_accum(out: &mut Tensor, g: &[f64], x: &[f64]) {
    debug_assert_eq!(out.rank(), 2);
    debug_assert_eq!(out.shape()[0], g.len());
    debug_assert_eq!(out.shape()[1], x.len());
    let cols = x.len();
    for (i, &gv) in g.iter().enumerate() {
        if gv == 0.0 {
            continue;
        }
        let orow = &mut out.data_mut()[i * cols..(i + 1) * cols];
        for (o, &xv) in orow.iter_mut().zip(x) {
            *o += gv * xv;
        }
    }
}

//! Dense row-major tensors and the few kernels the model needs.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Tensor {
        Tensor { shape: shape.to_vec(), data: vec![0.0; shape.iter().product()] }
    }

    pub fn filled(shape: &[usize], v: f64) -> Tensor {
        Tensor { shape: shape.to_vec(), data: vec![v; shape.iter().product()] }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::DimensionMismatch { expected: n, got: data.len() });
        }
        Ok(Tensor { shape: shape.to_vec(), data })
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

    pub fn cols(&self) -> usize {
        self.shape.get(1).copied().unwrap_or(1)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// `y = x w + b` for `n` rows of `x`; `w` is `[in, out]`.
pub(crate) fn linear(x: &[f64], n: usize, w: &Tensor, b: &Tensor) -> Vec<f64> {
    let (din, dout) = (w.rows(), w.cols());
    let mut y = vec![0.0; n * dout];
    for r in 0..n {
        let yr = &mut y[r * dout..(r + 1) * dout];
        yr.copy_from_slice(&b.data);
        for (i, &xi) in x[r * din..(r + 1) * din].iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let wi = &w.data[i * dout..(i + 1) * dout];
            for (y, &wv) in yr.iter_mut().zip(wi) {
                *y += xi * wv;
            }
        }
    }
    y
}

/// Backward of [`linear`]: accumulates into `dw`, `db` and returns `dx`.
pub(crate) fn linear_back(x: &[f64], n: usize, w: &Tensor, dy: &[f64], dw: &mut [f64], db: &mut [f64]) -> Vec<f64> {
    let (din, dout) = (w.rows(), w.cols());
    let mut dx = vec![0.0; n * din];
    for r in 0..n {
        let dyr = &dy[r * dout..(r + 1) * dout];
        for (d, &g) in db.iter_mut().zip(dyr) {
            *d += g;
        }
        let xr = &x[r * din..(r + 1) * din];
        let dxr = &mut dx[r * din..(r + 1) * din];
        for i in 0..din {
            let wi = &w.data[i * dout..(i + 1) * dout];
            let dwi = &mut dw[i * dout..(i + 1) * dout];
            let xi = xr[i];
            let mut acc = 0.0;
            for o in 0..dout {
                acc += wi[o] * dyr[o];
                dwi[o] += xi * dyr[o];
            }
            dxr[i] = acc;
        }
    }
    dx
}

/// Softmax of one row in place.
pub(crate) fn softmax(row: &mut [f64]) {
    let m = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let mut s = 0.0;
    for v in row.iter_mut() {
        *v = libm::exp(*v - m);
        s += *v;
    }
    for v in row.iter_mut() {
        *v /= s;
    }
}

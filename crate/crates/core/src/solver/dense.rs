use alloc::vec;
use alloc::vec::Vec;

use super::sparse::SparseMatrix;
use super::NormalEquations;

/// Dense Cholesky factorization of `A D Aᵀ`.
pub(crate) struct DenseNormal {
    m: usize,
    /// `(row, value)` entries of each column of `A`.
    columns: Vec<Vec<(usize, f64)>>,
    l: Vec<f64>,
}

impl DenseNormal {
    pub(crate) fn new(a: &SparseMatrix) -> Self {
        DenseNormal { m: a.nrows, columns: a.column_lists(), l: vec![0.0; a.nrows * a.nrows] }
    }
}

impl NormalEquations for DenseNormal {
    fn factor(&mut self, d: &[f64], reg: f64) -> bool {
        let m = self.m;
        let l = &mut self.l;
        l.iter_mut().for_each(|v| *v = 0.0);
        for (col, &dk) in self.columns.iter().zip(d) {
            for &(i, ai) in col {
                let s = dk * ai;
                for &(j, aj) in col {
                    if j <= i {
                        l[i * m + j] += s * aj;
                    }
                }
            }
        }
        let mut max_diag: f64 = 0.0;
        for i in 0..m {
            max_diag = max_diag.max(l[i * m + i]);
        }
        let tiny = 1e-30 * max_diag.max(1.0);
        for i in 0..m {
            l[i * m + i] += reg;
        }
        for j in 0..m {
            let mut djj = l[j * m + j];
            for k in 0..j {
                djj -= l[j * m + k] * l[j * m + k];
            }
            if !djj.is_finite() {
                return false;
            }
            let ljj = if djj <= tiny { 1e64 } else { crate::math::sqrt(djj) };
            l[j * m + j] = ljj;
            for i in (j + 1)..m {
                let mut v = l[i * m + j];
                for k in 0..j {
                    v -= l[i * m + k] * l[j * m + k];
                }
                l[i * m + j] = v / ljj;
            }
        }
        true
    }

    fn solve(&self, rhs: &mut [f64]) {
        let m = self.m;
        let l = &self.l;
        for i in 0..m {
            let mut v = rhs[i];
            for k in 0..i {
                v -= l[i * m + k] * rhs[k];
            }
            rhs[i] = v / l[i * m + i];
        }
        for i in (0..m).rev() {
            let mut v = rhs[i];
            for k in (i + 1)..m {
                v -= l[k * m + i] * rhs[k];
            }
            rhs[i] = v / l[i * m + i];
        }
    }
}

//! Compressed sparse rows and an up-looking sparse `L D Lᵀ` factorization of
//! the interior-point normal matrix.
//!
//! Rows are eliminated in order of their first nonzero column. Programs
//! whose variables are numbered from the leaves of their coupling tree
//! upwards (the deterministic equivalent does this) then factor with fill
//! confined to parent blocks.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use super::NormalEquations;

#[derive(Clone, Debug)]
pub(crate) struct SparseMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl SparseMatrix {
    pub fn from_rows(ncols: usize, rows: &[Vec<(usize, f64)>]) -> Self {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for r in rows {
            // merge duplicate column entries
            let mut merged: BTreeMap<usize, f64> = BTreeMap::new();
            for &(j, a) in r {
                *merged.entry(j).or_insert(0.0) += a;
            }
            for (j, a) in merged {
                if a != 0.0 {
                    cols.push(j);
                    vals.push(a);
                }
            }
            row_ptr.push(cols.len());
        }
        SparseMatrix { nrows: rows.len(), ncols, row_ptr, cols, vals }
    }

    pub fn mul(&self, x: &[f64], out: &mut [f64]) {
        for i in 0..self.nrows {
            let mut s = 0.0;
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.vals[p] * x[self.cols[p]];
            }
            out[i] = s;
        }
    }

    pub fn mul_t(&self, y: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..self.nrows {
            let yi = y[i];
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                out[self.cols[p]] += self.vals[p] * yi;
            }
        }
    }

    pub fn column_lists(&self) -> Vec<Vec<(usize, f64)>> {
        let mut out = vec![Vec::new(); self.ncols];
        for i in 0..self.nrows {
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                out[self.cols[p]].push((i, self.vals[p]));
            }
        }
        out
    }
}

/// `L D Lᵀ` of `A D Aᵀ` with a fixed symbolic structure.
pub(crate) struct SparseNormal {
    n: usize,
    /// Upper triangle of the normal matrix in compressed columns.
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
    diag_pos: Vec<usize>,
    /// `(value slot, column of A, a_i * a_j)` contributions.
    contrib: Vec<(usize, usize, f64)>,
    parent: Vec<usize>,
    l_ptr: Vec<usize>,
    l_idx: Vec<usize>,
    l_val: Vec<f64>,
    d: Vec<f64>,
    /// Position of each original row in elimination order.
    pos: Vec<usize>,
    scratch: core::cell::RefCell<Vec<f64>>,
}

const NONE: usize = usize::MAX;

impl SparseNormal {
    pub(crate) fn new(a: &SparseMatrix) -> Self {
        let n = a.nrows;
        let first = |i: usize| {
            if a.row_ptr[i] < a.row_ptr[i + 1] {
                a.cols[a.row_ptr[i]]
            } else {
                NONE
            }
        };
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&i| first(i));
        let mut pos = vec![0; n];
        for (k, &i) in order.iter().enumerate() {
            pos[i] = k;
        }
        let mut columns = a.column_lists();
        for col in columns.iter_mut() {
            for e in col.iter_mut() {
                e.0 = pos[e.0];
            }
        }
        // pattern of upper triangle: for column j of M, rows i <= j
        let mut pattern: Vec<BTreeMap<usize, usize>> = vec![BTreeMap::new(); n];
        for i in 0..n {
            pattern[i].insert(i, 0);
        }
        for col in &columns {
            for &(i, _) in col {
                for &(j, _) in col {
                    if i <= j {
                        pattern[j].insert(i, 0);
                    }
                }
            }
        }
        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut row_idx = Vec::new();
        let mut diag_pos = vec![0; n];
        col_ptr.push(0);
        for (j, pat) in pattern.iter_mut().enumerate() {
            for (i, slot) in pat.iter_mut() {
                *slot = row_idx.len();
                if *i == j {
                    diag_pos[j] = row_idx.len();
                }
                row_idx.push(*i);
            }
            col_ptr.push(row_idx.len());
        }
        let mut contrib = Vec::new();
        for (k, col) in columns.iter().enumerate() {
            for &(i, ai) in col {
                for &(j, aj) in col {
                    if i <= j {
                        contrib.push((pattern[j][&i], k, ai * aj));
                    }
                }
            }
        }
        contrib.sort_by_key(|c| c.0);

        // elimination tree and column counts of L
        let mut parent = vec![NONE; n];
        let mut flag = vec![NONE; n];
        let mut lnz = vec![0usize; n];
        for k in 0..n {
            flag[k] = k;
            for p in col_ptr[k]..col_ptr[k + 1] {
                let mut i = row_idx[p];
                if i < k {
                    while flag[i] != k {
                        if parent[i] == NONE {
                            parent[i] = k;
                        }
                        lnz[i] += 1;
                        flag[i] = k;
                        i = parent[i];
                    }
                }
            }
        }
        let mut l_ptr = vec![0; n + 1];
        for k in 0..n {
            l_ptr[k + 1] = l_ptr[k] + lnz[k];
        }
        let nnz = l_ptr[n];
        SparseNormal {
            n,
            values: vec![0.0; row_idx.len()],
            col_ptr,
            row_idx,
            diag_pos,
            contrib,
            parent,
            l_ptr,
            l_idx: vec![0; nnz],
            l_val: vec![0.0; nnz],
            d: vec![0.0; n],
            pos,
            scratch: core::cell::RefCell::new(vec![0.0; n]),
        }
    }

    #[cfg(test)]
    pub(crate) fn factor_nnz(&self) -> usize {
        self.l_ptr[self.n]
    }
}

impl NormalEquations for SparseNormal {
    fn factor(&mut self, dk: &[f64], reg: f64) -> bool {
        let n = self.n;
        self.values.iter_mut().for_each(|v| *v = 0.0);
        for &(slot, k, aa) in &self.contrib {
            self.values[slot] += dk[k] * aa;
        }
        let mut max_diag: f64 = 0.0;
        for &p in &self.diag_pos {
            max_diag = max_diag.max(self.values[p]);
        }
        let tiny = 1e-30 * max_diag.max(1.0);
        for &p in &self.diag_pos {
            self.values[p] += reg;
        }

        let mut y = vec![0.0; n];
        let mut flag = vec![NONE; n];
        let mut pattern = vec![0usize; n];
        let mut lnz = vec![0usize; n];
        for k in 0..n {
            let mut top = n;
            flag[k] = k;
            for p in self.col_ptr[k]..self.col_ptr[k + 1] {
                let mut i = self.row_idx[p];
                y[i] += self.values[p];
                let mut len = 0;
                while flag[i] != k {
                    pattern[len] = i;
                    len += 1;
                    flag[i] = k;
                    i = self.parent[i];
                }
                while len > 0 {
                    top -= 1;
                    len -= 1;
                    pattern[top] = pattern[len];
                }
            }
            let mut dkk = y[k];
            y[k] = 0.0;
            while top < n {
                let i = pattern[top];
                top += 1;
                let yi = y[i];
                y[i] = 0.0;
                let start = self.l_ptr[i];
                let end = start + lnz[i];
                for p in start..end {
                    y[self.l_idx[p]] -= self.l_val[p] * yi;
                }
                let lki = yi / self.d[i];
                dkk -= lki * yi;
                self.l_idx[end] = k;
                self.l_val[end] = lki;
                lnz[i] += 1;
            }
            if !dkk.is_finite() {
                return false;
            }
            self.d[k] = if dkk <= tiny { 1e128 } else { dkk };
        }
        true
    }

    fn solve(&self, rhs: &mut [f64]) {
        let n = self.n;
        let mut buf = self.scratch.borrow_mut();
        let x = &mut buf[..];
        for (i, &p) in self.pos.iter().enumerate() {
            x[p] = rhs[i];
        }
        for j in 0..n {
            let xj = x[j];
            for p in self.l_ptr[j]..self.l_ptr[j + 1] {
                x[self.l_idx[p]] -= self.l_val[p] * xj;
            }
        }
        for j in 0..n {
            x[j] /= self.d[j];
        }
        for j in (0..n).rev() {
            let mut xj = x[j];
            for p in self.l_ptr[j]..self.l_ptr[j + 1] {
                xj -= self.l_val[p] * x[self.l_idx[p]];
            }
            x[j] = xj;
        }
        for (i, &p) in self.pos.iter().enumerate() {
            rhs[i] = x[p];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::dense::DenseNormal;
    use super::*;

    fn sample_matrix() -> SparseMatrix {
        let rows = vec![
            vec![(0, 1.0), (1, -1.0), (3, 2.0)],
            vec![(1, 1.0), (2, 1.0)],
            vec![(0, 0.5), (2, -3.0), (4, 1.0)],
            vec![(3, 1.0), (4, 1.0), (5, 1.0)],
        ];
        SparseMatrix::from_rows(6, &rows)
    }

    #[test]
    fn sparse_and_dense_normal_solves_agree() {
        let a = sample_matrix();
        let d = [1.0, 2.0, 0.5, 3.0, 1.5, 0.25];
        let rhs = [1.0, -2.0, 0.5, 4.0];
        let mut dense = DenseNormal::new(&a);
        let mut sparse = SparseNormal::new(&a);
        assert!(dense.factor(&d, 0.0));
        assert!(sparse.factor(&d, 0.0));
        let mut x1 = rhs;
        let mut x2 = rhs;
        dense.solve(&mut x1);
        sparse.solve(&mut x2);
        for (u, v) in x1.iter().zip(&x2) {
            assert!((u - v).abs() < 1e-12, "{u} vs {v}");
        }
        // check residual of M x = rhs directly
        let cols = a.column_lists();
        let mut mx = [0.0; 4];
        for (k, col) in cols.iter().enumerate() {
            for &(i, ai) in col {
                for &(j, aj) in col {
                    mx[i] += d[k] * ai * aj * x2[j];
                }
            }
        }
        for (u, v) in mx.iter().zip(&rhs) {
            assert!((u - v).abs() < 1e-12);
        }
        assert!(sparse.factor_nnz() <= 6);
    }

    #[test]
    fn duplicate_entries_are_merged() {
        let a = SparseMatrix::from_rows(2, &[vec![(0, 1.0), (0, 2.0), (1, 1.0)]]);
        assert_eq!(a.cols, vec![0, 1]);
        assert_eq!(a.vals, vec![3.0, 1.0]);
    }
}

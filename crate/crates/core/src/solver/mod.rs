//! Interior-point solver for stage programs and deterministic equivalents.
//!
//! Inequalities become equalities with nonnegative slacks and the
//! resulting standard-form program (free variables kept as they are) is handed to a Mehrotra predictor-corrector method. Small
//! normal matrices are factored densely, large ones with a sparse `LDLᵀ`.

mod dense;
mod ipm;
pub(crate) mod sparse;

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::math::norm_inf;
use crate::model::{ConvexProgram, Sense, StageSubproblem};
use dense::DenseNormal;
use ipm::StdProblem;
use sparse::{SparseMatrix, SparseNormal};

pub(crate) trait NormalEquations {
    /// Factors `A diag(d) Aᵀ + reg I`; returns false on breakdown.
    fn factor(&mut self, d: &[f64], reg: f64) -> bool;
    fn solve(&self, rhs: &mut [f64]);
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Backend {
    /// Dense below `dense_limit` rows, sparse above.
    Auto,
    Dense,
    Sparse,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub max_iters: usize,
    /// Relative primal and dual infeasibility for normal termination.
    pub tol_feas: f64,
    /// Relative complementarity gap for normal termination.
    pub tol_gap: f64,
    /// Residual that is still accepted when the method stalls.
    pub tol_kkt: f64,
    pub tol_gap_accept: f64,
    pub step_fraction: f64,
    pub regularization: f64,
    pub divergence: f64,
    pub backend: Backend,
    pub dense_limit: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iters: 200,
            tol_feas: 1e-10,
            tol_gap: 1e-10,
            tol_kkt: 1e-7,
            tol_gap_accept: 1e-6,
            step_fraction: 0.995,
            regularization: 0.0,
            divergence: 1e13,
            backend: Backend::Auto,
            dense_limit: 150,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    /// `d objective / d rhs` for each equality row.
    pub eq_duals: Vec<f64>,
    /// Nonnegative multiplier of each inequality row.
    pub ineq_duals: Vec<f64>,
    pub iterations: usize,
    pub kkt_residual: f64,
}

impl SolveResult {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

pub fn solve(sp: &StageSubproblem, opts: &SolverOptions) -> Result<SolveResult> {
    solve_program(&sp.program, opts)
}

struct Standardized {
    prob: StdProblem,
    /// Factor each row was multiplied by.
    row_scale: Vec<f64>,
}

fn standardize(p: &ConvexProgram) -> Standardized {
    let mut c = p.linear_cost.clone();
    let mut free: Vec<bool> = p.nonneg.iter().map(|&nn| !nn).collect();
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut b = Vec::new();
    for r in &p.eq_rows {
        rows.push(r.coeffs.clone());
        b.push(r.rhs);
    }
    for r in &p.ineq_rows {
        let mut row = r.row.coeffs.clone();
        let col = c.len();
        c.push(0.0);
        free.push(false);
        let sign = match r.sense {
            Sense::Ge => -1.0,
            Sense::Le => 1.0,
        };
        row.push((col, sign));
        rows.push(row);
        b.push(r.row.rhs);
    }
    // equilibrate rows so cuts with steep slopes stay well conditioned
    let mut row_scale = Vec::with_capacity(rows.len());
    for (row, bi) in rows.iter_mut().zip(b.iter_mut()) {
        let m = row.iter().fold(0.0f64, |m, &(_, a)| m.max(a.abs()));
        let s = if m > 0.0 { 1.0 / m } else { 1.0 };
        row.iter_mut().for_each(|e| e.1 *= s);
        *bi *= s;
        row_scale.push(s);
    }
    let a = SparseMatrix::from_rows(c.len(), &rows);
    let terms = p
        .convex_terms
        .iter()
        .map(|t| (t.var, t.kind, t.weight))
        .collect();
    Standardized { prob: StdProblem { a, b, c, terms, constant: p.constant, free }, row_scale }
}

fn backend_for(a: &SparseMatrix, opts: &SolverOptions) -> alloc::boxed::Box<dyn NormalEquations> {
    let dense = match opts.backend {
        Backend::Dense => true,
        Backend::Sparse => false,
        Backend::Auto => a.nrows <= opts.dense_limit,
    };
    if dense {
        alloc::boxed::Box::new(DenseNormal::new(a))
    } else {
        alloc::boxed::Box::new(SparseNormal::new(a))
    }
}

/// Minimum total artificial violation needed to satisfy `A x = b, x >= 0`.
fn phase_one_violation(prob: &StdProblem, opts: &SolverOptions) -> Option<f64> {
    let n = prob.c.len();
    let m = prob.b.len();
    let mut rows: Vec<Vec<(usize, f64)>> = (0..m)
        .map(|i| {
            (prob.a.row_ptr[i]..prob.a.row_ptr[i + 1])
                .map(|p| (prob.a.cols[p], prob.a.vals[p]))
                .collect()
        })
        .collect();
    for (i, row) in rows.iter_mut().enumerate() {
        row.push((n + 2 * i, 1.0));
        row.push((n + 2 * i + 1, -1.0));
    }
    let mut c = vec![0.0; n];
    c.extend(core::iter::repeat(1.0).take(2 * m));
    let a = SparseMatrix::from_rows(n + 2 * m, &rows);
    let mut free = prob.free.clone();
    free.resize(n + 2 * m, false);
    let phase = StdProblem { a, b: prob.b.clone(), c, terms: Vec::new(), constant: 0.0, free };
    let mut kkt = backend_for(&phase.a, opts);
    let out = ipm::run(&phase, opts, kkt.as_mut());
    (out.status == SolveStatus::Optimal).then_some(out.objective)
}

/// Solves a convex program with the interior-point method.
pub fn solve_program(p: &ConvexProgram, opts: &SolverOptions) -> Result<SolveResult> {
    p.validate()?;
    let std = standardize(p);
    let mut kkt = backend_for(&std.prob.a, opts);
    let out = ipm::run(&std.prob, opts, kkt.as_mut());

    let mut status = out.status;
    if status != SolveStatus::Optimal {
        let scale = 1.0 + norm_inf(&std.prob.b);
        status = match phase_one_violation(&std.prob, opts) {
            Some(v) if v > 1e-7 * scale => SolveStatus::Infeasible,
            Some(_) if status == SolveStatus::Unbounded => SolveStatus::Unbounded,
            _ => SolveStatus::NumericalFailure,
        };
    }

    let x = out.x[..p.num_vars].to_vec();
    let meq = p.eq_rows.len();
    let y: Vec<f64> = out.y.iter().zip(&std.row_scale).map(|(y, s)| y * s).collect();
    let eq_duals = y[..meq].to_vec();
    let ineq_duals = p
        .ineq_rows
        .iter()
        .zip(&y[meq..])
        .map(|(r, &y)| match r.sense {
            Sense::Ge => y,
            Sense::Le => -y,
        })
        .collect();
    let objective = p.objective(&x);
    Ok(SolveResult {
        status,
        x,
        objective,
        eq_duals,
        ineq_duals,
        iterations: out.iterations,
        kkt_residual: out.kkt_residual,
    })
}

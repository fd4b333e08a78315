//! Mehrotra predictor-corrector interior-point method for
//!
//! ```txt
//!   min  cᵀx + Σ w_j φ_j(x_j)   s.t.  A x = b,  x >= 0
//! ```
//!
//! with separable convex `φ_j`. The Newton system is reduced to the normal
//! equations `A D Aᵀ Δy = r` with `D = (H + Z X⁻¹)⁻¹` diagonal.

use alloc::vec;
use alloc::vec::Vec;

use super::sparse::SparseMatrix;
use super::{NormalEquations, SolveStatus, SolverOptions};
use crate::math::{self, dot, norm_inf};
use crate::model::ConvexKind;

pub(crate) struct StdProblem {
    pub a: SparseMatrix,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub terms: Vec<(usize, ConvexKind, f64)>,
    pub constant: f64,
    /// Columns without a sign constraint; they carry no dual slack.
    pub free: Vec<bool>,
}

impl StdProblem {
    fn objective(&self, x: &[f64]) -> f64 {
        self.constant
            + dot(&self.c, x)
            + self.terms.iter().map(|&(j, k, w)| w * k.value(x[j])).sum::<f64>()
    }

    fn gradient_hessian(&self, x: &[f64], g: &mut [f64], h: &mut [f64]) {
        g.copy_from_slice(&self.c);
        h.iter_mut().for_each(|v| *v = 0.0);
        for &(j, k, w) in &self.terms {
            g[j] += w * k.first(x[j]);
            h[j] += w * k.second(x[j]);
        }
    }
}

pub(crate) struct IpmOutcome {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub kkt_residual: f64,
}

fn max_step(v: &[f64], dv: &[f64], free: &[bool]) -> f64 {
    let mut a: f64 = 1.0;
    for ((x, d), &f) in v.iter().zip(dv).zip(free) {
        if !f && *d < 0.0 {
            a = a.min(-x / d);
        }
    }
    a
}

/// Proximal weight on free columns, which carry no bound multiplier; it
/// keeps their entry of `D` finite.
const FREE_PROX: f64 = 1e-8;


/// Mehrotra's heuristic start: least-squares primal and dual estimates
/// shifted into the positive orthant. The dual estimate uses the gradient
/// at the shifted primal point when the objective is nonlinear.
fn starting_point(p: &StdProblem, kkt: &mut dyn NormalEquations) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = p.c.len();
    let m = p.b.len();
    let ones = vec![1.0; n];
    let zero_free = |v: &mut [f64]| {
        for (e, &f) in v.iter_mut().zip(&p.free) {
            if f {
                *e = 0.0;
            }
        }
    };
    if m == 0 || !kkt.factor(&ones, 0.0) {
        let mut z = ones.clone();
        zero_free(&mut z);
        return (ones, vec![0.0; m], z);
    }
    let mut w = p.b.clone();
    kkt.solve(&mut w);
    let mut x = vec![0.0; n];
    p.a.mul_t(&w, &mut x);
    let bounded = |j: usize| !p.free[j];
    let shift = |v: &mut [f64]| {
        let lo = (0..n).filter(|&j| bounded(j)).map(|j| v[j]).fold(f64::INFINITY, f64::min);
        let delta = (-1.5 * lo).max(0.0);
        (0..n).filter(|&j| bounded(j)).for_each(|j| v[j] += delta);
        if (0..n).filter(|&j| bounded(j)).all(|j| v[j] <= 0.0) {
            (0..n).filter(|&j| bounded(j)).for_each(|j| v[j] = 1.0);
        }
    };
    // clamp rather than shift the primal estimate: one large negative entry
    // would otherwise move every variable far from its scale
    for j in (0..n).filter(|&j| bounded(j)) {
        x[j] = x[j].max(0.0);
    }
    if (0..n).filter(|&j| bounded(j)).all(|j| x[j] <= 0.0) {
        (0..n).filter(|&j| bounded(j)).for_each(|j| x[j] = 1.0);
    }
    let mut g = vec![0.0; n];
    let mut h = vec![0.0; n];
    let probe: Vec<f64> = (0..n).map(|j| if bounded(j) { x[j].max(1e-2) } else { x[j] }).collect();
    p.gradient_hessian(&probe, &mut g, &mut h);
    let mut y = vec![0.0; m];
    p.a.mul(&g, &mut y);
    kkt.solve(&mut y);
    let mut aty = vec![0.0; n];
    p.a.mul_t(&y, &mut aty);
    let mut z: Vec<f64> = (0..n).map(|j| g[j] - aty[j]).collect();
    shift(&mut z);
    zero_free(&mut z);
    let xz: f64 = (0..n).filter(|&j| bounded(j)).map(|j| x[j] * z[j]).sum();
    let sx: f64 = (0..n).filter(|&j| bounded(j)).map(|j| x[j]).sum();
    let sz: f64 = (0..n).filter(|&j| bounded(j)).map(|j| z[j]).sum();
    let dx = if sz > 0.0 { 0.5 * xz / sz } else { 0.0 };
    let dz = if sx > 0.0 { 0.5 * xz / sx } else { 0.0 };
    for j in (0..n).filter(|&j| bounded(j)) {
        x[j] = (x[j] + dx).max(1e-4);
        z[j] = (z[j] + dz).max(1e-4);
    }
    (x, y, z)
}

/// Runs the method from a heuristic interior start.
pub(crate) fn run(p: &StdProblem, opts: &SolverOptions, kkt: &mut dyn NormalEquations) -> IpmOutcome {
    let n = p.c.len();
    let m = p.b.len();
    let (mut x, mut y, mut z) = starting_point(p, kkt);
    let nonlinear = !p.terms.is_empty();
    let free = &p.free;
    let nb = free.iter().filter(|&&f| !f).count().max(1);

    let mut g = vec![0.0; n];
    let mut h = vec![0.0; n];
    let mut rd = vec![0.0; n];
    let mut rp = vec![0.0; m];
    let mut aty = vec![0.0; n];
    let mut ax = vec![0.0; m];
    let mut d = vec![0.0; n];
    let mut r = vec![0.0; n];
    let mut dx = vec![0.0; n];
    let mut dy = vec![0.0; m];
    let mut dz = vec![0.0; n];
    let mut tmp_n = vec![0.0; n];
    let mut tmp_m = vec![0.0; m];

    let b_norm = 1.0 + norm_inf(&p.b);
    let c_norm = 1.0 + norm_inf(&p.c);
    let mut stalls = 0;
    let mut best: Option<(f64, Vec<f64>, Vec<f64>)> = None;

    let mut iter = 0;
    loop {
        p.gradient_hessian(&x, &mut g, &mut h);
        p.a.mul_t(&y, &mut aty);
        for j in 0..n {
            rd[j] = g[j] - aty[j] - z[j];
        }
        p.a.mul(&x, &mut ax);
        for i in 0..m {
            rp[i] = p.b[i] - ax[i];
        }
        let obj = p.objective(&x);
        let comp = dot(&x, &z); // zero on free columns
        let mu = comp / nb as f64;
        let pres = norm_inf(&rp) / b_norm;
        let dres = norm_inf(&rd) / (c_norm + norm_inf(&g));
        let gap = comp / (1.0 + math::abs(obj));
        let last_kkt = pres.max(dres);

        let finite = obj.is_finite() && mu.is_finite() && last_kkt.is_finite();
        if !finite {
            return finish(p, SolveStatus::NumericalFailure, best, x, y, iter, last_kkt);
        }
        if pres <= opts.tol_feas && dres <= opts.tol_feas && gap <= opts.tol_gap {
            return finish(p, SolveStatus::Optimal, None, x, y, iter, last_kkt);
        }
        if last_kkt <= opts.tol_kkt && gap <= opts.tol_gap_accept {
            let better = best.as_ref().map_or(true, |(score, ..)| last_kkt.max(gap) < *score);
            if better {
                best = Some((last_kkt.max(gap), x.clone(), y.clone()));
            }
        }
        if norm_inf(&x) > opts.divergence {
            return finish(p, SolveStatus::Unbounded, best, x, y, iter, last_kkt);
        }
        if norm_inf(&y) > opts.divergence || norm_inf(&z) > opts.divergence {
            return finish(p, SolveStatus::Infeasible, best, x, y, iter, last_kkt);
        }
        if iter >= opts.max_iters || stalls >= 5 {
            return finish(p, SolveStatus::NumericalFailure, best, x, y, iter, last_kkt);
        }
        iter += 1;

        for j in 0..n {
            d[j] = if free[j] { 1.0 / (h[j] + FREE_PROX) } else { 1.0 / (h[j] + z[j] / x[j]) };
        }
        if !kkt.factor(&d, opts.regularization) {
            return finish(p, SolveStatus::NumericalFailure, best, x, y, iter, last_kkt);
        }

        // predictor
        for j in 0..n {
            r[j] = -rd[j] - z[j];
        }
        newton(p, kkt, &d, &r, &rp, &mut dx, &mut dy, &mut tmp_n, &mut tmp_m);
        for j in 0..n {
            dz[j] = if free[j] { 0.0 } else { -z[j] - z[j] / x[j] * dx[j] };
        }
        let ap = max_step(&x, &dx, free);
        let ad = max_step(&z, &dz, free);
        let mut comp_aff = 0.0;
        for j in (0..n).filter(|&j| !free[j]) {
            comp_aff += (x[j] + ap * dx[j]) * (z[j] + ad * dz[j]);
        }
        let mu_aff = comp_aff / nb as f64;
        let ratio = (mu_aff / mu).clamp(0.0, 1.0);
        let sigma = ratio * ratio * ratio;

        // corrector
        let dxa = dx.clone();
        let dza = dz.clone();
        for j in 0..n {
            r[j] = if free[j] { -rd[j] } else { -rd[j] + (-x[j] * z[j] - dxa[j] * dza[j] + sigma * mu) / x[j] };
        }
        newton(p, kkt, &d, &r, &rp, &mut dx, &mut dy, &mut tmp_n, &mut tmp_m);
        for j in 0..n {
            dz[j] = if free[j] {
                0.0
            } else {
                (-x[j] * z[j] - dxa[j] * dza[j] + sigma * mu) / x[j] - z[j] / x[j] * dx[j]
            };
        }
        if dx.iter().chain(&dy).chain(&dz).any(|v| !v.is_finite()) {
            return finish(p, SolveStatus::NumericalFailure, best, x, y, iter, last_kkt);
        }
        let eta = opts.step_fraction;
        let mut ap = (eta * max_step(&x, &dx, free)).min(1.0);
        let mut ad = (eta * max_step(&z, &dz, free)).min(1.0);
        if nonlinear {
            ap = ap.min(ad).min(curvature_step(p, &x, &dx));
            ad = ap;
        }
        if ap < 1e-12 && ad < 1e-12 {
            stalls += 1;
        } else {
            stalls = 0;
        }
        for j in 0..n {
            x[j] += ap * dx[j];
            z[j] += ad * dz[j];
        }
        for i in 0..m {
            y[i] += ad * dy[i];
        }
    }

}

/// Longest step that keeps every convex term inside the region where its
/// quadratic model is trustworthy: log and power arguments may shrink by
/// half or grow tenfold, exponents may move by two.
fn curvature_step(p: &StdProblem, x: &[f64], dx: &[f64]) -> f64 {
    let mut a: f64 = 1.0;
    for &(j, kind, _) in &p.terms {
        let d = dx[j];
        if d == 0.0 {
            continue;
        }
        match kind {
            ConvexKind::ExpAffine { a: k, .. } => a = a.min(2.0 / math::abs(k * d)),
            ConvexKind::NegLog | ConvexKind::NegPower { .. } => {
                if d < 0.0 {
                    a = a.min(0.5 * x[j] / -d);
                } else {
                    a = a.min(9.0 * x[j].max(1e-8) / d);
                }
            }
        }
    }
    a
}

/// `A D Aᵀ dy = rp - A D r`, `dx = D (r + Aᵀ dy)`, with two rounds of
/// iterative refinement on `dy`.
#[allow(clippy::too_many_arguments)]
fn newton(
    p: &StdProblem,
    kkt: &dyn NormalEquations,
    d: &[f64],
    r: &[f64],
    rp: &[f64],
    dx: &mut [f64],
    dy: &mut [f64],
    tmp_n: &mut [f64],
    tmp_m: &mut [f64],
) {
    for j in 0..d.len() {
        tmp_n[j] = d[j] * r[j];
    }
    p.a.mul(tmp_n, tmp_m);
    for i in 0..rp.len() {
        dy[i] = rp[i] - tmp_m[i];
    }
    let rhs = dy.to_vec();
    kkt.solve(dy);
    let mut res = vec![0.0; rhs.len()];
    for _ in 0..2 {
        p.a.mul_t(dy, tmp_n);
        for j in 0..d.len() {
            tmp_n[j] *= d[j];
        }
        p.a.mul(tmp_n, &mut res);
        let mut worst: f64 = 0.0;
        for i in 0..rhs.len() {
            res[i] = rhs[i] - res[i];
            worst = worst.max(math::abs(res[i]));
        }
        if worst <= 1e-14 * (1.0 + norm_inf(&rhs)) {
            break;
        }
        kkt.solve(&mut res);
        for i in 0..rhs.len() {
            dy[i] += res[i];
        }
    }
    p.a.mul_t(dy, tmp_n);
    for j in 0..d.len() {
        dx[j] = d[j] * (r[j] + tmp_n[j]);
    }
}

fn finish(
    p: &StdProblem,
    status: SolveStatus,
    best: Option<(f64, Vec<f64>, Vec<f64>)>,
    x: Vec<f64>,
    y: Vec<f64>,
    iterations: usize,
    kkt_residual: f64,
) -> IpmOutcome {
    // fall back to the best iterate that met the acceptable tolerances
    if status != SolveStatus::Optimal {
        if let Some((score, bx, by)) = best {
            let objective = p.objective(&bx);
            return IpmOutcome { status: SolveStatus::Optimal, x: bx, y: by, objective, iterations, kkt_residual: score };
        }
    }
    let objective = p.objective(&x);
    IpmOutcome { status, x, y, objective, iterations, kkt_residual }
}

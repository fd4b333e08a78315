//! Problem-agnostic stagewise subproblems.
//!
//! A stage program has linear equality and inequality rows, per-variable
//! nonnegativity, a linear cost and separable convex terms. The previous
//! stage state is folded into the right-hand sides; rows that depend on it
//! also carry a `coupling` vector holding `d rhs / d x_prev`.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;

/// Domain guard for logarithmic and power utilities at the `x = 0` boundary.
pub const DOMAIN_EPS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Family {
    /// Hydro-thermal energy planning.
    #[serde(rename = "EP")]
    Energy,
    /// Consumption and investment planning.
    #[serde(rename = "FP")]
    Financial,
    /// Multi-product production planning.
    #[serde(rename = "PP")]
    Production,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Energy, Family::Financial, Family::Production];

    pub fn state_dim(self) -> usize {
        match self {
            Family::Energy => 1,
            Family::Financial => 2,
            Family::Production => 3,
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            Family::Energy => "EP",
            Family::Financial => "FP",
            Family::Production => "PP",
        }
    }

    pub fn parse(s: &str) -> Option<Family> {
        Family::ALL.into_iter().find(|f| f.code().eq_ignore_ascii_case(s))
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// Realized distribution parameters, in family order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistributionParams {
    pub entries: Vec<(String, f64)>,
}

impl DistributionParams {
    pub fn values(&self) -> Vec<f64> {
        self.entries.iter().map(|(_, v)| *v).collect()
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// One realization of the stage uncertainty. Empty at stage 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Realization(pub Vec<f64>);

impl Realization {
    pub fn empty() -> Self {
        Realization(Vec::new())
    }
}

/// A sampled member of a problem family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemInstance {
    pub family: Family,
    pub stages: usize,
    pub lambda: DistributionParams,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ConvexKind {
    /// `exp(a x + b)`
    ExpAffine { a: f64, b: f64 },
    /// `-log(x)`
    NegLog,
    /// `-x^(1-eta) / (1-eta)` for `0 <= eta < 1`
    NegPower { eta: f64 },
}

impl ConvexKind {
    pub fn value(&self, x: f64) -> f64 {
        match *self {
            ConvexKind::ExpAffine { a, b } => math::exp(a * x + b),
            ConvexKind::NegLog => -math::ln(x.max(0.0) + DOMAIN_EPS),
            ConvexKind::NegPower { eta } => {
                -math::powf(x.max(0.0) + DOMAIN_EPS, 1.0 - eta) / (1.0 - eta)
            }
        }
    }

    pub fn first(&self, x: f64) -> f64 {
        match *self {
            ConvexKind::ExpAffine { a, b } => a * math::exp(a * x + b),
            ConvexKind::NegLog => -1.0 / (x.max(0.0) + DOMAIN_EPS),
            ConvexKind::NegPower { eta } => -math::powf(x.max(0.0) + DOMAIN_EPS, -eta),
        }
    }

    pub fn second(&self, x: f64) -> f64 {
        match *self {
            ConvexKind::ExpAffine { a, b } => a * a * math::exp(a * x + b),
            ConvexKind::NegLog => {
                let g = x.max(0.0) + DOMAIN_EPS;
                1.0 / (g * g)
            }
            ConvexKind::NegPower { eta } => {
                eta * math::powf(x.max(0.0) + DOMAIN_EPS, -eta - 1.0)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvexTerm {
    pub var: usize,
    pub kind: ConvexKind,
    pub weight: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    /// `a·x >= rhs`
    Ge,
    /// `a·x <= rhs`
    Le,
}

/// A sparse linear row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearRow {
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
    /// Sensitivity of the right-hand side to the previous state; empty when
    /// the row is not coupled.
    pub coupling: Vec<f64>,
}

impl LinearRow {
    pub fn new(coeffs: Vec<(usize, f64)>, rhs: f64) -> Self {
        LinearRow { coeffs, rhs, coupling: Vec::new() }
    }

    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, a)| a * x[j]).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IneqRow {
    pub sense: Sense,
    pub row: LinearRow,
}

/// A convex program with linear constraints and separable convex objective.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConvexProgram {
    pub num_vars: usize,
    pub linear_cost: Vec<f64>,
    pub constant: f64,
    pub convex_terms: Vec<ConvexTerm>,
    pub eq_rows: Vec<LinearRow>,
    pub ineq_rows: Vec<IneqRow>,
    pub nonneg: Vec<bool>,
}

impl ConvexProgram {
    pub fn new(num_vars: usize) -> Self {
        ConvexProgram {
            num_vars,
            linear_cost: alloc::vec![0.0; num_vars],
            constant: 0.0,
            convex_terms: Vec::new(),
            eq_rows: Vec::new(),
            ineq_rows: Vec::new(),
            nonneg: alloc::vec![true; num_vars],
        }
    }

    pub fn add_var(&mut self, cost: f64, nonneg: bool) -> usize {
        self.num_vars += 1;
        self.linear_cost.push(cost);
        self.nonneg.push(nonneg);
        self.num_vars - 1
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.constant
            + math::dot(&self.linear_cost, x)
            + self
                .convex_terms
                .iter()
                .map(|t| t.weight * t.kind.value(x[t.var]))
                .sum::<f64>()
    }

    /// Largest absolute violation of the rows and nonnegativity bounds.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for r in &self.eq_rows {
            worst = worst.max(math::abs(r.activity(x) - r.rhs));
        }
        for r in &self.ineq_rows {
            let a = r.row.activity(x);
            let v = match r.sense {
                Sense::Ge => r.row.rhs - a,
                Sense::Le => a - r.row.rhs,
            };
            worst = worst.max(v);
        }
        for (j, &nn) in self.nonneg.iter().enumerate() {
            if nn {
                worst = worst.max(-x[j]);
            }
        }
        worst
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_vars;
        if n == 0 {
            return Err(Error::InvalidArgument("program has no variables".into()));
        }
        if self.linear_cost.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: self.linear_cost.len() });
        }
        if self.nonneg.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: self.nonneg.len() });
        }
        let rows = self.eq_rows.iter().chain(self.ineq_rows.iter().map(|r| &r.row));
        for r in rows {
            if r.coeffs.iter().any(|&(j, a)| j >= n || !a.is_finite()) || !r.rhs.is_finite() {
                return Err(Error::InvalidArgument("malformed constraint row".into()));
            }
        }
        for t in &self.convex_terms {
            if t.var >= n || t.weight < 0.0 {
                return Err(Error::InvalidArgument("malformed convex term".into()));
            }
            if !self.nonneg[t.var] {
                return Err(Error::InvalidArgument("convex term on a free variable".into()));
            }
        }
        Ok(())
    }
}

/// Epigraph variable linking a stage program to the cut approximation of
/// the next-stage value function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Epigraph {
    pub theta_var: usize,
    pub first_cut_row: usize,
    pub num_cuts: usize,
}

/// One stage's program together with its state bookkeeping.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageSubproblem {
    pub stage: usize,
    pub program: ConvexProgram,
    pub epigraph: Option<Epigraph>,
    /// Indices of the variables forming the outgoing state `x_t`.
    pub state_vars: Vec<usize>,
    /// Length of the incoming state vector the coupled rows refer to.
    pub prev_dim: usize,
}

impl StageSubproblem {
    pub fn objective(&self, x: &[f64]) -> f64 {
        self.program.objective(x)
    }

    /// Stage cost `f_t(x)`: the objective without the epigraph variable.
    pub fn stage_cost(&self, x: &[f64]) -> f64 {
        let obj = self.program.objective(x);
        match &self.epigraph {
            Some(e) => obj - x[e.theta_var],
            None => obj,
        }
    }

    pub fn state(&self, x: &[f64]) -> Vec<f64> {
        self.state_vars.iter().map(|&j| x[j]).collect()
    }

    /// Gradient of the optimal value with respect to the incoming state,
    /// given row multipliers `eq_duals` (d value / d rhs) and nonnegative
    /// inequality multipliers `ineq_duals`.
    pub fn state_gradient(&self, eq_duals: &[f64], ineq_duals: &[f64]) -> Vec<f64> {
        let mut g = alloc::vec![0.0; self.prev_dim];
        for (row, &y) in self.program.eq_rows.iter().zip(eq_duals) {
            for (gi, c) in g.iter_mut().zip(&row.coupling) {
                *gi += y * c;
            }
        }
        for (r, &u) in self.program.ineq_rows.iter().zip(ineq_duals) {
            let y = match r.sense {
                Sense::Ge => u,
                Sense::Le => -u,
            };
            for (gi, c) in g.iter_mut().zip(&r.row.coupling) {
                *gi += y * c;
            }
        }
        g
    }
}

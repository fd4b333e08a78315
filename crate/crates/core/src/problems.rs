//! Benchmark families: hydro-thermal energy planning (EP), consumption and
//! investment planning (FP) and three-product production planning (PP).

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::cuts::{Cut, CutSet};
use crate::error::{Error, Result};
use crate::math;
use crate::model::{
    ConvexKind, ConvexProgram, ConvexTerm, DistributionParams, Epigraph, Family, IneqRow,
    LinearRow, ProblemInstance, Realization, Sense, StageSubproblem,
};

pub mod energy {
    pub const INITIAL_RESERVOIR: f64 = 40.0;
    pub const HYDRO_COST: f64 = 2.0;
    pub const THERMAL_COST: f64 = 7.0;
    pub const DEMAND: f64 = 20.0;
    pub const LEVEL_COEF: f64 = 0.1;
    pub const LEVEL_SCALE: f64 = 5.0;
}

pub mod financial {
    pub const INITIAL_WEALTH: f64 = 100.0;
    pub const RISK_AVERSION: f64 = 1.0;
    pub const RISK_FREE: f64 = 1.03;
}

pub mod production {
    pub const RESOURCE_USE: [f64; 3] = [1.0, 2.0, 5.0];
    pub const OUTSOURCE_COST: [f64; 3] = [6.0, 12.0, 20.0];
    pub const STORAGE_COST: [f64; 3] = [3.0, 7.0, 10.0];
    pub const RESOURCE: f64 = 10.0;
}

/// Lower bound on the financial value function used as its trivial cut.
pub const FP_TRIVIAL_FLOOR: f64 = -1e4;

/// Fixed data and parameter priors of one family.
#[derive(Clone, Debug, PartialEq)]
pub struct FamilySpec {
    pub family: Family,
    pub fixed_params: Vec<(&'static str, f64)>,
    /// `(name, low, high)` of each uniform prior, in parameter order.
    pub priors: Vec<(&'static str, f64, f64)>,
    pub state_labels: Vec<&'static str>,
}

pub fn family_spec(family: Family) -> FamilySpec {
    match family {
        Family::Energy => FamilySpec {
            family,
            fixed_params: vec![
                ("r0_init", energy::INITIAL_RESERVOIR),
                ("c_hydro", energy::HYDRO_COST),
                ("c_thermal", energy::THERMAL_COST),
                ("demand", energy::DEMAND),
                ("a", energy::LEVEL_COEF),
                ("b", energy::LEVEL_SCALE),
            ],
            priors: vec![("mu_I", 15.0, 25.0), ("sigma_I", 4.0, 6.0)],
            state_labels: vec!["r_final"],
        },
        Family::Financial => FamilySpec {
            family,
            fixed_params: vec![
                ("w_init", financial::INITIAL_WEALTH),
                ("eta", financial::RISK_AVERSION),
                ("r_free", financial::RISK_FREE),
            ],
            priors: vec![("mu", 0.04, 0.08), ("sigma", 0.15, 0.25)],
            state_labels: vec!["S", "B"],
        },
        Family::Production => {
            let mut fixed = Vec::new();
            let names = [
                ["a1", "a2", "a3"],
                ["b1", "b2", "b3"],
                ["c1", "c2", "c3"],
            ];
            let values = [
                production::RESOURCE_USE,
                production::OUTSOURCE_COST,
                production::STORAGE_COST,
            ];
            for (ns, vs) in names.iter().zip(values.iter()) {
                for (n, v) in ns.iter().zip(vs.iter()) {
                    fixed.push((*n, *v));
                }
            }
            fixed.push(("resource", production::RESOURCE));
            FamilySpec {
                family,
                fixed_params: fixed,
                priors: vec![
                    ("mu_d1", 3.0, 6.0),
                    ("sigma_d1", 0.2, 0.4),
                    ("mu_d2", 1.5, 4.0),
                    ("sigma_d2", 0.1, 0.2),
                    ("mu_d3", 1.0, 2.0),
                    ("sigma_d3", 0.05, 0.1),
                ],
                state_labels: vec!["s1", "s2", "s3"],
            }
        }
    }
}

fn is_std_param(name: &str) -> bool {
    name.starts_with("sigma")
}

impl ProblemInstance {
    /// Builds an instance from explicit parameters, in prior order.
    /// Standard deviations may be zero for degenerate test instances.
    pub fn new(family: Family, stages: usize, values: &[f64]) -> Result<Self> {
        if stages < 2 {
            return Err(Error::InvalidArgument("at least two stages are required".into()));
        }
        let spec = family_spec(family);
        if values.len() != spec.priors.len() {
            return Err(Error::DimensionMismatch { expected: spec.priors.len(), got: values.len() });
        }
        let mut entries = Vec::with_capacity(values.len());
        for (&(name, _, _), &v) in spec.priors.iter().zip(values) {
            if !v.is_finite() || (is_std_param(name) && v < 0.0) {
                return Err(Error::InvalidArgument(alloc::format!("invalid value {v} for {name}")));
            }
            entries.push((String::from(name), v));
        }
        Ok(ProblemInstance { family, stages, lambda: DistributionParams { entries }, seed: 0 })
    }

    /// Maps unit-interval draws onto the family priors.
    pub fn from_unit(family: Family, stages: usize, unit: &[f64]) -> Result<Self> {
        let spec = family_spec(family);
        if unit.len() != spec.priors.len() {
            return Err(Error::DimensionMismatch { expected: spec.priors.len(), got: unit.len() });
        }
        let values: Vec<f64> =
            spec.priors.iter().zip(unit).map(|(&(_, lo, hi), &u)| lo + u * (hi - lo)).collect();
        ProblemInstance::new(family, stages, &values)
    }

    /// Draws the distribution parameters from the family priors.
    pub fn sample<R: Rng + ?Sized>(family: Family, stages: usize, rng: &mut R) -> Result<Self> {
        let n = family_spec(family).priors.len();
        let unit: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        ProblemInstance::from_unit(family, stages, &unit)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn state_dim(&self) -> usize {
        self.family.state_dim()
    }

    pub fn trivial_alpha(&self) -> f64 {
        match self.family {
            Family::Energy | Family::Production => 0.0,
            Family::Financial => FP_TRIVIAL_FLOOR,
        }
    }

    pub fn trivial_cut(&self) -> Cut {
        Cut::trivial(self.state_dim(), self.trivial_alpha())
    }

    /// Fresh cut set for the value function of `stage`.
    pub fn initial_cutset(&self, stage: usize) -> CutSet {
        CutSet::new(stage, self.trivial_cut())
    }

    fn param(&self, i: usize) -> f64 {
        self.lambda.entries[i].1
    }

    /// Stage length used by the stock return model.
    pub fn dt(&self) -> f64 {
        1.0 / (self.stages - 1) as f64
    }

    pub fn realization_dim(&self) -> usize {
        match self.family {
            Family::Energy | Family::Financial => 1,
            Family::Production => 3,
        }
    }

    /// Samples the stage-`t` uncertainty; stage 1 is deterministic.
    pub fn sample_realization<R: Rng + ?Sized>(&self, t: usize, rng: &mut R) -> Realization {
        if t <= 1 {
            return Realization::empty();
        }
        match self.family {
            Family::Energy => Realization(vec![truncated_normal(self.param(0), self.param(1), rng)]),
            Family::Financial => {
                let (mu, sigma) = (self.param(0), self.param(1));
                let dt = self.dt();
                let mean = (mu - sigma * sigma / 2.0) * dt;
                let log_r = normal(mean, sigma * math::sqrt(dt), rng);
                Realization(vec![math::exp(log_r)])
            }
            Family::Production => Realization(
                (0..3).map(|i| truncated_normal(self.param(2 * i), self.param(2 * i + 1), rng)).collect(),
            ),
        }
    }

    /// Mean realization, used for degenerate and reference cases.
    pub fn mean_realization(&self, t: usize) -> Realization {
        if t <= 1 {
            return Realization::empty();
        }
        match self.family {
            Family::Energy => Realization(vec![self.param(0)]),
            Family::Financial => {
                let (mu, sigma) = (self.param(0), self.param(1));
                Realization(vec![math::exp((mu - sigma * sigma / 2.0) * self.dt())])
            }
            Family::Production => Realization((0..3).map(|i| self.param(2 * i)).collect()),
        }
    }

    fn check_stage(&self, t: usize, x_prev: &[f64], xi: &Realization) -> Result<()> {
        if t == 0 || t > self.stages {
            return Err(Error::StageOutOfRange { stage: t, stages: self.stages });
        }
        if t > 1 {
            if x_prev.len() != self.state_dim() {
                return Err(Error::DimensionMismatch { expected: self.state_dim(), got: x_prev.len() });
            }
            if xi.0.len() != self.realization_dim() {
                return Err(Error::DimensionMismatch { expected: self.realization_dim(), got: xi.0.len() });
            }
        }
        Ok(())
    }

    /// Stage program without any value-function term.
    pub fn stage_program(&self, t: usize, x_prev: &[f64], xi: &Realization) -> Result<StageSubproblem> {
        self.check_stage(t, x_prev, xi)?;
        let sp = match self.family {
            Family::Energy => self.energy_stage(t, x_prev, xi),
            Family::Financial => self.financial_stage(t, x_prev, xi),
            Family::Production => self.production_stage(t, x_prev, xi),
        };
        Ok(sp)
    }

    /// Stage-`t` subproblem with the previous state folded into the
    /// right-hand sides and, for `t < T`, one epigraph row per cut.
    pub fn build_stage_subproblem(
        &self,
        t: usize,
        x_prev: &[f64],
        xi: &Realization,
        cuts: Option<&CutSet>,
    ) -> Result<StageSubproblem> {
        let mut sp = self.stage_program(t, x_prev, xi)?;
        match (cuts, t == self.stages) {
            (None, true) => Ok(sp),
            (Some(cs), false) => {
                attach_cuts(&mut sp, cs, self.trivial_alpha())?;
                Ok(sp)
            }
            (None, false) => Err(Error::InvalidArgument("stages before T need a cut set".into())),
            (Some(_), true) => Err(Error::InvalidArgument("the last stage takes no cut set".into())),
        }
    }

    fn energy_stage(&self, t: usize, x_prev: &[f64], xi: &Realization) -> StageSubproblem {
        use energy::*;
        // r_init, r_final, W, H
        let mut p = ConvexProgram::new(4);
        p.linear_cost[2] = HYDRO_COST;
        p.linear_cost[3] = THERMAL_COST;
        p.convex_terms.push(ConvexTerm {
            var: 1,
            kind: ConvexKind::ExpAffine { a: -LEVEL_COEF, b: LEVEL_SCALE },
            weight: 1.0,
        });
        let init = if t == 1 {
            LinearRow::new(vec![(0, 1.0)], INITIAL_RESERVOIR)
        } else {
            LinearRow { coeffs: vec![(0, 1.0)], rhs: x_prev[0] + xi.0[0], coupling: vec![1.0] }
        };
        p.eq_rows.push(init);
        p.eq_rows.push(LinearRow::new(vec![(1, 1.0), (0, -1.0), (2, 1.0)], 0.0));
        p.ineq_rows.push(IneqRow { sense: Sense::Ge, row: LinearRow::new(vec![(2, 1.0), (3, 1.0)], DEMAND) });
        StageSubproblem { stage: t, program: p, epigraph: None, state_vars: vec![1], prev_dim: prev_dim(t, 1) }
    }

    fn utility(&self) -> ConvexKind {
        let eta = financial::RISK_AVERSION;
        if eta == 1.0 {
            ConvexKind::NegLog
        } else {
            ConvexKind::NegPower { eta }
        }
    }

    fn financial_stage(&self, t: usize, x_prev: &[f64], xi: &Realization) -> StageSubproblem {
        let (rhs, coupling) = if t == 1 {
            (financial::INITIAL_WEALTH, Vec::new())
        } else {
            let r_stock = xi.0[0];
            let r_free = financial::RISK_FREE;
            (r_stock * x_prev[0] + r_free * x_prev[1], vec![r_stock, r_free])
        };
        let u = self.utility();
        if t == self.stages {
            // C, W
            let mut p = ConvexProgram::new(2);
            p.convex_terms.push(ConvexTerm { var: 0, kind: u, weight: 1.0 });
            p.convex_terms.push(ConvexTerm { var: 1, kind: u, weight: 1.0 });
            p.eq_rows.push(LinearRow { coeffs: vec![(0, 1.0), (1, 1.0)], rhs, coupling });
            StageSubproblem { stage: t, program: p, epigraph: None, state_vars: Vec::new(), prev_dim: 2 }
        } else {
            // S, B, C
            let mut p = ConvexProgram::new(3);
            p.convex_terms.push(ConvexTerm { var: 2, kind: u, weight: 1.0 });
            p.eq_rows.push(LinearRow { coeffs: vec![(0, 1.0), (1, 1.0), (2, 1.0)], rhs, coupling });
            StageSubproblem { stage: t, program: p, epigraph: None, state_vars: vec![0, 1], prev_dim: prev_dim(t, 2) }
        }
    }

    fn production_stage(&self, t: usize, x_prev: &[f64], xi: &Realization) -> StageSubproblem {
        use production::*;
        // x1..x3, y1..y3, s1..s3
        let mut p = ConvexProgram::new(9);
        for i in 0..3 {
            p.linear_cost[3 + i] = OUTSOURCE_COST[i];
            if t < self.stages {
                p.linear_cost[6 + i] = STORAGE_COST[i];
            }
        }
        p.ineq_rows.push(IneqRow {
            sense: Sense::Le,
            row: LinearRow::new((0..3).map(|i| (i, RESOURCE_USE[i])).collect(), RESOURCE),
        });
        for i in 0..3 {
            let coeffs = vec![(6 + i, 1.0), (i, -1.0), (3 + i, -1.0)];
            let row = if t == 1 {
                LinearRow::new(coeffs, 0.0)
            } else {
                let mut coupling = vec![0.0; 3];
                coupling[i] = 1.0;
                LinearRow { coeffs, rhs: x_prev[i] - xi.0[i], coupling }
            };
            p.eq_rows.push(row);
        }
        StageSubproblem { stage: t, program: p, epigraph: None, state_vars: vec![6, 7, 8], prev_dim: prev_dim(t, 3) }
    }

    /// Exact stage cost `f_t(x, xi)` for a full stage decision vector.
    pub fn stage_objective_value(&self, t: usize, x: &[f64], _xi: &Realization) -> Result<f64> {
        if t == 0 || t > self.stages {
            return Err(Error::StageOutOfRange { stage: t, stages: self.stages });
        }
        let need = match self.family {
            Family::Energy => 4,
            Family::Financial if t == self.stages => 2,
            Family::Financial => 3,
            Family::Production => 9,
        };
        if x.len() < need {
            return Err(Error::DimensionMismatch { expected: need, got: x.len() });
        }
        match self.family {
            Family::Energy => {
                use energy::*;
                Ok(HYDRO_COST * x[2] + THERMAL_COST * x[3] + math::exp(-LEVEL_COEF * x[1] + LEVEL_SCALE))
            }
            Family::Financial => {
                if t == self.stages {
                    Ok(-utility_exact(x[0])? - utility_exact(x[1])?)
                } else {
                    Ok(-utility_exact(x[2])?)
                }
            }
            Family::Production => {
                use production::*;
                let mut v = 0.0;
                for i in 0..3 {
                    v += OUTSOURCE_COST[i] * x[3 + i];
                    if t < self.stages {
                        v += STORAGE_COST[i] * x[6 + i];
                    }
                }
                Ok(v)
            }
        }
    }
}

fn prev_dim(t: usize, dim: usize) -> usize {
    if t == 1 {
        0
    } else {
        dim
    }
}

fn utility_exact(c: f64) -> Result<f64> {
    let eta = financial::RISK_AVERSION;
    if eta == 1.0 {
        if c <= 0.0 {
            return Err(Error::Domain("log of a nonpositive consumption"));
        }
        Ok(math::ln(c))
    } else {
        if c < 0.0 {
            return Err(Error::Domain("power of a negative consumption"));
        }
        Ok(math::powf(c, 1.0 - eta) / (1.0 - eta))
    }
}

/// Adds the epigraph variable `theta`, nonnegative when `floor >= 0` and
/// free otherwise, and one row `theta >= beta · x_t + alpha` per cut.
pub fn attach_cuts(sp: &mut StageSubproblem, cuts: &CutSet, floor: f64) -> Result<()> {
    if cuts.dim() != sp.state_vars.len() {
        return Err(Error::DimensionMismatch { expected: sp.state_vars.len(), got: cuts.dim() });
    }
    // shifting theta by a negative floor instead would put the objective
    // on the scale of the floor and cost accuracy
    let theta = sp.program.add_var(1.0, floor >= 0.0);
    let first = sp.program.ineq_rows.len();
    for c in cuts.cuts() {
        let mut coeffs = vec![(theta, 1.0)];
        for (&j, &b) in sp.state_vars.iter().zip(&c.beta) {
            if b != 0.0 {
                coeffs.push((j, -b));
            }
        }
        sp.program.ineq_rows.push(IneqRow { sense: Sense::Ge, row: LinearRow::new(coeffs, c.alpha) });
    }
    sp.epigraph = Some(Epigraph { theta_var: theta, first_cut_row: first, num_cuts: cuts.len() });
    Ok(())
}

fn normal<R: Rng + ?Sized>(mean: f64, std: f64, rng: &mut R) -> f64 {
    if std <= 0.0 {
        return mean;
    }
    Normal::new(mean, std).map(|d| d.sample(rng)).unwrap_or(mean)
}

/// Normal draw conditioned on being nonnegative (by resampling).
fn truncated_normal<R: Rng + ?Sized>(mean: f64, std: f64, rng: &mut R) -> f64 {
    if std <= 0.0 {
        return mean.max(0.0);
    }
    for _ in 0..1000 {
        let v = normal(mean, std, rng);
        if v >= 0.0 {
            return v;
        }
    }
    0.0
}

#[cfg(test)]
mod tests;

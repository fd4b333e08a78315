//! Policy evaluation on scenario trees and solution-quality metrics.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cuts::CutSet;
use crate::error::{Error, Result};
use crate::math;
use crate::model::ProblemInstance;
use crate::scenario::ScenarioTree;
use crate::solver::{solve, SolveStatus, SolverOptions};

/// `|candidate - reference| / |reference|`.
pub fn error_ratio(candidate: f64, reference: f64) -> Result<f64> {
    if reference == 0.0 || !reference.is_finite() {
        return Err(Error::InvalidArgument("reference objective must be finite and nonzero".into()));
    }
    Ok(math::abs(candidate - reference) / math::abs(reference))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyEvaluation {
    /// Probability-weighted true stage costs; NaN when infeasible.
    pub objective: f64,
    pub feasible: bool,
    /// First failing node and its solver status, if any.
    pub failure: Option<(usize, SolveStatus)>,
}

/// Runs the cut-based policy down the tree: every node solves its stage
/// with the cuts for the next stage, starting from its parent's state.
/// `cutsets[t - 1]` approximates the value function of stage `t + 1`.
pub fn evaluate_policy(
    instance: &ProblemInstance,
    cutsets: &[CutSet],
    tree: &ScenarioTree,
    opts: &SolverOptions,
) -> Result<PolicyEvaluation> {
    let stages = instance.stages;
    if cutsets.len() != stages - 1 {
        return Err(Error::DimensionMismatch { expected: stages - 1, got: cutsets.len() });
    }
    if tree.num_stages() != stages {
        return Err(Error::DimensionMismatch { expected: stages, got: tree.num_stages() });
    }
    let prob = tree.path_probabilities();
    let mut states: Vec<Vec<f64>> = vec![Vec::new(); tree.len()];
    let mut total = 0.0;
    for (i, node) in tree.nodes.iter().enumerate() {
        let t = node.stage;
        let prev: &[f64] = match node.parent {
            Some(p) => &states[p],
            None => &[],
        };
        let cuts = (t < stages).then(|| &cutsets[t - 1]);
        let sp = instance.build_stage_subproblem(t, prev, &node.realization, cuts)?;
        let res = solve(&sp, opts)?;
        if res.status != SolveStatus::Optimal {
            return Ok(PolicyEvaluation { objective: f64::NAN, feasible: false, failure: Some((i, res.status)) });
        }
        total += prob[i] * sp.stage_cost(&res.x);
        states[i] = sp.state(&res.x);
    }
    Ok(PolicyEvaluation { objective: total, feasible: true, failure: None })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub instance: usize,
    pub candidate: f64,
    pub reference: f64,
    /// NaN when the candidate is infeasible.
    pub error_ratio: f64,
    pub feasible: bool,
    pub candidate_seconds: f64,
    pub reference_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    /// Sample standard deviation over `sqrt(n)`.
    pub std_error: f64,
    pub n: usize,
}

impl Aggregate {
    pub fn of(values: &[f64]) -> Aggregate {
        let n = values.len();
        if n == 0 {
            return Aggregate { mean: f64::NAN, std_error: f64::NAN, n };
        }
        let (mean, std) = math::mean_std(values);
        Aggregate { mean, std_error: std / math::sqrt(n as f64), n }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub records: Vec<EvalRecord>,
    /// Over feasible records only.
    pub error_ratio: Aggregate,
    pub candidate_seconds: Aggregate,
    pub reference_seconds: Aggregate,
    pub infeasibility_ratio: f64,
}

impl EvalReport {
    pub fn new(method: impl Into<String>, records: Vec<EvalRecord>) -> Result<EvalReport> {
        let ratios: Vec<f64> = records.iter().filter(|r| r.feasible).map(|r| r.error_ratio).collect();
        let cand: Vec<f64> = records.iter().map(|r| r.candidate_seconds).collect();
        let refs: Vec<f64> = records.iter().map(|r| r.reference_seconds).collect();
        Ok(EvalReport {
            method: method.into(),
            error_ratio: Aggregate::of(&ratios),
            candidate_seconds: Aggregate::of(&cand),
            reference_seconds: Aggregate::of(&refs),
            infeasibility_ratio: infeasibility_ratio(&records)?,
            records,
        })
    }
}

/// Fraction of records whose candidate was infeasible.
pub fn infeasibility_ratio(records: &[EvalRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::InvalidArgument("no records".into()));
    }
    Ok(records.iter().filter(|r| !r.feasible).count() as f64 / records.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueFunctionRow {
    pub point: Vec<f64>,
    pub exact_mean: f64,
    pub exact_std: f64,
    /// Number of realizations whose exact solve succeeded.
    pub samples: usize,
    /// One entry per method; `None` when unavailable.
    pub methods: Vec<Option<f64>>,
}

/// Compares cut approximations of the last-stage value function with
/// exact sample averages at each probe point.
pub fn value_function_comparison<R: Rng + ?Sized>(
    instance: &ProblemInstance,
    methods: &[&CutSet],
    grid: &[Vec<f64>],
    samples: usize,
    rng: &mut R,
    opts: &SolverOptions,
) -> Result<Vec<ValueFunctionRow>> {
    let t = instance.stages;
    if samples == 0 {
        return Err(Error::InvalidArgument("at least one sample is required".into()));
    }
    // one set of realizations shared by every probe point
    let draws: Vec<_> = (0..samples).map(|_| instance.sample_realization(t, rng)).collect();
    let mut rows = Vec::with_capacity(grid.len());
    for x in grid {
        let mut values = Vec::with_capacity(samples);
        for xi in &draws {
            let sp = instance.build_stage_subproblem(t, x, xi, None)?;
            let res = solve(&sp, opts)?;
            if res.status == SolveStatus::Optimal {
                values.push(res.objective);
            }
        }
        let (exact_mean, exact_std) = match values.len() {
            0 => (f64::NAN, f64::NAN),
            1 => (values[0], 0.0),
            _ => math::mean_std(&values),
        };
        let methods = methods.iter().map(|cs| cs.evaluate(x).ok()).collect();
        rows.push(ValueFunctionRow { point: x.clone(), exact_mean, exact_std, samples: values.len(), methods });
    }
    Ok(rows)
}

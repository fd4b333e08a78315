//! Stochastic dual dynamic programming.
//!
//! Each iteration samples forward scenarios under the current cuts, then
//! walks one trial trajectory backwards adding one Benders cut per stage.
//! The stage-1 optimum under the cuts is a lower bound; the upper bound is
//! either the usual statistical estimate or, on a fixed lattice, the exact
//! policy value on the full tree.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cuts::{Cut, CutOrigin, CutSet};
use crate::dataset::{CutSequenceExample, CutToken, Token};
use crate::error::{Error, Result};
use crate::eval::evaluate_policy;
use crate::math::{self, dot};
use crate::model::{ProblemInstance, Realization};
use crate::rng::{self, streams};
use crate::scenario::{Lattice, ScenarioTree};
use crate::solver::{solve, SolveStatus, SolverOptions};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Sampling {
    /// Fresh realizations every pass.
    Fresh,
    /// A lattice with this many branches per stage, drawn from the run seed
    /// exactly as [`crate::scenario::build_tree`] draws it.
    Lattice { branches: usize },
    Given(Lattice),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum UpperBoundMode {
    /// `v_bar + z sigma / sqrt(M)` over the forward scenarios.
    Statistical,
    /// Policy value on the full lattice tree; needs lattice sampling.
    Exact,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Threshold {
    Absolute(f64),
    /// Fraction of `1 + |lower|`.
    Relative(f64),
}

impl Threshold {
    pub fn value(self, lower: f64) -> f64 {
        match self {
            Threshold::Absolute(a) => a,
            Threshold::Relative(r) => r * (1.0 + math::abs(lower)),
        }
    }

    fn positive(self) -> bool {
        match self {
            Threshold::Absolute(a) | Threshold::Relative(a) => a > 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SddpConfig {
    pub forward_scenarios: usize,
    /// Backward realizations per stage under fresh sampling.
    pub backward_branches: usize,
    pub z_alpha: f64,
    pub threshold: Threshold,
    pub max_iters: usize,
    pub level1: bool,
    pub record_cuts: bool,
    pub seed: u64,
    pub sampling: Sampling,
    pub upper: UpperBoundMode,
    pub solver: SolverOptions,
}

impl Default for SddpConfig {
    fn default() -> Self {
        SddpConfig {
            forward_scenarios: 10,
            backward_branches: 10,
            z_alpha: 1.96,
            threshold: Threshold::Relative(0.01),
            max_iters: 100,
            level1: false,
            record_cuts: false,
            seed: 0,
            sampling: Sampling::Fresh,
            upper: UpperBoundMode::Statistical,
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundStats {
    pub v_bar: f64,
    pub sigma_v: f64,
    pub m: usize,
    pub z_alpha: f64,
    pub upper_bound: f64,
}

impl BoundStats {
    pub fn from_costs(costs: &[f64], z_alpha: f64) -> BoundStats {
        let (v_bar, sigma_v) = math::mean_std(costs);
        let m = costs.len();
        let upper_bound = v_bar + z_alpha * sigma_v / math::sqrt(m.max(1) as f64);
        BoundStats { v_bar, sigma_v, m, z_alpha, upper_bound }
    }

    fn exact(value: f64, m: usize) -> BoundStats {
        BoundStats { v_bar: value, sigma_v: 0.0, m, z_alpha: 0.0, upper_bound: value }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iteration: usize,
    pub lower: f64,
    pub v_bar: f64,
    pub upper: f64,
    pub gap: f64,
    pub cuts_per_stage: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SddpState {
    /// `cutsets[t - 1]` approximates the value function of stage `t + 1`.
    pub cutsets: Vec<CutSet>,
    pub iteration: usize,
    pub lower_bound: f64,
    pub upper: BoundStats,
    pub history: Vec<IterationLog>,
    /// Forward-pass states `x_t` per stage `t < T`.
    pub trial_points: Vec<Vec<Vec<f64>>>,
    /// Stage-1 decision of the last lower-bound solve.
    pub first_stage: Vec<f64>,
}

impl SddpState {
    pub fn new(instance: &ProblemInstance) -> SddpState {
        let t = instance.stages;
        SddpState {
            cutsets: (2..=t).map(|s| instance.initial_cutset(s)).collect(),
            iteration: 0,
            lower_bound: f64::NEG_INFINITY,
            upper: BoundStats::exact(f64::INFINITY, 0),
            history: Vec::new(),
            trial_points: vec![Vec::new(); t - 1],
            first_stage: Vec::new(),
        }
    }

    pub fn cut_counts(&self) -> Vec<usize> {
        self.cutsets.iter().map(CutSet::len).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SddpStatus {
    Converged,
    /// The iteration limit was hit before the gap closed.
    NonConvergence,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SddpOutcome {
    pub state: SddpState,
    pub status: SddpStatus,
    /// Cut sets before level-1 selection, when it was applied.
    pub unselected: Option<Vec<CutSet>>,
    pub sequences: Vec<CutSequenceExample>,
    /// Lattice the run sampled from, if any.
    pub lattice: Option<Lattice>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// States `x_1 .. x_{T-1}`.
    pub states: Vec<Vec<f64>>,
    /// Sum of true stage costs along the path.
    pub cost: f64,
}

/// Solves stages `1..=T` along each scenario with the current cuts.
/// `scenarios[s][t - 1]` is the stage-`t` realization of scenario `s`.
pub fn forward_pass(
    instance: &ProblemInstance,
    cutsets: &[CutSet],
    scenarios: &[Vec<Realization>],
    opts: &SolverOptions,
) -> Result<(Vec<Trajectory>, Vec<f64>)> {
    let stages = instance.stages;
    let mut out = Vec::with_capacity(scenarios.len());
    let mut costs = Vec::with_capacity(scenarios.len());
    for (s, path) in scenarios.iter().enumerate() {
        let mut prev: Vec<f64> = Vec::new();
        let mut states = Vec::with_capacity(stages - 1);
        let mut cost = 0.0;
        for t in 1..=stages {
            let cuts = (t < stages).then(|| &cutsets[t - 1]);
            let sp = instance.build_stage_subproblem(t, &prev, &path[t - 1], cuts)?;
            let res = solve(&sp, opts)?;
            if res.status != SolveStatus::Optimal {
                return Err(Error::Solve { stage: t, scenario: Some(s), status: res.status });
            }
            cost += sp.stage_cost(&res.x);
            if t < stages {
                prev = sp.state(&res.x);
                states.push(prev.clone());
            }
        }
        costs.push(cost);
        out.push(Trajectory { states, cost });
    }
    Ok((out, costs))
}

/// Benders cut for stage `t` at the trial state `x_prev`, averaging over
/// the weighted `branches`. Uses `cutsets[t - 1]` for stages below `T`.
pub fn stage_cut(
    instance: &ProblemInstance,
    cutsets: &[CutSet],
    t: usize,
    x_prev: &[f64],
    branches: &[(Realization, f64)],
    opts: &SolverOptions,
) -> Result<Cut> {
    let (value, beta) = stage_expectation(instance, cutsets, t, x_prev, branches, opts, true)?;
    let alpha = value - dot(&beta, x_prev);
    Cut::new(beta, alpha, CutOrigin::Sddp)
}

/// Probability-weighted optimum of stage `t` at `x_prev`, with the same
/// cut convention as [`stage_cut`].
pub fn expected_value(
    instance: &ProblemInstance,
    cutsets: &[CutSet],
    t: usize,
    x_prev: &[f64],
    branches: &[(Realization, f64)],
    opts: &SolverOptions,
) -> Result<f64> {
    Ok(stage_expectation(instance, cutsets, t, x_prev, branches, opts, false)?.0)
}

fn stage_expectation(
    instance: &ProblemInstance,
    cutsets: &[CutSet],
    t: usize,
    x_prev: &[f64],
    branches: &[(Realization, f64)],
    opts: &SolverOptions,
    gradient: bool,
) -> Result<(f64, Vec<f64>)> {
    let mut beta = vec![0.0; instance.state_dim()];
    let mut value = 0.0;
    let total: f64 = branches.iter().map(|b| b.1).sum();
    for (k, (xi, p)) in branches.iter().enumerate() {
        let cuts = (t < instance.stages).then(|| &cutsets[t - 1]);
        let sp = instance.build_stage_subproblem(t, x_prev, xi, cuts)?;
        let res = solve(&sp, opts)?;
        if res.status != SolveStatus::Optimal {
            return Err(Error::Solve { stage: t, scenario: Some(k), status: res.status });
        }
        let w = p / total;
        if gradient {
            let g = sp.state_gradient(&res.eq_duals, &res.ineq_duals);
            for (b, gi) in beta.iter_mut().zip(&g) {
                *b += w * gi;
            }
        }
        value += w * res.objective;
    }
    Ok((value, beta))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidityReport {
    pub checked: usize,
    pub violations: usize,
    /// Largest `cut - value` relative to `1 + |value|`.
    pub worst: f64,
}

/// Checks every cut of `cutsets[t - 2]` (approximating stage `t`) against
/// the re-solved expectation at each probe state of `probes[t - 2]`.
pub fn check_cut_validity(
    instance: &ProblemInstance,
    cutsets: &[CutSet],
    lattice: &Lattice,
    probes: &[Vec<Vec<f64>>],
    tol: f64,
    opts: &SolverOptions,
) -> Result<ValidityReport> {
    let mut rep = ValidityReport { worst: f64::NEG_INFINITY, ..Default::default() };
    for t in 2..=instance.stages {
        let cs = &cutsets[t - 2];
        for x in &probes[t - 2] {
            let v = expected_value(instance, cutsets, t, x, &lattice.stages[t - 1], opts)?;
            for c in cs.cuts() {
                let excess = (c.value(x) - v) / (1.0 + math::abs(v));
                rep.checked += 1;
                rep.worst = rep.worst.max(excess);
                if excess > tol {
                    rep.violations += 1;
                }
            }
        }
    }
    Ok(rep)
}

/// `n` probe states per stage `1..T`: uniform in the box from the origin
/// to 1.5 times the largest coordinate seen in `trial_points`.
pub fn probe_points<R: Rng + ?Sized>(trial_points: &[Vec<Vec<f64>>], n: usize, rng: &mut R) -> Vec<Vec<Vec<f64>>> {
    trial_points
        .iter()
        .map(|pts| {
            let d = pts.first().map_or(0, Vec::len);
            let hi: Vec<f64> =
                (0..d).map(|i| 1.5 * pts.iter().map(|p| p[i]).fold(1.0, f64::max)).collect();
            (0..n).map(|_| hi.iter().map(|&h| h * rng.random::<f64>()).collect()).collect()
        })
        .collect()
}

/// Adds one cut per stage `T, ..., 2` along `trajectory`, each computed
/// with the cuts already added further down. `branches(t)` gives the
/// stage-`t` realizations to average over.
pub fn backward_pass(
    instance: &ProblemInstance,
    cutsets: &mut [CutSet],
    trajectory: &Trajectory,
    branches: &mut dyn FnMut(usize) -> Vec<(Realization, f64)>,
    opts: &SolverOptions,
) -> Result<()> {
    for t in (2..=instance.stages).rev() {
        let x_prev = &trajectory.states[t - 2];
        let cut = stage_cut(instance, cutsets, t, x_prev, &branches(t), opts)?;
        cutsets[t - 2].add_cut(cut)?;
    }
    Ok(())
}

/// Stage-1 optimum under the current cuts: the SDDP lower bound.
pub fn lower_bound(instance: &ProblemInstance, cutsets: &[CutSet], opts: &SolverOptions) -> Result<(f64, Vec<f64>)> {
    let sp = instance.build_stage_subproblem(1, &[], &Realization::empty(), Some(&cutsets[0]))?;
    let res = solve(&sp, opts)?;
    if res.status != SolveStatus::Optimal {
        return Err(Error::Solve { stage: 1, scenario: None, status: res.status });
    }
    let x1 = sp.state(&res.x);
    Ok((res.objective, x1))
}

fn sample_path<R: Rng + ?Sized>(instance: &ProblemInstance, lattice: Option<&Lattice>, rng: &mut R) -> Vec<Realization> {
    (1..=instance.stages)
        .map(|t| match lattice {
            None => instance.sample_realization(t, rng),
            Some(l) => {
                let stage = &l.stages[t - 1];
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (xi, p) in stage {
                    acc += p;
                    if u < acc {
                        return xi.clone();
                    }
                }
                stage[stage.len() - 1].0.clone()
            }
        })
        .collect()
}

pub fn run_sddp(instance: &ProblemInstance, config: &SddpConfig) -> Result<SddpOutcome> {
    run_sddp_with(instance, config, &mut |_| {})
}

/// Runs SDDP, calling `observe` after every iteration.
pub fn run_sddp_with(
    instance: &ProblemInstance,
    config: &SddpConfig,
    observe: &mut dyn FnMut(&IterationLog),
) -> Result<SddpOutcome> {
    if !config.threshold.positive() {
        return Err(Error::InvalidArgument("threshold must be positive".into()));
    }
    if config.forward_scenarios < 1 || config.backward_branches < 1 {
        return Err(Error::InvalidArgument("scenario counts must be positive".into()));
    }
    let lattice = match &config.sampling {
        Sampling::Fresh => None,
        Sampling::Lattice { branches } => {
            let mut r = rng::stream(config.seed, streams::TREE);
            Some(Lattice::sample(instance, *branches, &mut r)?)
        }
        Sampling::Given(l) => {
            if l.num_stages() != instance.stages {
                return Err(Error::DimensionMismatch { expected: instance.stages, got: l.num_stages() });
            }
            Some(l.clone())
        }
    };
    let tree = match (config.upper, &lattice) {
        (UpperBoundMode::Exact, Some(l)) => Some(ScenarioTree::from_lattice(l)?),
        (UpperBoundMode::Exact, None) => {
            return Err(Error::InvalidArgument("the exact upper bound needs a lattice".into()))
        }
        _ => None,
    };
    let opts = &config.solver;
    let mut rng = rng::stream(config.seed, streams::SDDP);
    let mut state = SddpState::new(instance);
    let mut status = SddpStatus::NonConvergence;

    while state.iteration < config.max_iters {
        let scenarios: Vec<Vec<Realization>> =
            (0..config.forward_scenarios).map(|_| sample_path(instance, lattice.as_ref(), &mut rng)).collect();
        let (trajectories, costs) = forward_pass(instance, &state.cutsets, &scenarios, opts)?;
        for tr in &trajectories {
            for (t, x) in tr.states.iter().enumerate() {
                state.trial_points[t].push(x.clone());
            }
        }
        let mut branches = |t: usize| match &lattice {
            Some(l) => l.stages[t - 1].clone(),
            None => {
                let p = 1.0 / config.backward_branches as f64;
                (0..config.backward_branches).map(|_| (instance.sample_realization(t, &mut rng), p)).collect()
            }
        };
        backward_pass(instance, &mut state.cutsets, &trajectories[0], &mut branches, opts)?;
        let (lb, x1) = lower_bound(instance, &state.cutsets, opts)?;
        state.iteration += 1;
        state.lower_bound = lb;
        state.first_stage = x1;
        state.upper = match &tree {
            Some(tree) => {
                let ev = evaluate_policy(instance, &state.cutsets, tree, opts)?;
                if !ev.feasible {
                    let (node, status) = ev.failure.unwrap_or((0, SolveStatus::NumericalFailure));
                    return Err(Error::Solve { stage: tree.nodes[node].stage, scenario: Some(node), status });
                }
                BoundStats::exact(ev.objective, tree.leaves().count())
            }
            None => BoundStats::from_costs(&costs, config.z_alpha),
        };
        let gap = state.upper.upper_bound - state.lower_bound;
        let log = IterationLog {
            iteration: state.iteration,
            lower: state.lower_bound,
            v_bar: state.upper.v_bar,
            upper: state.upper.upper_bound,
            gap,
            cuts_per_stage: state.cut_counts(),
        };
        observe(&log);
        state.history.push(log);
        if math::abs(gap) <= config.threshold.value(state.lower_bound) {
            status = SddpStatus::Converged;
            break;
        }
    }

    let mut unselected = None;
    if config.level1 {
        let full = state.cutsets.clone();
        let mut points = state.trial_points.clone();
        points[0].push(state.first_stage.clone());
        for (cs, pts) in state.cutsets.iter_mut().zip(&points) {
            if !pts.is_empty() {
                *cs = cs.level1_select(pts)?;
            }
        }
        unselected = Some(full);
    }
    let sequences = if config.record_cuts { record_sequences(instance, &state.cutsets) } else { Vec::new() };
    Ok(SddpOutcome { state, status, unselected, sequences, lattice })
}

/// One token sequence per stage `t < T`: the trivial cut as start, then
/// the remaining cuts in generation order with the last one as end.
pub fn record_sequences(instance: &ProblemInstance, cutsets: &[CutSet]) -> Vec<CutSequenceExample> {
    let trivial = instance.trivial_cut();
    cutsets
        .iter()
        .enumerate()
        .map(|(k, cs)| {
            let t = k + 1;
            let mut seq = vec![CutToken { beta: trivial.beta.clone(), alpha: trivial.alpha, token: Token::Start }];
            for c in cs.cuts() {
                if c.origin != CutOrigin::Trivial {
                    seq.push(CutToken { beta: c.beta.clone(), alpha: c.alpha, token: Token::Middle });
                }
            }
            if seq.len() == 1 {
                seq.push(CutToken { beta: trivial.beta.clone(), alpha: trivial.alpha, token: Token::End });
            } else {
                seq.last_mut().unwrap().token = Token::End;
            }
            CutSequenceExample {
                family: instance.family,
                stages: instance.stages,
                stage: t,
                lambda: instance.lambda.clone(),
                t_rel: t as f64 / (instance.stages - 1) as f64,
                sequence: seq,
                source_seed: instance.seed,
            }
        })
        .collect()
}

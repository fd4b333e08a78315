//! Scenario trees and the deterministic-equivalent program.
//!
//! Trees are built on a stagewise-independent lattice: every node of stage
//! `t` branches on the same set of stage-`t+1` realizations. The lattice
//! can be handed to SDDP so both methods see the same discretization.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ConvexProgram, ConvexTerm, IneqRow, LinearRow, ProblemInstance, Realization};
use crate::rng::{self, streams};
use crate::solver::{solve_program, Backend, SolveStatus, SolverOptions};

/// Largest deterministic equivalent that will be assembled.
pub const MAX_DETEQUIV_VARS: usize = 200_000;

/// Guard against trees that would not fit in memory.
const MAX_TREE_NODES: usize = 5_000_000;

/// Per-stage realizations with their probabilities; index `t - 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub stages: Vec<Vec<(Realization, f64)>>,
}

impl Lattice {
    /// Samples `branches` equally likely realizations for each stage after
    /// the first.
    pub fn sample<R: Rng + ?Sized>(instance: &ProblemInstance, branches: usize, rng: &mut R) -> Result<Lattice> {
        if branches == 0 {
            return Err(Error::InvalidArgument("branches must be at least 1".into()));
        }
        let mut stages = vec![vec![(Realization::empty(), 1.0)]];
        let p = 1.0 / branches as f64;
        for t in 2..=instance.stages {
            stages.push((0..branches).map(|_| (instance.sample_realization(t, rng), p)).collect());
        }
        Ok(Lattice { stages })
    }

    /// Lattice with the mean realization at every stage.
    pub fn deterministic(instance: &ProblemInstance) -> Lattice {
        let stages = (1..=instance.stages).map(|t| vec![(instance.mean_realization(t), 1.0)]).collect();
        Lattice { stages }
    }

    pub fn num_stages(&self) -> usize {
        self.stages.len()
    }

    pub fn branches(&self, t: usize) -> usize {
        self.stages[t - 1].len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub stage: usize,
    pub parent: Option<usize>,
    pub realization: Realization,
    /// Probability conditional on the parent.
    pub probability: f64,
}

/// Nodes are stored breadth first, so parents precede their children and
/// stages are nondecreasing along the node list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioTree {
    pub nodes: Vec<TreeNode>,
    /// Branch count into each stage; the first entry is 1.
    pub branching: Vec<usize>,
}

impl ScenarioTree {
    pub fn from_lattice(lattice: &Lattice) -> Result<ScenarioTree> {
        let branching: Vec<usize> = lattice.stages.iter().map(Vec::len).collect();
        if branching.first() != Some(&1) {
            return Err(Error::InvalidArgument("the first stage must have a single node".into()));
        }
        let mut total = 0usize;
        let mut width = 1usize;
        for &b in &branching {
            width = width.saturating_mul(b);
            total = total.saturating_add(width);
        }
        if total > MAX_TREE_NODES {
            return Err(Error::TooLarge { vars: total, limit: MAX_TREE_NODES });
        }
        let mut nodes = Vec::with_capacity(total);
        let (xi, p) = lattice.stages[0][0].clone();
        nodes.push(TreeNode { stage: 1, parent: None, realization: xi, probability: p });
        let mut level = 0..1;
        for t in 2..=lattice.num_stages() {
            let start = nodes.len();
            for parent in level.clone() {
                for (xi, p) in &lattice.stages[t - 1] {
                    nodes.push(TreeNode { stage: t, parent: Some(parent), realization: xi.clone(), probability: *p });
                }
            }
            level = start..nodes.len();
        }
        Ok(ScenarioTree { nodes, branching })
    }

    pub fn num_stages(&self) -> usize {
        self.branching.len()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn children(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.nodes.len()];
        for (i, n) in self.nodes.iter().enumerate() {
            if let Some(p) = n.parent {
                out[p].push(i);
            }
        }
        out
    }

    /// Unconditional probability of reaching each node.
    pub fn path_probabilities(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.nodes.len()];
        for (i, n) in self.nodes.iter().enumerate() {
            out[i] = match n.parent {
                None => n.probability,
                Some(p) => out[p] * n.probability,
            };
        }
        out
    }

    pub fn leaves(&self) -> impl Iterator<Item = usize> + '_ {
        let last = self.num_stages();
        self.nodes.iter().enumerate().filter(move |(_, n)| n.stage == last).map(|(i, _)| i)
    }

    /// Checks the structural invariants, e.g. after import.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(msg.into()));
        if self.nodes.is_empty() || self.nodes[0].parent.is_some() || self.nodes[0].stage != 1 {
            return bad("the first node must be the stage-1 root");
        }
        let mut expected = 0usize;
        let mut width = 1usize;
        for &b in &self.branching {
            width = width.saturating_mul(b);
            expected = expected.saturating_add(width);
        }
        if expected != self.nodes.len() {
            return bad("node count does not match the branching");
        }
        for (i, n) in self.nodes.iter().enumerate().skip(1) {
            match n.parent {
                Some(p) if p < i && self.nodes[p].stage + 1 == n.stage => {}
                _ => return bad("parents must precede children one stage earlier"),
            }
            if !(n.probability >= 0.0) {
                return bad("probabilities must be nonnegative");
            }
        }
        for (i, ch) in self.children().iter().enumerate() {
            if ch.is_empty() {
                if self.nodes[i].stage != self.num_stages() {
                    return bad("only last-stage nodes may be leaves");
                }
                continue;
            }
            if ch.len() != self.branching[self.nodes[i].stage] {
                return bad("inconsistent branching");
            }
            let s: f64 = ch.iter().map(|&c| self.nodes[c].probability).sum();
            if (s - 1.0).abs() > 1e-12 {
                return bad("child probabilities must sum to one");
            }
        }
        Ok(())
    }

    /// Recovers the lattice, failing if the tree does not recombine.
    pub fn lattice(&self) -> Result<Lattice> {
        self.validate()?;
        let children = self.children();
        let mut stages = vec![vec![(self.nodes[0].realization.clone(), 1.0)]];
        let mut node = 0;
        while !children[node].is_empty() {
            stages.push(
                children[node].iter().map(|&c| (self.nodes[c].realization.clone(), self.nodes[c].probability)).collect(),
            );
            node = children[node][0];
        }
        for (i, ch) in children.iter().enumerate() {
            if ch.is_empty() {
                continue;
            }
            let want = &stages[self.nodes[i].stage];
            for (k, &c) in ch.iter().enumerate() {
                if self.nodes[c].realization != want[k].0 || self.nodes[c].probability != want[k].1 {
                    return Err(Error::InvalidArgument("tree is not stagewise independent".into()));
                }
            }
        }
        Ok(Lattice { stages })
    }
}

/// Samples an i.i.d. lattice with `branches` equally likely realizations
/// per stage and expands it into a tree.
pub fn build_tree(instance: &ProblemInstance, branches: usize, seed: u64) -> Result<ScenarioTree> {
    let mut r = rng::stream(seed, streams::TREE);
    let lattice = Lattice::sample(instance, branches, &mut r)?;
    ScenarioTree::from_lattice(&lattice)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetEquivSolution {
    pub objective: f64,
    pub first_stage: Vec<f64>,
    /// Stage decision of every tree node.
    pub node_solutions: Vec<Vec<f64>>,
    pub num_vars: usize,
    pub iterations: usize,
}

/// Number of variables the deterministic equivalent of `tree` would have.
pub fn detequiv_size(instance: &ProblemInstance, tree: &ScenarioTree) -> Result<usize> {
    let mut per_stage = Vec::with_capacity(tree.num_stages());
    for t in 1..=tree.num_stages() {
        let prev = if t == 1 { Vec::new() } else { vec![0.0; instance.state_dim()] };
        let xi = if t == 1 { Realization::empty() } else { instance.mean_realization(t) };
        per_stage.push(instance.stage_program(t, &prev, &xi)?.program.num_vars);
    }
    Ok(tree.nodes.iter().map(|n| per_stage[n.stage - 1]).sum())
}

/// Assembles and solves the probability-weighted program over all tree
/// nodes. Variables are numbered from the leaves up so the sparse
/// factorization stays local.
pub fn solve_detequiv(instance: &ProblemInstance, tree: &ScenarioTree, opts: &SolverOptions) -> Result<DetEquivSolution> {
    if tree.num_stages() != instance.stages {
        return Err(Error::DimensionMismatch { expected: instance.stages, got: tree.num_stages() });
    }
    tree.validate()?;
    let vars = detequiv_size(instance, tree)?;
    if vars > MAX_DETEQUIV_VARS {
        return Err(Error::TooLarge { vars, limit: MAX_DETEQUIV_VARS });
    }
    let prob = tree.path_probabilities();
    let zeros = vec![0.0; instance.state_dim()];
    let mut subs = Vec::with_capacity(tree.len());
    for n in &tree.nodes {
        let prev: &[f64] = if n.stage == 1 { &[] } else { &zeros };
        subs.push(instance.stage_program(n.stage, prev, &n.realization)?);
    }
    let mut offset = vec![0; tree.len()];
    let mut next = 0;
    for i in (0..tree.len()).rev() {
        offset[i] = next;
        next += subs[i].program.num_vars;
    }

    let mut de = ConvexProgram::new(vars);
    for i in (0..tree.len()).rev() {
        let sp = &subs[i];
        let p = &sp.program;
        let base = offset[i];
        let w = prob[i];
        for j in 0..p.num_vars {
            de.linear_cost[base + j] = w * p.linear_cost[j];
            de.nonneg[base + j] = p.nonneg[j];
        }
        de.constant += w * p.constant;
        for t in &p.convex_terms {
            de.convex_terms.push(ConvexTerm { var: base + t.var, kind: t.kind, weight: w * t.weight });
        }
        // rhs(x_prev) = rhs(0) + coupling · x_prev, so move the parent state
        // to the left-hand side
        let link = |row: &LinearRow| {
            let mut coeffs: Vec<(usize, f64)> = row.coeffs.iter().map(|&(j, a)| (base + j, a)).collect();
            if let Some(par) = tree.nodes[i].parent {
                for (k, &c) in row.coupling.iter().enumerate() {
                    if c != 0.0 {
                        coeffs.push((offset[par] + subs[par].state_vars[k], -c));
                    }
                }
            }
            LinearRow::new(coeffs, row.rhs)
        };
        for row in &p.eq_rows {
            de.eq_rows.push(link(row));
        }
        for r in &p.ineq_rows {
            de.ineq_rows.push(IneqRow { sense: r.sense, row: link(&r.row) });
        }
    }

    let res = solve_program(&de, opts)?;
    if res.status != SolveStatus::Optimal {
        return Err(Error::Solve { stage: 0, scenario: None, status: res.status });
    }
    let node_solutions: Vec<Vec<f64>> = (0..tree.len())
        .map(|i| res.x[offset[i]..offset[i] + subs[i].program.num_vars].to_vec())
        .collect();
    Ok(DetEquivSolution {
        objective: res.objective,
        first_stage: node_solutions[0].clone(),
        node_solutions,
        num_vars: vars,
        iterations: res.iterations,
    })
}

/// Solver options suited to large deterministic equivalents.
pub fn detequiv_options() -> SolverOptions {
    SolverOptions { backend: Backend::Auto, max_iters: 300, ..SolverOptions::default() }
}

#[cfg(test)]
mod tests;

//! Affine minorants and their pointwise maximum.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::dot;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CutOrigin {
    Trivial,
    Sddp,
    Generated,
}

/// `theta >= beta · x + alpha`
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cut {
    pub beta: Vec<f64>,
    pub alpha: f64,
    pub origin: CutOrigin,
}

impl Cut {
    pub fn new(beta: Vec<f64>, alpha: f64, origin: CutOrigin) -> Result<Self> {
        if !alpha.is_finite() || beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::NonFiniteCut);
        }
        Ok(Cut { beta, alpha, origin })
    }

    pub fn trivial(dim: usize, alpha: f64) -> Self {
        Cut { beta: vec![0.0; dim], alpha, origin: CutOrigin::Trivial }
    }

    #[inline]
    pub fn value(&self, x: &[f64]) -> f64 {
        dot(&self.beta, x) + self.alpha
    }
}

/// Piecewise-linear convex approximation `max_k beta_k · x + alpha_k` of
/// the value function of stage `stage`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutSet {
    stage: usize,
    dim: usize,
    cuts: Vec<Cut>,
    activation_counts: Vec<u64>,
    #[serde(default)]
    tracking: bool,
}

impl CutSet {
    /// A set seeded with the trivial cut.
    pub fn new(stage: usize, trivial: Cut) -> Self {
        CutSet {
            stage,
            dim: trivial.beta.len(),
            cuts: vec![trivial],
            activation_counts: vec![0],
            tracking: false,
        }
    }

    pub fn from_cuts(stage: usize, cuts: Vec<Cut>) -> Result<Self> {
        let first = cuts.first().ok_or_else(|| Error::InvalidArgument("empty cut set".into()))?;
        let dim = first.beta.len();
        for c in &cuts {
            if c.beta.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: c.beta.len() });
            }
            if !c.alpha.is_finite() || c.beta.iter().any(|b| !b.is_finite()) {
                return Err(Error::NonFiniteCut);
            }
        }
        let n = cuts.len();
        Ok(CutSet { stage, dim, cuts, activation_counts: vec![0; n], tracking: false })
    }

    pub fn stage(&self) -> usize {
        self.stage
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.cuts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cuts.is_empty()
    }

    pub fn cuts(&self) -> &[Cut] {
        &self.cuts
    }

    pub fn activation_counts(&self) -> &[u64] {
        &self.activation_counts
    }

    pub fn set_tracking(&mut self, on: bool) {
        self.tracking = on;
    }

    /// Index and value of the maximal cut at `x`; ties go to the lowest index.
    pub fn argmax(&self, x: &[f64]) -> Result<(usize, f64)> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        let mut best = (0, self.cuts[0].value(x));
        for (k, c) in self.cuts.iter().enumerate().skip(1) {
            let v = c.value(x);
            if v > best.1 {
                best = (k, v);
            }
        }
        Ok(best)
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        self.argmax(x).map(|(_, v)| v)
    }

    /// Evaluates and, when tracking is on, counts the activation.
    pub fn record(&mut self, x: &[f64]) -> Result<f64> {
        let (k, v) = self.argmax(x)?;
        if self.tracking {
            self.activation_counts[k] += 1;
        }
        Ok(v)
    }

    pub fn add_cut(&mut self, cut: Cut) -> Result<()> {
        if cut.beta.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: cut.beta.len() });
        }
        if !cut.alpha.is_finite() || cut.beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::NonFiniteCut);
        }
        self.cuts.push(cut);
        self.activation_counts.push(0);
        Ok(())
    }

    /// Level-1 dominance: keeps the cuts that are maximal at one or more
    /// trial points, in their original order.
    pub fn level1_select(&self, trial_points: &[Vec<f64>]) -> Result<CutSet> {
        if trial_points.is_empty() {
            return Err(Error::InvalidArgument("level-1 selection needs trial points".into()));
        }
        let mut counts = vec![0u64; self.cuts.len()];
        for x in trial_points {
            let (k, _) = self.argmax(x)?;
            counts[k] += 1;
        }
        let mut cuts = Vec::new();
        let mut kept_counts = Vec::new();
        for (c, &n) in self.cuts.iter().zip(&counts) {
            if n >= 1 {
                cuts.push(c.clone());
                kept_counts.push(n);
            }
        }
        Ok(CutSet {
            stage: self.stage,
            dim: self.dim,
            cuts,
            activation_counts: kept_counts,
            tracking: self.tracking,
        })
    }
}

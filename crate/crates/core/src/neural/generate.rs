//! Autoregressive decoding with argmax tokens.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::ModelCheckpoint;
use crate::cuts::{Cut, CutOrigin, CutSet};
use crate::dataset::{CutToken, Token};
use crate::error::{Error, Result};
use crate::model::ProblemInstance;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Generation {
    /// Trivial cut followed by every finite generated cut.
    pub cutset: CutSet,
    pub tokens: Vec<Token>,
    /// An end token was produced within the length limit.
    pub terminated: bool,
    pub finite: bool,
}

impl Generation {
    pub fn well_formed(&self) -> bool {
        self.terminated && self.finite
    }
}

/// Starts from the trivial cut as start element and appends predicted
/// cuts until one carries the end token or the sequence reaches
/// `max_len` elements. The element carrying the end token is itself a
/// cut, as in the training data.
pub fn generate_cuts(
    ckpt: &ModelCheckpoint,
    conditioning: &[f64],
    stage: usize,
    trivial: &Cut,
    max_len: usize,
) -> Result<Generation> {
    let limit = ckpt.model.config.max_seq_len;
    if max_len > limit || max_len < 2 {
        return Err(Error::InvalidArgument(alloc::format!("max_len must lie in 2..={limit}")));
    }
    let mut seq = vec![CutToken { beta: trivial.beta.clone(), alpha: trivial.alpha, token: Token::Start }];
    let (mut terminated, mut finite) = (false, true);
    while seq.len() < max_len {
        let pred = ckpt.forward(conditioning, &seq)?;
        let last = pred.last().expect("nonempty prefix");
        if !last.alpha.is_finite() || last.beta.iter().any(|b| !b.is_finite()) {
            finite = false;
            break;
        }
        let mut best = 0;
        for (j, &p) in last.tau.iter().enumerate() {
            if p > last.tau[best] {
                best = j;
            }
        }
        let token = Token::from_index(best).unwrap_or(Token::Middle);
        seq.push(CutToken { beta: last.beta.clone(), alpha: last.alpha, token });
        if token == Token::End {
            terminated = true;
            break;
        }
    }
    let mut cuts = vec![trivial.clone()];
    for c in &seq[1..] {
        cuts.push(Cut::new(c.beta.clone(), c.alpha, CutOrigin::Generated)?);
    }
    Ok(Generation {
        cutset: CutSet::from_cuts(stage, cuts)?,
        tokens: seq.iter().map(|c| c.token).collect(),
        terminated,
        finite,
    })
}

/// Generated cut sets for stages `2..=T` of `instance`, and whether every
/// generation was well formed.
pub fn policy_cutsets(ckpt: &ModelCheckpoint, instance: &ProblemInstance, max_len: usize) -> Result<(Vec<CutSet>, bool)> {
    let t_max = instance.stages;
    let trivial = instance.trivial_cut();
    let mut sets = Vec::with_capacity(t_max - 1);
    let mut ok = true;
    for t in 1..t_max {
        let mut cond = instance.lambda.values();
        cond.push(t as f64 / (t_max - 1) as f64);
        let g = generate_cuts(ckpt, &cond, t + 1, &trivial, max_len)?;
        ok &= g.well_formed();
        sets.push(g.cutset);
    }
    Ok((sets, ok))
}

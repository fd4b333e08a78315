//! Learned cut generation: a small decoder-only transformer trained with
//! teacher forcing to continue cut sequences, plus autoregressive decoding.
//!
//! Backward passes are written by hand per layer; [`gradient_check`]
//! compares them with central differences.

mod generate;
mod model;
pub mod tensor;
mod train;

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dataset::{CutSequenceExample, CutToken, Token};
use crate::error::{Error, Result};
use crate::math;

pub use generate::{generate_cuts, policy_cutsets, Generation};
pub use model::{ModelConfig, NamedTensor, Transformer, TOKEN_KINDS};
pub use tensor::Tensor;
pub use train::{gradient_check, train, AdamState, EpochLog, GradCheck, TrainConfig, TrainingMeta};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Per-family standardization of conditioning vectors and cut
/// coefficients, fitted on the training set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub cond_mean: Vec<f64>,
    pub cond_std: Vec<f64>,
    pub beta_mean: Vec<f64>,
    pub beta_std: Vec<f64>,
    pub alpha_mean: f64,
    pub alpha_std: f64,
}

fn spread(values: &[f64]) -> (f64, f64) {
    let (m, s) = math::mean_std(values);
    (m, if s > 1e-12 { s } else { 1.0 })
}

impl Normalizer {
    pub fn identity(input_dim: usize, state_dim: usize) -> Normalizer {
        Normalizer {
            cond_mean: vec![0.0; input_dim],
            cond_std: vec![1.0; input_dim],
            beta_mean: vec![0.0; state_dim],
            beta_std: vec![1.0; state_dim],
            alpha_mean: 0.0,
            alpha_std: 1.0,
        }
    }

    /// Cut statistics skip the start element: it is always the trivial cut
    /// and, for the financial family, far from every other cut.
    pub fn fit(examples: &[CutSequenceExample]) -> Result<Normalizer> {
        let first = examples.first().ok_or_else(|| Error::InvalidArgument("no examples".into()))?;
        let (m, d) = (first.conditioning().len(), first.sequence[0].beta.len());
        let conds: Vec<Vec<f64>> = examples.iter().map(CutSequenceExample::conditioning).collect();
        let cuts: Vec<&CutToken> =
            examples.iter().flat_map(|e| e.sequence.iter().skip(1)).collect();
        if cuts.is_empty() {
            return Err(Error::InvalidArgument("no cuts to fit".into()));
        }
        let mut n = Normalizer::identity(m, d);
        for i in 0..m {
            (n.cond_mean[i], n.cond_std[i]) = spread(&conds.iter().map(|c| c[i]).collect::<Vec<_>>());
        }
        for i in 0..d {
            (n.beta_mean[i], n.beta_std[i]) = spread(&cuts.iter().map(|c| c.beta[i]).collect::<Vec<_>>());
        }
        (n.alpha_mean, n.alpha_std) = spread(&cuts.iter().map(|c| c.alpha).collect::<Vec<_>>());
        Ok(n)
    }

    pub fn conditioning(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter().zip(self.cond_mean.iter().zip(&self.cond_std)).map(|(x, (m, s))| (x - m) / s).collect()
    }

    /// Standardized `(beta, alpha)` followed by the one-hot token.
    pub fn encode(&self, beta: &[f64], alpha: f64, token: Token) -> Vec<f64> {
        let mut v: Vec<f64> =
            beta.iter().zip(self.beta_mean.iter().zip(&self.beta_std)).map(|(b, (m, s))| (b - m) / s).collect();
        v.push((alpha - self.alpha_mean) / self.alpha_std);
        let mut one_hot = [0.0; TOKEN_KINDS];
        one_hot[token.index()] = 1.0;
        v.extend_from_slice(&one_hot);
        v
    }

    /// Standardized regression targets of one element.
    fn target(&self, c: &CutToken) -> Vec<f64> {
        let mut v = self.encode(&c.beta, c.alpha, c.token);
        v.truncate(c.beta.len() + 1);
        v
    }

    pub fn decode(&self, out: &[f64]) -> (Vec<f64>, f64) {
        let d = self.beta_mean.len();
        let beta = (0..d).map(|i| out[i] * self.beta_std[i] + self.beta_mean[i]).collect();
        (beta, out[d] * self.alpha_std + self.alpha_mean)
    }
}

/// One predicted element: cut coefficients and token probabilities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub beta: Vec<f64>,
    pub alpha: f64,
    pub tau: [f64; TOKEN_KINDS],
}

/// Mean over all non-pad target positions of
/// `|beta - beta_hat|^2 + (alpha - alpha_hat)^2 - log tau_hat[tau]`.
/// `pred[b][k]` is the prediction for `target[b][k]`.
pub fn loss(pred: &[Vec<Prediction>], target: &[Vec<CutToken>]) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::DimensionMismatch { expected: target.len(), got: pred.len() });
    }
    let (mut total, mut count) = (0.0, 0usize);
    for (ps, ts) in pred.iter().zip(target) {
        if ps.len() != ts.len() {
            return Err(Error::DimensionMismatch { expected: ts.len(), got: ps.len() });
        }
        for (p, t) in ps.iter().zip(ts) {
            if t.token == Token::Pad {
                continue;
            }
            if p.beta.len() != t.beta.len() {
                return Err(Error::DimensionMismatch { expected: t.beta.len(), got: p.beta.len() });
            }
            let reg: f64 = p.beta.iter().zip(&t.beta).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
                + (p.alpha - t.alpha) * (p.alpha - t.alpha);
            total += reg - math::ln(p.tau[t.token.index()].max(f64::MIN_POSITIVE));
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::InvalidArgument("no non-pad positions".into()));
    }
    Ok(total / count as f64)
}

/// Everything needed to resume training or generate cuts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelCheckpoint {
    pub version: u32,
    pub model: Transformer,
    pub adam: AdamState,
    pub norm: Normalizer,
    pub meta: TrainingMeta,
}

impl ModelCheckpoint {
    pub fn validate(&self) -> Result<()> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::InvalidArgument(alloc::format!("unsupported checkpoint version {}", self.version)));
        }
        self.model.validate()?;
        let shapes_ok = self.adam.m.len() == self.model.params.len()
            && self.adam.v.len() == self.model.params.len()
            && self
                .model
                .params
                .iter()
                .zip(self.adam.m.iter().zip(&self.adam.v))
                .all(|(p, (m, v))| m.len() == p.tensor.len() && v.len() == p.tensor.len());
        if !shapes_ok {
            return Err(Error::InvalidArgument("optimizer state does not match the parameters".into()));
        }
        Ok(())
    }

    /// Predictions for `prefix[1..]` and the element after the prefix,
    /// de-standardized: entry `k` predicts element `k + 1` of the sequence.
    pub fn forward(&self, conditioning: &[f64], prefix: &[CutToken]) -> Result<Vec<Prediction>> {
        let norm = &self.norm;
        let cond = norm.conditioning(conditioning);
        let tokens: Vec<f64> = prefix.iter().flat_map(|c| norm.encode(&c.beta, c.alpha, c.token)).collect();
        let (y, _) = self.model.forward::<crate::rng::StreamRng>(&cond, &tokens, None)?;
        let od = self.model.config.out_dim();
        let d = self.model.config.state_dim;
        Ok((1..=prefix.len())
            .map(|r| {
                let row = &y[r * od..(r + 1) * od];
                let (beta, alpha) = norm.decode(row);
                let mut tau = [0.0; TOKEN_KINDS];
                tau.copy_from_slice(&row[d + 1..]);
                tensor::softmax(&mut tau);
                Prediction { beta, alpha, tau }
            })
            .collect())
    }
}

//! Teacher-forced training with Adam and the finite-difference check.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use super::model::{NamedTensor, Transformer};
use super::tensor::softmax;
use super::{ModelCheckpoint, ModelConfig, Normalizer, CHECKPOINT_VERSION, TOKEN_KINDS};
use crate::dataset::CutSequenceExample;
use crate::error::{Error, Result};
use crate::math;
use crate::model::Family;
use crate::rng::{self, streams, StreamRng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Step size `epsilon`.
    pub lr: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub delta: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { epochs: 50, batch_size: 16, lr: 1e-3, gamma1: 0.9, gamma2: 0.999, delta: 1e-8, seed: 0 }
    }
}

/// Adam moments with the bias corrections `m / (1 - gamma1)` and
/// `v / (1 - gamma2)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub lr: f64,
    pub delta: f64,
}

impl AdamState {
    pub fn new(model: &Transformer, cfg: &TrainConfig) -> AdamState {
        let zeros: Vec<Vec<f64>> = model.params.iter().map(|p| vec![0.0; p.tensor.len()]).collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            step: 0,
            gamma1: cfg.gamma1,
            gamma2: cfg.gamma2,
            lr: cfg.lr,
            delta: cfg.delta,
        }
    }

    pub fn update(&mut self, params: &mut [NamedTensor], grads: &[Vec<f64>]) {
        let (g1, g2) = (self.gamma1, self.gamma2);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            for j in 0..g.len() {
                m[j] = g1 * m[j] + (1.0 - g1) * g[j];
                v[j] = g2 * v[j] + (1.0 - g2) * g[j] * g[j];
                let mh = m[j] / (1.0 - g1);
                let vh = v[j] / (1.0 - g2);
                p.tensor.data[j] -= self.lr * mh / (math::sqrt(vh) + self.delta);
            }
        }
        self.step += 1;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub family: Option<Family>,
    pub stages: Option<usize>,
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// Validation loss of the untrained model.
    pub initial_val_loss: Option<f64>,
    /// Epoch (1-based) whose parameters the checkpoint holds.
    pub best_epoch: usize,
}

/// Summed loss over the `K - 1` predicted elements of one example in the
/// standardized space. With `grads`, adds `weight` times its gradient.
fn example_loss(
    model: &Transformer,
    norm: &Normalizer,
    ex: &CutSequenceExample,
    dropout: Option<&mut StreamRng>,
    grads: Option<(&mut [Vec<f64>], f64)>,
) -> Result<(f64, usize)> {
    let k = ex.sequence.len();
    if k < 2 {
        return Err(Error::InvalidArgument("sequence shorter than two elements".into()));
    }
    let cond = norm.conditioning(&ex.conditioning());
    let tokens: Vec<f64> =
        ex.sequence[..k - 1].iter().flat_map(|c| norm.encode(&c.beta, c.alpha, c.token)).collect();
    let (y, cache) = model.forward(&cond, &tokens, dropout)?;
    let od = model.config.out_dim();
    let d = model.config.state_dim;
    let mut dy = vec![0.0; y.len()];
    let mut total = 0.0;
    for p in 1..k {
        let target = &ex.sequence[p];
        let t = norm.target(target);
        let row = &y[p * od..(p + 1) * od];
        let drow = &mut dy[p * od..(p + 1) * od];
        for i in 0..=d {
            let e = row[i] - t[i];
            total += e * e;
            drow[i] = 2.0 * e;
        }
        let mut prob = [0.0; TOKEN_KINDS];
        prob.copy_from_slice(&row[d + 1..]);
        softmax(&mut prob);
        let c = target.token.index();
        total -= math::ln(prob[c].max(f64::MIN_POSITIVE));
        for j in 0..TOKEN_KINDS {
            drow[d + 1 + j] = prob[j] - if j == c { 1.0 } else { 0.0 };
        }
    }
    if !total.is_finite() {
        return Err(Error::NonFinite("training loss"));
    }
    if let Some((g, w)) = grads {
        dy.iter_mut().for_each(|v| *v *= w);
        model.backward(&cache, &dy, g);
    }
    Ok((total, k - 1))
}

/// Mean standardized loss over all predicted positions of `examples`.
pub(crate) fn mean_loss(model: &Transformer, norm: &Normalizer, examples: &[CutSequenceExample]) -> Result<f64> {
    let (mut total, mut count) = (0.0, 0);
    for ex in examples {
        let (l, c) = example_loss(model, norm, ex, None, None)?;
        total += l;
        count += c;
    }
    if count == 0 {
        return Err(Error::InvalidArgument("no examples".into()));
    }
    Ok(total / count as f64)
}

fn check_examples(examples: &[CutSequenceExample], family: Family, stages: usize, max_len: usize) -> Result<()> {
    for ex in examples {
        ex.validate()?;
        if ex.family != family || ex.stages != stages {
            return Err(Error::InvalidArgument("examples mix families or horizons".into()));
        }
        if ex.len() > max_len {
            return Err(Error::InvalidArgument(alloc::format!(
                "sequence of {} exceeds max_seq_len {max_len}",
                ex.len()
            )));
        }
    }
    Ok(())
}

/// Trains on `train_set` with mini-batch Adam and teacher forcing, and
/// returns the parameters with the lowest validation loss (the last ones
/// when `val_set` is empty). `observe` sees every epoch and the
/// checkpoint as of that epoch.
pub fn train(
    train_set: &[CutSequenceExample],
    val_set: &[CutSequenceExample],
    config: ModelConfig,
    cfg: &TrainConfig,
    observe: &mut dyn FnMut(&EpochLog, &ModelCheckpoint),
) -> Result<ModelCheckpoint> {
    let first = train_set.first().ok_or_else(|| Error::InvalidArgument("empty training set".into()))?;
    if cfg.batch_size == 0 || !(0.0..1.0).contains(&cfg.gamma1) || !(0.0..1.0).contains(&cfg.gamma2) {
        return Err(Error::InvalidArgument("invalid training config".into()));
    }
    config.validate()?;
    check_examples(train_set, first.family, first.stages, config.max_seq_len)?;
    check_examples(val_set, first.family, first.stages, config.max_seq_len)?;

    let norm = Normalizer::fit(train_set)?;
    let mut model = Transformer::init(config, &mut rng::stream(cfg.seed, streams::INIT))?;
    let mut adam = AdamState::new(&model, cfg);
    let mut rng = rng::stream(cfg.seed, streams::TRAIN);
    let mut meta = TrainingMeta {
        family: Some(first.family),
        stages: Some(first.stages),
        seed: cfg.seed,
        batch_size: cfg.batch_size,
        ..Default::default()
    };
    if !val_set.is_empty() {
        meta.initial_val_loss = Some(mean_loss(&model, &norm, val_set)?);
    }
    let snapshot = |model: &Transformer, adam: &AdamState, meta: &TrainingMeta| ModelCheckpoint {
        version: CHECKPOINT_VERSION,
        model: model.clone(),
        adam: adam.clone(),
        norm: norm.clone(),
        meta: meta.clone(),
    };
    let mut best: Option<(f64, ModelCheckpoint)> = None;
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let use_dropout = model.config.dropout > 0.0;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let (mut epoch_loss, mut epoch_count) = (0.0, 0usize);
        for batch in order.chunks(cfg.batch_size) {
            let positions: usize = batch.iter().map(|&i| train_set[i].len() - 1).sum();
            let w = 1.0 / positions as f64;
            let mut grads = model.zero_grads();
            for &i in batch {
                let drop = if use_dropout { Some(&mut rng) } else { None };
                let (l, c) = example_loss(&model, &norm, &train_set[i], drop, Some((&mut grads, w)))?;
                epoch_loss += l;
                epoch_count += c;
            }
            adam.update(&mut model.params, &grads);
        }
        let train_loss = epoch_loss / epoch_count as f64;
        let val_loss = if val_set.is_empty() { None } else { Some(mean_loss(&model, &norm, val_set)?) };
        meta.epochs = epoch;
        meta.train_loss.push(train_loss);
        if let Some(v) = val_loss {
            meta.val_loss.push(v);
        }
        let score = val_loss.unwrap_or(f64::NEG_INFINITY);
        let ck = snapshot(&model, &adam, &meta);
        observe(&EpochLog { epoch, train_loss, val_loss }, &ck);
        let better = best.as_ref().map_or(true, |(s, _)| score < *s || val_loss.is_none());
        if better {
            let mut ck = ck;
            ck.meta.best_epoch = epoch;
            best = Some((score, ck));
        }
    }
    let mut out = match best {
        Some((_, ck)) => ck,
        None => snapshot(&model, &adam, &meta),
    };
    let best_epoch = out.meta.best_epoch;
    out.meta = TrainingMeta { best_epoch, ..meta };
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheck {
    pub param: String,
    pub coords: usize,
    /// Largest `|analytic - numeric| / max(|analytic|, |numeric|, 1e-6)`.
    pub max_rel_err: f64,
}

/// Compares backpropagated gradients of the mean loss over `examples`
/// with central differences of step `h` at `coords` random coordinates of
/// every parameter tensor.
pub fn gradient_check(
    model: &Transformer,
    norm: &Normalizer,
    examples: &[CutSequenceExample],
    coords: usize,
    h: f64,
    seed: u64,
) -> Result<Vec<GradCheck>> {
    let positions: usize = examples.iter().map(|e| e.len() - 1).sum();
    let w = 1.0 / positions as f64;
    let mut grads = model.zero_grads();
    for ex in examples {
        example_loss(model, norm, ex, None, Some((&mut grads, w)))?;
    }
    let mut rng = rng::stream(seed, streams::PROBE);
    let mut probe = model.clone();
    let mut out = Vec::with_capacity(model.params.len());
    for (pi, p) in model.params.iter().enumerate() {
        let n = p.tensor.len();
        let picks = index::sample(&mut rng, n, coords.min(n)).into_vec();
        let mut worst: f64 = 0.0;
        for &j in &picks {
            let x0 = p.tensor.data[j];
            probe.params[pi].tensor.data[j] = x0 + h;
            let up = mean_loss(&probe, norm, examples)?;
            probe.params[pi].tensor.data[j] = x0 - h;
            let down = mean_loss(&probe, norm, examples)?;
            probe.params[pi].tensor.data[j] = x0;
            let numeric = (up - down) / (2.0 * h);
            let analytic = grads[pi][j];
            let scale = analytic.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max((analytic - numeric).abs() / scale);
        }
        out.push(GradCheck { param: p.name.clone(), coords: picks.len(), max_rel_err: worst });
    }
    Ok(out)
}

//! Decoder-only transformer over cut sequences.
//!
//! Position 0 holds the embedded conditioning vector, positions `1..` the
//! linearly embedded cut elements plus sinusoidal positions. Blocks are
//! pre-norm with causal multi-head attention and a GELU feed-forward; a
//! final norm and a linear head give `state_dim + 1` regression outputs and
//! four token logits per position.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::tensor::{linear, linear_back, softmax, Tensor};
use crate::error::{Error, Result};
use crate::math;

pub const TOKEN_KINDS: usize = 4;
const LN_EPS: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub d_ff: usize,
    /// Longest cut sequence, trivial cut included.
    pub max_seq_len: usize,
    /// Length of the conditioning vector, `M + 1`.
    pub input_dim: usize,
    pub state_dim: usize,
    pub dropout: f64,
}

impl ModelConfig {
    pub fn new(input_dim: usize, state_dim: usize, max_seq_len: usize) -> ModelConfig {
        ModelConfig { d_model: 64, n_heads: 4, n_layers: 2, d_ff: 128, max_seq_len, input_dim, state_dim, dropout: 0.0 }
    }

    /// Width of one embedded cut element and of one output row.
    pub fn token_dim(&self) -> usize {
        self.state_dim + 1 + TOKEN_KINDS
    }

    pub fn out_dim(&self) -> usize {
        self.token_dim()
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.d_model > 0
            && self.n_heads > 0
            && self.d_model % self.n_heads == 0
            && self.d_ff > 0
            && self.max_seq_len >= 2
            && self.input_dim > 0
            && self.state_dim > 0
            && (0.0..1.0).contains(&self.dropout);
        if !ok {
            return Err(Error::InvalidArgument(format!("invalid model config {self:?}")));
        }
        Ok(())
    }

    /// Names and shapes of every parameter tensor, in storage order.
    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let (d, f) = (self.d_model, self.d_ff);
        let mut v = vec![
            ("cond.w".into(), vec![self.input_dim, d]),
            ("cond.b".into(), vec![d]),
            ("embed.w".into(), vec![self.token_dim(), d]),
            ("embed.b".into(), vec![d]),
        ];
        for l in 0..self.n_layers {
            for (n, s) in [
                ("ln1.g", vec![d]),
                ("ln1.b", vec![d]),
                ("attn.wq", vec![d, d]),
                ("attn.bq", vec![d]),
                ("attn.wk", vec![d, d]),
                ("attn.wv", vec![d, d]),
                ("attn.bv", vec![d]),
                ("attn.wo", vec![d, d]),
                ("attn.bo", vec![d]),
                ("ln2.g", vec![d]),
                ("ln2.b", vec![d]),
                ("ff.w1", vec![d, f]),
                ("ff.b1", vec![f]),
                ("ff.w2", vec![f, d]),
                ("ff.b2", vec![d]),
            ] {
                v.push((format!("block{l}.{n}"), s));
            }
        }
        v.push(("lnf.g".into(), vec![d]));
        v.push(("lnf.b".into(), vec![d]));
        v.push(("head.w".into(), vec![d, self.out_dim()]));
        v.push(("head.b".into(), vec![self.out_dim()]));
        v
    }
}

// storage offsets
const COND_W: usize = 0;
const COND_B: usize = 1;
const EMB_W: usize = 2;
const EMB_B: usize = 3;
const BLOCK0: usize = 4;
const PER_BLOCK: usize = 15;
const LN1_G: usize = 0;
const LN1_B: usize = 1;
const WQ: usize = 2;
// keys carry no bias: it would shift a whole score row and cancel in the softmax
const WK: usize = 4;
const WV: usize = 5;
const WO: usize = 7;
const LN2_G: usize = 9;
const LN2_B: usize = 10;
const W1: usize = 11;
const W2: usize = 13;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub tensor: Tensor,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transformer {
    pub config: ModelConfig,
    pub params: Vec<NamedTensor>,
}

struct LnCache {
    xhat: Vec<f64>,
    inv: Vec<f64>,
}

struct BlockCache {
    ln1: LnCache,
    a: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    /// `heads x n x n`, zero above the diagonal.
    p: Vec<f64>,
    o: Vec<f64>,
    drop1: Option<Vec<f64>>,
    ln2: LnCache,
    b: Vec<f64>,
    u: Vec<f64>,
    g: Vec<f64>,
    drop2: Option<Vec<f64>>,
}

pub(crate) struct Cache {
    n: usize,
    cond: Vec<f64>,
    tokens: Vec<f64>,
    blocks: Vec<BlockCache>,
    lnf: LnCache,
    hf: Vec<f64>,
}

#[cfg(test)]
impl Cache {
    /// Attention weights of `layer`, `heads x n x n`.
    pub(crate) fn attention(&self, layer: usize) -> &[f64] {
        &self.blocks[layer].p
    }
}

/// Sinusoidal encoding of decoder position `pos` added into `row`.
fn add_position(row: &mut [f64], pos: usize) {
    let d = row.len();
    for i in 0..d {
        let e = (2 * (i / 2)) as f64 / d as f64;
        let angle = pos as f64 / math::powf(10_000.0, e);
        row[i] += if i % 2 == 0 { math::sin(angle) } else { math::cos(angle) };
    }
}

fn ln_forward(x: &[f64], n: usize, g: &Tensor, b: &Tensor) -> (Vec<f64>, LnCache) {
    let d = g.len();
    let mut y = vec![0.0; n * d];
    let mut xhat = vec![0.0; n * d];
    let mut inv = vec![0.0; n];
    for r in 0..n {
        let xr = &x[r * d..(r + 1) * d];
        let mean = xr.iter().sum::<f64>() / d as f64;
        let var = xr.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let s = 1.0 / math::sqrt(var + LN_EPS);
        inv[r] = s;
        for i in 0..d {
            let h = (xr[i] - mean) * s;
            xhat[r * d + i] = h;
            y[r * d + i] = g.data[i] * h + b.data[i];
        }
    }
    (y, LnCache { xhat, inv })
}

fn ln_backward(c: &LnCache, n: usize, g: &Tensor, dy: &[f64], dg: &mut [f64], db: &mut [f64]) -> Vec<f64> {
    let d = g.len();
    let mut dx = vec![0.0; n * d];
    let mut dh = vec![0.0; d];
    for r in 0..n {
        let xh = &c.xhat[r * d..(r + 1) * d];
        let dyr = &dy[r * d..(r + 1) * d];
        let (mut m1, mut m2) = (0.0, 0.0);
        for i in 0..d {
            dg[i] += dyr[i] * xh[i];
            db[i] += dyr[i];
            dh[i] = dyr[i] * g.data[i];
            m1 += dh[i];
            m2 += dh[i] * xh[i];
        }
        m1 /= d as f64;
        m2 /= d as f64;
        for i in 0..d {
            dx[r * d + i] = c.inv[r] * (dh[i] - m1 - xh[i] * m2);
        }
    }
    dx
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_K: f64 = 0.044_715;

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + math::tanh(GELU_C * (x + GELU_K * x * x * x)))
}

fn gelu_grad(x: f64) -> f64 {
    let t = math::tanh(GELU_C * (x + GELU_K * x * x * x));
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_K * x * x)
}

fn dropout_mask<R: Rng + ?Sized>(len: usize, rate: f64, rng: &mut R) -> Vec<f64> {
    let keep = 1.0 / (1.0 - rate);
    (0..len).map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep }).collect()
}

impl Transformer {
    /// Randomly initialized model: weights `N(0, 1/fan_in)`, residual
    /// output projections further scaled by `1/sqrt(2 n_layers)`, norms at
    /// identity and biases at zero.
    pub fn init<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Transformer> {
        config.validate()?;
        let depth = math::sqrt(2.0 * config.n_layers as f64);
        let params = config
            .param_shapes()
            .into_iter()
            .map(|(name, shape)| {
                let last = name.rsplit('.').next().unwrap_or("");
                let tensor = if last == "g" {
                    Tensor::filled(&shape, 1.0)
                } else if shape.len() == 2 {
                    let mut std = 1.0 / math::sqrt(shape[0] as f64);
                    if last == "wo" || last == "w2" {
                        std /= depth;
                    }
                    let dist = Normal::new(0.0, std).expect("positive std");
                    let data = (0..shape[0] * shape[1]).map(|_| dist.sample(rng)).collect();
                    Tensor { shape, data }
                } else {
                    Tensor::zeros(&shape)
                };
                NamedTensor { name, tensor }
            })
            .collect();
        Ok(Transformer { config, params })
    }

    /// Same shapes with every parameter zero.
    pub fn zeros(config: ModelConfig) -> Result<Transformer> {
        config.validate()?;
        let params = config
            .param_shapes()
            .into_iter()
            .map(|(name, shape)| NamedTensor { name, tensor: Tensor::zeros(&shape) })
            .collect();
        Ok(Transformer { config, params })
    }

    /// Checks names and shapes against the config.
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let shapes = self.config.param_shapes();
        if shapes.len() != self.params.len() {
            return Err(Error::DimensionMismatch { expected: shapes.len(), got: self.params.len() });
        }
        for ((name, shape), p) in shapes.iter().zip(&self.params) {
            if *name != p.name || *shape != p.tensor.shape || p.tensor.len() != shape.iter().product::<usize>() {
                return Err(Error::InvalidArgument(format!("parameter {} does not match {name} {shape:?}", p.name)));
            }
        }
        Ok(())
    }

    pub fn num_parameters(&self) -> usize {
        self.params.iter().map(|p| p.tensor.len()).sum()
    }

    fn p(&self, i: usize) -> &Tensor {
        &self.params[i].tensor
    }

    fn tail(&self) -> usize {
        BLOCK0 + PER_BLOCK * self.config.n_layers
    }

    /// Runs the network on `[cond, tokens...]`; `tokens` holds one embedded
    /// element per row (`token_dim` wide). Returns the `n x out_dim` output
    /// rows and the cache for [`Transformer::backward`]. A dropout generator
    /// turns dropout on.
    pub(crate) fn forward<R: Rng + ?Sized>(
        &self,
        cond: &[f64],
        tokens: &[f64],
        mut dropout: Option<&mut R>,
    ) -> Result<(Vec<f64>, Cache)> {
        let c = &self.config;
        let (d, td) = (c.d_model, c.token_dim());
        if cond.len() != c.input_dim {
            return Err(Error::DimensionMismatch { expected: c.input_dim, got: cond.len() });
        }
        if tokens.len() % td != 0 {
            return Err(Error::DimensionMismatch { expected: td, got: tokens.len() % td });
        }
        let m = tokens.len() / td;
        if m > c.max_seq_len {
            return Err(Error::InvalidArgument(format!("sequence of {m} exceeds max_seq_len {}", c.max_seq_len)));
        }
        let n = m + 1;
        let mut h = vec![0.0; n * d];
        h[..d].copy_from_slice(&linear(cond, 1, self.p(COND_W), self.p(COND_B)));
        let emb = linear(tokens, m, self.p(EMB_W), self.p(EMB_B));
        for r in 0..m {
            let row = &mut h[(r + 1) * d..(r + 2) * d];
            row.copy_from_slice(&emb[r * d..(r + 1) * d]);
            add_position(row, r);
        }

        let rate = if dropout.is_some() { c.dropout } else { 0.0 };
        let heads = c.n_heads;
        let dh = d / heads;
        let scale = 1.0 / math::sqrt(dh as f64);
        let no_bias = Tensor::zeros(&[d]);
        let mut blocks = Vec::with_capacity(c.n_layers);
        for l in 0..c.n_layers {
            let base = BLOCK0 + PER_BLOCK * l;
            let bp = |k: usize| self.p(base + k);
            let (a, ln1) = ln_forward(&h, n, bp(LN1_G), bp(LN1_B));
            let q = linear(&a, n, bp(WQ), bp(WQ + 1));
            let k = linear(&a, n, bp(WK), &no_bias);
            let v = linear(&a, n, bp(WV), bp(WV + 1));
            let mut p = vec![0.0; heads * n * n];
            let mut o = vec![0.0; n * d];
            for hd in 0..heads {
                let off = hd * dh;
                for i in 0..n {
                    let row = &mut p[(hd * n + i) * n..(hd * n + i) * n + i + 1];
                    for (j, s) in row.iter_mut().enumerate() {
                        *s = scale * math::dot(&q[i * d + off..i * d + off + dh], &k[j * d + off..j * d + off + dh]);
                    }
                    softmax(row);
                    for j in 0..=i {
                        let w = row[j];
                        for e in 0..dh {
                            o[i * d + off + e] += w * v[j * d + off + e];
                        }
                    }
                }
            }
            let mut att = linear(&o, n, bp(WO), bp(WO + 1));
            let drop1 = match dropout.as_deref_mut() {
                Some(r) if rate > 0.0 => Some(dropout_mask(att.len(), rate, r)),
                _ => None,
            };
            if let Some(mk) = &drop1 {
                att.iter_mut().zip(mk).for_each(|(x, m)| *x *= m);
            }
            h.iter_mut().zip(&att).for_each(|(x, y)| *x += y);

            let (b, ln2) = ln_forward(&h, n, bp(LN2_G), bp(LN2_B));
            let u = linear(&b, n, bp(W1), bp(W1 + 1));
            let g: Vec<f64> = u.iter().map(|&x| gelu(x)).collect();
            let mut f = linear(&g, n, bp(W2), bp(W2 + 1));
            let drop2 = match dropout.as_deref_mut() {
                Some(r) if rate > 0.0 => Some(dropout_mask(f.len(), rate, r)),
                _ => None,
            };
            if let Some(mk) = &drop2 {
                f.iter_mut().zip(mk).for_each(|(x, m)| *x *= m);
            }
            h.iter_mut().zip(&f).for_each(|(x, y)| *x += y);
            blocks.push(BlockCache { ln1, a, q, k, v, p, o, drop1, ln2, b, u, g, drop2 });
        }
        let t = self.tail();
        let (hf, lnf) = ln_forward(&h, n, self.p(t), self.p(t + 1));
        let y = linear(&hf, n, self.p(t + 2), self.p(t + 3));
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("transformer output"));
        }
        Ok((y, Cache { n, cond: cond.to_vec(), tokens: tokens.to_vec(), blocks, lnf, hf }))
    }

    /// Gradients of a scalar loss with respect to every parameter, given
    /// its gradient `dy` with respect to the outputs.
    pub(crate) fn backward(&self, cache: &Cache, dy: &[f64], grads: &mut [Vec<f64>]) {
        let c = &self.config;
        let n = cache.n;
        let d = c.d_model;
        let heads = c.n_heads;
        let dh = d / heads;
        let scale = 1.0 / math::sqrt(dh as f64);
        let t = self.tail();

        let (gw, rest) = grads.split_at_mut(t + 3);
        let dhf = linear_back(&cache.hf, n, self.p(t + 2), dy, &mut gw[t + 2], &mut rest[0]);
        let (g0, g1) = gw.split_at_mut(t + 1);
        let mut dh_ = ln_backward(&cache.lnf, n, self.p(t), &dhf, &mut g0[t], &mut g1[0]);

        for l in (0..c.n_layers).rev() {
            let base = BLOCK0 + PER_BLOCK * l;
            let bc = &cache.blocks[l];
            let bp = |k: usize| self.p(base + k);
            let gb = &mut grads[base..base + PER_BLOCK];

            // feed-forward branch
            let mut df = dh_.clone();
            if let Some(mk) = &bc.drop2 {
                df.iter_mut().zip(mk).for_each(|(x, m)| *x *= m);
            }
            let (lo, hi) = gb.split_at_mut(W2 + 1);
            let mut du = linear_back(&bc.g, n, bp(W2), &df, &mut lo[W2], &mut hi[0]);
            du.iter_mut().zip(&bc.u).for_each(|(x, &u)| *x *= gelu_grad(u));
            let (lo, hi) = gb.split_at_mut(W1 + 1);
            let dbb = linear_back(&bc.b, n, bp(W1), &du, &mut lo[W1], &mut hi[0]);
            let (lo, hi) = gb.split_at_mut(LN2_B);
            let dx = ln_backward(&bc.ln2, n, bp(LN2_G), &dbb, &mut lo[LN2_G], &mut hi[0]);
            dh_.iter_mut().zip(&dx).for_each(|(x, y)| *x += y);

            // attention branch
            let mut da = dh_.clone();
            if let Some(mk) = &bc.drop1 {
                da.iter_mut().zip(mk).for_each(|(x, m)| *x *= m);
            }
            let (lo, hi) = gb.split_at_mut(WO + 1);
            let d_o = linear_back(&bc.o, n, bp(WO), &da, &mut lo[WO], &mut hi[0]);
            let mut dq = vec![0.0; n * d];
            let mut dk = vec![0.0; n * d];
            let mut dv = vec![0.0; n * d];
            let mut dp = vec![0.0; n];
            for hd in 0..heads {
                let off = hd * dh;
                for i in 0..n {
                    let prow = &bc.p[(hd * n + i) * n..(hd * n + i) * n + n];
                    let doi = &d_o[i * d + off..i * d + off + dh];
                    let mut s = 0.0;
                    for j in 0..=i {
                        dp[j] = math::dot(doi, &bc.v[j * d + off..j * d + off + dh]);
                        s += prow[j] * dp[j];
                        for e in 0..dh {
                            dv[j * d + off + e] += prow[j] * doi[e];
                        }
                    }
                    for j in 0..=i {
                        let ds = prow[j] * (dp[j] - s) * scale;
                        for e in 0..dh {
                            dq[i * d + off + e] += ds * bc.k[j * d + off + e];
                            dk[j * d + off + e] += ds * bc.q[i * d + off + e];
                        }
                    }
                }
            }
            let mut dav = vec![0.0; n * d];
            for (w, dz) in [(WQ, &dq), (WV, &dv)] {
                let (lo, hi) = gb.split_at_mut(w + 1);
                let part = linear_back(&bc.a, n, bp(w), dz, &mut lo[w], &mut hi[0]);
                dav.iter_mut().zip(&part).for_each(|(x, y)| *x += y);
            }
            let mut unused = vec![0.0; d];
            let part = linear_back(&bc.a, n, bp(WK), &dk, &mut gb[WK], &mut unused);
            dav.iter_mut().zip(&part).for_each(|(x, y)| *x += y);
            let (lo, hi) = gb.split_at_mut(LN1_B);
            let dx = ln_backward(&bc.ln1, n, bp(LN1_G), &dav, &mut lo[LN1_G], &mut hi[0]);
            dh_.iter_mut().zip(&dx).for_each(|(x, y)| *x += y);
        }

        // embeddings; positional terms carry no parameters
        let td = c.token_dim();
        let m = n - 1;
        let (lo, hi) = grads.split_at_mut(COND_B);
        linear_back(&cache.cond, 1, self.p(COND_W), &dh_[..d], &mut lo[COND_W], &mut hi[0]);
        if m > 0 {
            let (lo, hi) = grads.split_at_mut(EMB_B);
            linear_back(&cache.tokens[..m * td], m, self.p(EMB_W), &dh_[d..], &mut lo[EMB_W], &mut hi[0]);
        }
    }

    /// Zeroed gradient buffers matching the parameters.
    pub(crate) fn zero_grads(&self) -> Vec<Vec<f64>> {
        self.params.iter().map(|p| vec![0.0; p.tensor.len()]).collect()
    }
}

//! Cut-sequence training data.
//!
//! One example per (instance, stage `t < T`): the distribution parameters,
//! the relative stage position and the ordered cuts SDDP produced for the
//! value function of stage `t + 1`.

use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::cuts::{Cut, CutOrigin, CutSet};
use crate::error::{Error, Result};
use crate::model::{DistributionParams, Family, ProblemInstance};
use crate::rng::{self, streams};
use crate::sddp::{run_sddp, SddpConfig, SddpStatus};

pub const DATASET_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Token {
    Pad,
    Start,
    Middle,
    End,
}

impl Token {
    pub const ALL: [Token; 4] = [Token::Pad, Token::Start, Token::Middle, Token::End];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Token> {
        Token::ALL.get(i).copied()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutToken {
    pub beta: Vec<f64>,
    pub alpha: f64,
    pub token: Token,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutSequenceExample {
    pub family: Family,
    pub stages: usize,
    /// Stage `t` whose cuts approximate the value function of `t + 1`.
    pub stage: usize,
    pub lambda: DistributionParams,
    pub t_rel: f64,
    pub sequence: Vec<CutToken>,
    pub source_seed: u64,
}

impl CutSequenceExample {
    pub fn len(&self) -> usize {
        self.sequence.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequence.is_empty()
    }

    /// Model conditioning vector `(lambda, t_rel)`.
    pub fn conditioning(&self) -> Vec<f64> {
        let mut v = self.lambda.values();
        v.push(self.t_rel);
        v
    }

    /// Checks the token pattern start, middle..., end.
    pub fn validate(&self) -> Result<()> {
        let k = self.sequence.len();
        let ok = k >= 2
            && self.sequence[0].token == Token::Start
            && self.sequence[k - 1].token == Token::End
            && self.sequence[1..k - 1].iter().all(|c| c.token == Token::Middle)
            && self.t_rel > 0.0
            && self.t_rel <= 1.0;
        if !ok {
            return Err(Error::InvalidArgument("malformed cut sequence".into()));
        }
        Ok(())
    }

    pub fn instance(&self) -> Result<ProblemInstance> {
        Ok(ProblemInstance::new(self.family, self.stages, &self.lambda.values())?.with_seed(self.source_seed))
    }

    /// The sequence as a cut set for the value function of `stage + 1`.
    pub fn to_cutset(&self) -> Result<CutSet> {
        let cuts = self
            .sequence
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let origin = if k == 0 { CutOrigin::Trivial } else { CutOrigin::Sddp };
                Cut::new(c.beta.clone(), c.alpha, origin)
            })
            .collect::<Result<Vec<_>>>()?;
        CutSet::from_cuts(self.stage + 1, cuts)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub version: u32,
    pub family: Family,
    pub stages: usize,
    pub seed: u64,
    pub instances: usize,
    pub sddp: SddpConfig,
    /// Length threshold applied by [`filter_outliers`], if any.
    pub outlier_threshold: Option<usize>,
    /// Instances whose SDDP run failed, with the reason.
    pub skipped: Vec<(u64, String)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub examples: Vec<CutSequenceExample>,
}

/// Seed of instance `index` under the master `seed`.
pub fn instance_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 step on the pair
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Instance `index` of a generation run; depends only on its arguments.
pub fn sample_indexed_instance(family: Family, stages: usize, seed: u64, index: u64) -> Result<ProblemInstance> {
    let s = instance_seed(seed, index);
    let mut r = rng::stream(s, streams::INSTANCE);
    Ok(ProblemInstance::sample(family, stages, &mut r)?.with_seed(s))
}

/// Runs SDDP on one instance and returns its per-stage examples. The SDDP
/// seed is the instance seed.
pub fn generate_instance_examples(instance: &ProblemInstance, config: &SddpConfig) -> Result<Vec<CutSequenceExample>> {
    let cfg = SddpConfig { record_cuts: true, seed: instance.seed, ..config.clone() };
    let out = run_sddp(instance, &cfg)?;
    if out.status != SddpStatus::Converged {
        return Err(Error::InvalidArgument(alloc::format!(
            "sddp did not converge in {} iterations",
            out.state.iteration
        )));
    }
    Ok(out.sequences)
}

/// Single-threaded dataset generation; the CLI runs the same per-instance
/// function across workers and merges in index order.
pub fn generate_dataset(
    family: Family,
    stages: usize,
    instances: usize,
    config: &SddpConfig,
    seed: u64,
) -> Result<Dataset> {
    if instances == 0 {
        return Err(Error::InvalidArgument("at least one instance is required".into()));
    }
    let mut results = Vec::with_capacity(instances);
    for i in 0..instances as u64 {
        let inst = sample_indexed_instance(family, stages, seed, i)?;
        results.push((inst.seed, generate_instance_examples(&inst, config)));
    }
    Ok(assemble(family, stages, seed, config, results))
}

/// Builds a dataset from per-instance results, ordered by
/// `(instance seed, stage)` whatever order the results arrive in.
pub fn assemble(
    family: Family,
    stages: usize,
    seed: u64,
    config: &SddpConfig,
    results: Vec<(u64, Result<Vec<CutSequenceExample>>)>,
) -> Dataset {
    let mut examples = Vec::new();
    let mut skipped = Vec::new();
    let instances = results.len();
    for (s, r) in results {
        match r {
            Ok(ex) => examples.extend(ex),
            Err(e) => skipped.push((s, alloc::format!("{e}"))),
        }
    }
    examples.sort_by_key(|e: &CutSequenceExample| (e.source_seed, e.stage));
    skipped.sort_by_key(|s| s.0);
    Dataset {
        meta: DatasetMeta {
            version: DATASET_VERSION,
            family,
            stages,
            seed,
            instances,
            sddp: config.clone(),
            outlier_threshold: None,
            skipped,
        },
        examples,
    }
}

/// Nearest-rank percentile of `values` at fraction `q` in (0, 1].
pub fn nearest_rank(values: &[usize], q: f64) -> usize {
    let mut v = values.to_vec();
    v.sort_unstable();
    let n = v.len();
    let rank = libm::ceil(q * n as f64) as usize;
    v[rank.clamp(1, n) - 1]
}

/// Drops examples longer than the `1 - alpha` nearest-rank percentile of
/// sequence lengths.
pub fn filter_outliers(ds: &Dataset, alpha: f64) -> Result<Dataset> {
    if ds.examples.is_empty() {
        return Err(Error::InvalidArgument("empty dataset".into()));
    }
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::InvalidArgument("alpha must lie in [0, 1)".into()));
    }
    let lengths: Vec<usize> = ds.examples.iter().map(CutSequenceExample::len).collect();
    let threshold = nearest_rank(&lengths, 1.0 - alpha);
    let examples = ds.examples.iter().filter(|e| e.len() <= threshold).cloned().collect();
    let mut meta = ds.meta.clone();
    meta.outlier_threshold = Some(threshold);
    Ok(Dataset { meta, examples })
}

/// Shuffles with `seed` and cuts into `k` folds; pair `i` validates on
/// fold `i` and trains on the rest. When the size is not a multiple of `k`
/// the first folds get one extra example.
pub fn split_folds(ds: &Dataset, k: usize, seed: u64) -> Result<Vec<(Dataset, Dataset)>> {
    let n = ds.examples.len();
    if k < 2 || n < k {
        return Err(Error::InvalidArgument(alloc::format!("cannot split {n} examples into {k} folds")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, streams::SPLIT));
    let mut bounds = Vec::with_capacity(k + 1);
    bounds.push(0);
    for f in 0..k {
        let size = n / k + usize::from(f < n % k);
        bounds.push(bounds[f] + size);
    }
    let pick = |idx: &[usize]| Dataset {
        meta: ds.meta.clone(),
        examples: idx.iter().map(|&i| ds.examples[i].clone()).collect(),
    };
    Ok((0..k)
        .map(|f| {
            let val: Vec<usize> = order[bounds[f]..bounds[f + 1]].to_vec();
            let train: Vec<usize> =
                order[..bounds[f]].iter().chain(&order[bounds[f + 1]..]).copied().collect();
            (pick(&train), pick(&val))
        })
        .collect())
}

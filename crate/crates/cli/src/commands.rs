//! Subcommands. Each takes its parsed arguments, does its work and writes
//! its outputs; the return values exist for tests.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use msp_core::dataset::{
    assemble, filter_outliers, generate_instance_examples, instance_seed, sample_indexed_instance, split_folds, Dataset,
};
use msp_core::eval::{error_ratio, evaluate_policy, value_function_comparison, Aggregate, EvalRecord, EvalReport, ValueFunctionRow};
use msp_core::neural::{policy_cutsets, train, EpochLog, ModelCheckpoint, ModelConfig, TrainConfig};
use msp_core::rng::{self, streams};
use msp_core::scenario::{build_tree, detequiv_options, solve_detequiv, ScenarioTree};
use msp_core::sddp::{lower_bound, run_sddp, run_sddp_with, IterationLog, Sampling, SddpConfig, SddpStatus, Threshold, UpperBoundMode};
use msp_core::{CutSet, Family, ProblemInstance, SolverOptions};
use serde::Serialize;

use crate::io::{self, num, InstanceFile};
use crate::parallel::map_indexed;

#[derive(Parser, Debug)]
#[command(name = "msp", version, about = "Multistage stochastic programs: SDDP, deterministic equivalents and learned cuts")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run SDDP on sampled instances and write their cut sequences.
    GenData(GenDataArgs),
    /// Train a cut generator on one fold of a dataset.
    Train(TrainArgs),
    /// Solve one sampled instance and report its policy value.
    Solve(SolveArgs),
    /// Compare methods against the deterministic equivalent on test instances.
    Eval(EvalArgs),
    /// Last-stage value function against its cut approximations.
    CompareVf(CompareVfArgs),
    /// Write an instance file.
    Instance(InstanceArgs),
    /// Write the scenario tree `solve` would use.
    Tree(TreeArgs),
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData(a) => gen_data(&a).map(drop),
        Command::Train(a) => train_cmd(&a).map(drop),
        Command::Solve(a) => solve_cmd(&a).map(drop),
        Command::Eval(a) => eval_cmd(&a).map(drop),
        Command::CompareVf(a) => compare_vf(&a).map(drop),
        Command::Instance(a) => instance_cmd(&a),
        Command::Tree(a) => tree_cmd(&a),
    }
}

fn parse_family(s: &str) -> Result<Family, String> {
    Family::parse(s).ok_or_else(|| format!("unknown family {s}; expected EP, FP or PP"))
}

/// SDDP on the lattice of `tree` with the exact upper bound.
fn lattice_config(tree: &ScenarioTree, threshold: f64, max_iters: usize, level1: bool, seed: u64) -> Result<SddpConfig> {
    Ok(SddpConfig {
        threshold: Threshold::Relative(threshold),
        max_iters,
        level1,
        seed,
        sampling: Sampling::Given(tree.lattice()?),
        upper: UpperBoundMode::Exact,
        ..Default::default()
    })
}

#[derive(Args, Debug, Clone)]
pub struct GenDataArgs {
    #[arg(long, value_parser = parse_family)]
    pub family: Family,
    #[arg(long)]
    pub stages: usize,
    #[arg(long)]
    pub instances: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file, conventionally `*.msds.jsonl`.
    #[arg(long)]
    pub out: PathBuf,
    /// Relative convergence threshold.
    #[arg(long, default_value_t = 0.005)]
    pub sddp_threshold: f64,
    /// Realizations per stage of each instance's lattice.
    #[arg(long, default_value_t = 2)]
    pub branches: usize,
    #[arg(long, default_value_t = 200)]
    pub max_iters: usize,
    /// Drop sequences longer than this upper length quantile; 0 keeps all.
    #[arg(long, default_value_t = 0.025)]
    pub outlier_alpha: f64,
    /// 0 picks the number of cores. The output does not depend on it.
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
}

pub fn gen_data(a: &GenDataArgs) -> Result<Dataset> {
    ensure!(a.instances > 0, "--instances must be positive");
    let base = SddpConfig {
        threshold: Threshold::Relative(a.sddp_threshold),
        max_iters: a.max_iters,
        sampling: Sampling::Lattice { branches: a.branches },
        upper: UpperBoundMode::Exact,
        ..Default::default()
    };
    let results = map_indexed(a.instances, a.workers, |i| {
        match sample_indexed_instance(a.family, a.stages, a.seed, i as u64) {
            Ok(inst) => (inst.seed, generate_instance_examples(&inst, &base)),
            Err(e) => (instance_seed(a.seed, i as u64), Err(e)),
        }
    });
    let mut ds = assemble(a.family, a.stages, a.seed, &base, results);
    ensure!(!ds.examples.is_empty(), "every instance failed: {:?}", ds.meta.skipped.first());
    if a.outlier_alpha > 0.0 {
        ds = filter_outliers(&ds, a.outlier_alpha)?;
    }
    io::write_dataset(&a.out, &ds)?;
    eprintln!(
        "{} examples from {} instances ({} skipped) -> {}",
        ds.examples.len(),
        a.instances,
        ds.meta.skipped.len(),
        a.out.display()
    );
    Ok(ds)
}

#[derive(Args, Debug, Clone)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 6)]
    pub folds: usize,
    /// Fold held out for validation.
    #[arg(long, default_value_t = 0)]
    pub fold: usize,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 16)]
    pub batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Extra generation room beyond the longest training sequence.
    #[arg(long, default_value_t = 4)]
    pub len_margin: usize,
    /// Conventionally `*.msck`.
    #[arg(long)]
    pub out_checkpoint: PathBuf,
    /// Optional per-epoch loss log.
    #[arg(long)]
    pub log_csv: Option<PathBuf>,
}

pub fn train_cmd(a: &TrainArgs) -> Result<(ModelCheckpoint, Vec<EpochLog>)> {
    let ds = io::read_dataset(&a.data)?;
    ensure!(a.fold < a.folds, "--fold must be below --folds");
    let mut folds = split_folds(&ds, a.folds, a.seed)?;
    let (tr, va) = folds.swap_remove(a.fold);
    let longest = ds.examples.iter().map(|e| e.len()).max().unwrap_or(2);
    let max_len = ds.meta.outlier_threshold.unwrap_or(longest).max(longest) + a.len_margin;
    let config = ModelConfig::new(tr.examples[0].conditioning().len(), ds.meta.family.state_dim(), max_len);
    let cfg = TrainConfig { epochs: a.epochs, batch_size: a.batch, lr: a.lr, seed: a.seed, ..Default::default() };
    let mut logs = Vec::new();
    let ckpt = train(&tr.examples, &va.examples, config, &cfg, &mut |l, _| {
        eprintln!("epoch {:>3}  train {:.6}  val {}", l.epoch, l.train_loss, l.val_loss.map_or(String::new(), |v| format!("{v:.6}")));
        logs.push(l.clone());
    })?;
    io::write_checkpoint(&a.out_checkpoint, &ckpt)?;
    if let Some(p) = &a.log_csv {
        let rows: Vec<Vec<String>> = logs
            .iter()
            .map(|l| vec![l.epoch.to_string(), num(l.train_loss), l.val_loss.map_or(String::new(), num)])
            .collect();
        io::atomic_write(p, &io::csv_bytes(&["epoch", "train_loss", "val_loss"], &rows)?)?;
    }
    Ok((ckpt, logs))
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Sddp,
    #[value(name = "sddp-l1")]
    #[serde(rename = "sddp-l1")]
    SddpL1,
    Detequiv,
    Neural,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Sddp => "sddp",
            Method::SddpL1 => "sddp-l1",
            Method::Detequiv => "detequiv",
            Method::Neural => "neural",
        }
    }
}

/// Cut sets of one method plus what the method reports about itself.
struct Policy {
    cutsets: Vec<CutSet>,
    well_formed: bool,
    lower_bound: Option<f64>,
    iterations: Option<usize>,
    converged: Option<bool>,
    /// SDDP iterations with the wall time at which each finished.
    log: Vec<(IterationLog, f64)>,
}

fn policy(
    method: Method,
    inst: &ProblemInstance,
    tree: &ScenarioTree,
    threshold: f64,
    max_iters: usize,
    ckpt: Option<&ModelCheckpoint>,
) -> Result<Policy> {
    match method {
        Method::Sddp | Method::SddpL1 => {
            let cfg = lattice_config(tree, threshold, max_iters, method == Method::SddpL1, inst.seed)?;
            let t0 = Instant::now();
            let mut log = Vec::new();
            let out = run_sddp_with(inst, &cfg, &mut |l| log.push((l.clone(), t0.elapsed().as_secs_f64())))?;
            Ok(Policy {
                log,
                lower_bound: Some(out.state.lower_bound),
                iterations: Some(out.state.iteration),
                converged: Some(out.status == SddpStatus::Converged),
                cutsets: out.state.cutsets,
                well_formed: true,
            })
        }
        Method::Neural => {
            let ckpt = ckpt.context("--checkpoint is required for the neural method")?;
            ensure!(ckpt.meta.family.map_or(true, |f| f == inst.family), "checkpoint was trained on {:?}", ckpt.meta.family);
            let (cutsets, well_formed) = policy_cutsets(ckpt, inst, ckpt.model.config.max_seq_len)?;
            Ok(Policy { cutsets, well_formed, lower_bound: None, iterations: None, converged: None, log: Vec::new() })
        }
        Method::Detequiv => bail!("the deterministic equivalent has no cut policy"),
    }
}

#[derive(Args, Debug, Clone)]
pub struct SolveArgs {
    #[arg(long, value_parser = parse_family)]
    pub family: Family,
    #[arg(long)]
    pub stages: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum)]
    pub method: Method,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    pub branches: usize,
    /// CSV path; a `.json` summary is written next to it.
    #[arg(long)]
    pub report: PathBuf,
    /// Solve this instance file instead of sampling one from --seed.
    #[arg(long)]
    pub instance: Option<PathBuf>,
    /// Use this exported tree instead of sampling one.
    #[arg(long)]
    pub tree: Option<PathBuf>,
    #[arg(long, default_value_t = 0.005)]
    pub sddp_threshold: f64,
    #[arg(long, default_value_t = 200)]
    pub max_iters: usize,
    /// SDDP convergence log with wall times; kept out of the report so the
    /// report stays reproducible.
    #[arg(long)]
    pub convergence_log: Option<PathBuf>,
}

fn read_tree(path: &Path, inst: &ProblemInstance) -> Result<ScenarioTree> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let tree: ScenarioTree = serde_json::from_str(&text).context("tree file")?;
    tree.validate()?;
    ensure!(tree.num_stages() == inst.stages, "tree has {} stages, instance {}", tree.num_stages(), inst.stages);
    Ok(tree)
}

#[derive(Clone, Debug, Serialize)]
pub struct SolveSummary {
    pub method: Method,
    pub instance: InstanceFile,
    pub branches: usize,
    pub tree_nodes: usize,
    /// Policy value on the tree; the optimum for `detequiv`.
    pub objective: f64,
    pub reference_objective: f64,
    pub error_ratio: f64,
    pub feasible: bool,
    pub first_stage: Vec<f64>,
    pub lower_bound: Option<f64>,
    pub iterations: Option<usize>,
    pub converged: Option<bool>,
    pub cuts_per_stage: Vec<usize>,
}

fn pick_instance(family: Family, stages: usize, seed: u64, file: Option<&PathBuf>) -> Result<ProblemInstance> {
    match file {
        Some(p) => io::read_instance(p),
        None => Ok(sample_indexed_instance(family, stages, seed, 0)?),
    }
}

/// Deterministic for a fixed seed: the report carries no timings.
pub fn solve_cmd(a: &SolveArgs) -> Result<SolveSummary> {
    let inst = pick_instance(a.family, a.stages, a.seed, a.instance.as_ref())?;
    let tree = match &a.tree {
        Some(p) => read_tree(p, &inst)?,
        None => build_tree(&inst, a.branches, inst.seed)?,
    };
    let branches = tree.lattice()?.branches(2);
    let ckpt = a.checkpoint.as_deref().map(io::read_checkpoint).transpose()?;
    let de = solve_detequiv(&inst, &tree, &detequiv_options())?;
    let opts = SolverOptions::default();
    let summary = if a.method == Method::Detequiv {
        SolveSummary {
            method: a.method,
            instance: InstanceFile::from_instance(&inst),
            branches,
            tree_nodes: tree.len(),
            objective: de.objective,
            reference_objective: de.objective,
            error_ratio: 0.0,
            feasible: true,
            first_stage: de.first_stage.clone(),
            lower_bound: None,
            iterations: Some(de.iterations),
            converged: None,
            cuts_per_stage: Vec::new(),
        }
    } else {
        let p = policy(a.method, &inst, &tree, a.sddp_threshold, a.max_iters, ckpt.as_ref())?;
        let ev = evaluate_policy(&inst, &p.cutsets, &tree, &opts)?;
        let feasible = ev.feasible && p.well_formed;
        let first_stage = if feasible { lower_bound(&inst, &p.cutsets, &opts)?.1 } else { Vec::new() };
        if let Some(path) = &a.convergence_log {
            write_convergence_log(path, &p.log)?;
        }
        SolveSummary {
            method: a.method,
            instance: InstanceFile::from_instance(&inst),
            branches,
            tree_nodes: tree.len(),
            objective: if feasible { ev.objective } else { f64::NAN },
            reference_objective: de.objective,
            error_ratio: if feasible { error_ratio(ev.objective, de.objective)? } else { f64::NAN },
            feasible,
            first_stage,
            lower_bound: p.lower_bound,
            iterations: p.iterations,
            converged: p.converged,
            cuts_per_stage: p.cutsets.iter().map(CutSet::len).collect(),
        }
    };
    let header = ["method", "family", "stages", "seed", "branches", "objective", "reference", "error_ratio", "feasible", "lower_bound", "iterations"];
    let row = vec![
        a.method.name().to_string(),
        inst.family.to_string(),
        inst.stages.to_string(),
        inst.seed.to_string(),
        branches.to_string(),
        num(summary.objective),
        num(summary.reference_objective),
        num(summary.error_ratio),
        summary.feasible.to_string(),
        summary.lower_bound.map_or(String::new(), num),
        summary.iterations.map_or(String::new(), |i| i.to_string()),
    ];
    io::write_report(&a.report, &io::csv_bytes(&header, &[row])?, &summary)?;
    Ok(summary)
}

fn write_convergence_log(path: &Path, log: &[(IterationLog, f64)]) -> Result<()> {
    let rows: Vec<Vec<String>> = log
        .iter()
        .map(|(l, secs)| {
            let cuts: Vec<String> = l.cuts_per_stage.iter().map(usize::to_string).collect();
            vec![l.iteration.to_string(), num(l.lower), num(l.v_bar), num(l.upper), num(l.gap), cuts.join(";"), num(*secs)]
        })
        .collect();
    let header = ["iteration", "lower", "v_bar", "upper", "gap", "cuts_per_stage", "seconds"];
    io::atomic_write(path, &io::csv_bytes(&header, &rows)?)
}

#[derive(Args, Debug, Clone)]
pub struct EvalArgs {
    /// Adds the neural method when given.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, value_parser = parse_family)]
    pub family: Family,
    #[arg(long)]
    pub stages: usize,
    #[arg(long, default_value_t = 50)]
    pub test_instances: usize,
    #[arg(long, default_value_t = 999)]
    pub seed: u64,
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub branches: usize,
    #[arg(long, default_value_t = 0.005)]
    pub sddp_threshold: f64,
    #[arg(long, default_value_t = 200)]
    pub max_iters: usize,
    /// Methods to run; defaults to sddp, sddp-l1 and neural when a checkpoint is given.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub methods: Vec<Method>,
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct MethodSummary {
    pub method: String,
    pub error_ratio: Aggregate,
    pub infeasibility_ratio: f64,
    pub candidate_seconds: Aggregate,
    pub reference_seconds: Aggregate,
}

#[derive(Clone, Debug, Serialize)]
pub struct EvalSummary {
    pub family: Family,
    pub stages: usize,
    pub seed: u64,
    pub test_instances: usize,
    pub branches: usize,
    pub methods: Vec<MethodSummary>,
}

/// Times are wall clock: candidate time covers producing the cuts and
/// solving stage 1 with them, reference time the deterministic equivalent.
pub fn eval_cmd(a: &EvalArgs) -> Result<Vec<EvalReport>> {
    ensure!(a.test_instances > 0, "--test-instances must be positive");
    let ckpt = a.checkpoint.as_deref().map(io::read_checkpoint).transpose()?;
    let methods: Vec<Method> = if a.methods.is_empty() {
        let mut m = vec![Method::Sddp, Method::SddpL1];
        if ckpt.is_some() {
            m.push(Method::Neural);
        }
        m
    } else {
        a.methods.clone()
    };
    ensure!(!methods.contains(&Method::Detequiv), "detequiv is the reference, not a candidate");
    let opts = SolverOptions::default();
    let per_instance = map_indexed(a.test_instances, a.workers, |i| -> Result<Vec<EvalRecord>> {
        let inst = sample_indexed_instance(a.family, a.stages, a.seed, i as u64)?;
        let tree = build_tree(&inst, a.branches, inst.seed)?;
        let t0 = Instant::now();
        let de = solve_detequiv(&inst, &tree, &detequiv_options())?;
        let reference_seconds = t0.elapsed().as_secs_f64();
        let mut recs = Vec::with_capacity(methods.len());
        for &m in &methods {
            let t0 = Instant::now();
            let p = policy(m, &inst, &tree, a.sddp_threshold, a.max_iters, ckpt.as_ref())?;
            let first = lower_bound(&inst, &p.cutsets, &opts);
            let candidate_seconds = t0.elapsed().as_secs_f64();
            let ev = evaluate_policy(&inst, &p.cutsets, &tree, &opts)?;
            let feasible = p.well_formed && ev.feasible && first.is_ok();
            let candidate = if feasible { ev.objective } else { f64::NAN };
            recs.push(EvalRecord {
                instance: i,
                candidate,
                reference: de.objective,
                error_ratio: if feasible { error_ratio(candidate, de.objective)? } else { f64::NAN },
                feasible,
                candidate_seconds,
                reference_seconds,
            });
        }
        Ok(recs)
    });
    let per_instance = per_instance.into_iter().collect::<Result<Vec<_>>>()?;
    let mut reports = Vec::with_capacity(methods.len());
    let mut rows = Vec::new();
    for (k, &m) in methods.iter().enumerate() {
        let records: Vec<EvalRecord> = per_instance.iter().map(|r| r[k].clone()).collect();
        for r in &records {
            rows.push(vec![
                m.name().to_string(),
                r.instance.to_string(),
                num(r.candidate),
                num(r.reference),
                num(r.error_ratio),
                r.feasible.to_string(),
                num(r.candidate_seconds),
                num(r.reference_seconds),
            ]);
        }
        reports.push(EvalReport::new(m.name(), records)?);
    }
    let summary = EvalSummary {
        family: a.family,
        stages: a.stages,
        seed: a.seed,
        test_instances: a.test_instances,
        branches: a.branches,
        methods: reports
            .iter()
            .map(|r| MethodSummary {
                method: r.method.clone(),
                error_ratio: r.error_ratio.clone(),
                infeasibility_ratio: r.infeasibility_ratio,
                candidate_seconds: r.candidate_seconds.clone(),
                reference_seconds: r.reference_seconds.clone(),
            })
            .collect(),
    };
    let header = ["method", "instance", "candidate", "reference", "error_ratio", "feasible", "candidate_seconds", "reference_seconds"];
    io::write_report(&a.report, &io::csv_bytes(&header, &rows)?, &summary)?;
    for s in &summary.methods {
        eprintln!(
            "{:<9} error {:.3}% +- {:.3}%  infeasible {:.1}%  time {:.3}s (reference {:.3}s)",
            s.method,
            100.0 * s.error_ratio.mean,
            100.0 * s.error_ratio.std_error,
            100.0 * s.infeasibility_ratio,
            s.candidate_seconds.mean,
            s.reference_seconds.mean
        );
    }
    Ok(reports)
}

#[derive(Args, Debug, Clone)]
pub struct CompareVfArgs {
    /// Instance file; see the `instance` subcommand.
    #[arg(long)]
    pub instance: PathBuf,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// `lo:hi:n`, applied to every state coordinate.
    #[arg(long, default_value = "0:80:17")]
    pub grid: String,
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
    #[arg(long)]
    pub out_csv: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Backward realizations per stage of the SDDP run.
    #[arg(long, default_value_t = 200)]
    pub sddp_branches: usize,
    #[arg(long, default_value_t = 0.005)]
    pub sddp_threshold: f64,
}

/// Inclusive grid of `n` points from `lo:hi:n`.
pub fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    ensure!(parts.len() == 3, "grid must look like lo:hi:n");
    let (lo, hi): (f64, f64) = (parts[0].trim().parse()?, parts[1].trim().parse()?);
    let n: usize = parts[2].trim().parse()?;
    ensure!(n >= 1 && lo.is_finite() && hi.is_finite() && lo <= hi, "bad grid {s}");
    if n == 1 {
        return Ok(vec![lo]);
    }
    Ok((0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect())
}

#[derive(Clone, Debug, Serialize)]
pub struct VfSummary {
    pub instance: InstanceFile,
    pub samples: usize,
    pub methods: Vec<String>,
    /// Per method, the largest `value - (mean + 3 std / sqrt(samples))`;
    /// nonpositive when the column stays below the exact band.
    pub max_excess: Vec<f64>,
}

pub fn compare_vf(a: &CompareVfArgs) -> Result<(Vec<String>, Vec<ValueFunctionRow>)> {
    let inst = io::read_instance(&a.instance)?;
    let d = inst.state_dim();
    let grid: Vec<Vec<f64>> = parse_grid(&a.grid)?.into_iter().map(|v| vec![v; d]).collect();
    let t = inst.stages;
    let cfg = SddpConfig {
        threshold: Threshold::Relative(a.sddp_threshold),
        backward_branches: a.sddp_branches,
        seed: a.seed,
        ..Default::default()
    };
    let sddp = run_sddp(&inst, &cfg)?;
    let mut names = vec!["sddp".to_string()];
    let mut sets = vec![sddp.state.cutsets[t - 2].clone()];
    if let Some(p) = &a.checkpoint {
        let ckpt = io::read_checkpoint(p)?;
        ensure!(ckpt.meta.family.map_or(true, |f| f == inst.family), "checkpoint was trained on {:?}", ckpt.meta.family);
        let (gen, _) = policy_cutsets(&ckpt, &inst, ckpt.model.config.max_seq_len)?;
        names.push("neural".to_string());
        sets.push(gen[t - 2].clone());
    }
    let refs: Vec<&CutSet> = sets.iter().collect();
    let mut r = rng::stream(a.seed, streams::PROBE);
    let rows = value_function_comparison(&inst, &refs, &grid, a.samples, &mut r, &SolverOptions::default())?;

    let mut header: Vec<String> = (1..=d).map(|i| if d == 1 { "x".to_string() } else { format!("x{i}") }).collect();
    header.extend(["exact_mean", "exact_std", "samples"].map(String::from));
    header.extend(names.iter().cloned());
    let mut max_excess = vec![f64::NEG_INFINITY; names.len()];
    let mut out = Vec::with_capacity(rows.len());
    for row in &rows {
        let band = row.exact_mean + 3.0 * row.exact_std / (row.samples.max(1) as f64).sqrt();
        let mut cells: Vec<String> = row.point.iter().map(|&v| num(v)).collect();
        cells.extend([num(row.exact_mean), num(row.exact_std), row.samples.to_string()]);
        for (k, m) in row.methods.iter().enumerate() {
            cells.push(m.map_or(String::new(), num));
            if let Some(v) = m {
                max_excess[k] = max_excess[k].max(v - band);
            }
        }
        out.push(cells);
    }
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let summary = VfSummary { instance: InstanceFile::from_instance(&inst), samples: a.samples, methods: names.clone(), max_excess };
    io::write_report(&a.out_csv, &io::csv_bytes(&header_refs, &out)?, &summary)?;
    Ok((names, rows))
}

#[derive(Args, Debug, Clone)]
pub struct InstanceArgs {
    #[arg(long, value_parser = parse_family)]
    pub family: Family,
    #[arg(long)]
    pub stages: usize,
    /// Sample from the priors with this seed unless --lambda is given.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Explicit parameters, e.g. `mu_I=20,sigma_I=5`.
    #[arg(long)]
    pub lambda: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn instance_cmd(a: &InstanceArgs) -> Result<()> {
    let file = match &a.lambda {
        None => InstanceFile::from_instance(&sample_indexed_instance(a.family, a.stages, a.seed, 0)?),
        Some(spec) => {
            let mut lambda = std::collections::BTreeMap::new();
            for kv in spec.split(',') {
                let (k, v) = kv.split_once('=').with_context(|| format!("expected name=value, got {kv}"))?;
                lambda.insert(k.trim().to_string(), v.trim().parse::<f64>()?);
            }
            let f = InstanceFile { family: a.family, stages: a.stages, lambda, seed: a.seed };
            f.to_instance()?;
            f
        }
    };
    let mut text = serde_json::to_string_pretty(&file)?;
    text.push('\n');
    io::atomic_write(&a.out, text.as_bytes())
}

#[derive(Args, Debug, Clone)]
pub struct TreeArgs {
    #[arg(long, value_parser = parse_family)]
    pub family: Family,
    #[arg(long)]
    pub stages: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 2)]
    pub branches: usize,
    #[arg(long)]
    pub instance: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn tree_cmd(a: &TreeArgs) -> Result<()> {
    let inst = pick_instance(a.family, a.stages, a.seed, a.instance.as_ref())?;
    let tree = build_tree(&inst, a.branches, inst.seed)?;
    tree.validate()?;
    io::atomic_write(&a.out, serde_json::to_string(&tree)?.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parsing() {
        assert_eq!(parse_grid("0:80:5").unwrap(), vec![0.0, 20.0, 40.0, 60.0, 80.0]);
        assert_eq!(parse_grid("3:3:1").unwrap(), vec![3.0]);
        for bad in ["0:80", "5:1:3", "0:1:0", "a:1:2"] {
            assert!(parse_grid(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn cli_parses_every_subcommand() {
        let ok = [
            "msp gen-data --family EP --stages 3 --instances 2 --out d.msds.jsonl",
            "msp train --data d.msds.jsonl --out-checkpoint m.msck --folds 3",
            "msp solve --family pp --stages 3 --method sddp-l1 --report r.csv --seed 7",
            "msp eval --family FP --stages 3 --report e.csv --methods sddp,sddp-l1",
            "msp compare-vf --instance i.json --out-csv v.csv --grid 0:80:9",
            "msp instance --family EP --stages 4 --lambda mu_I=20,sigma_I=5 --out i.json",
            "msp tree --family EP --stages 3 --out t.json",
        ];
        for line in ok {
            Cli::try_parse_from(line.split(' ')).unwrap_or_else(|e| panic!("{line}: {e}"));
        }
        assert!(Cli::try_parse_from("msp solve --family XX --stages 3 --method sddp --report r.csv".split(' ')).is_err());
    }
}

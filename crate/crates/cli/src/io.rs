//! On-disk formats.
//!
//! Datasets are JSON lines: a header with the [`DatasetMeta`], then one
//! example per line. Checkpoints are a single JSON document. Every write
//! goes to a temporary sibling first and is renamed into place.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use msp_core::dataset::{Dataset, DatasetMeta, DATASET_VERSION};
use msp_core::neural::ModelCheckpoint;
use msp_core::problems::family_spec;
use msp_core::{Family, ProblemInstance};
use serde::{Deserialize, Serialize};

pub const DATASET_SUFFIX: &str = "msds.jsonl";
pub const CHECKPOINT_SUFFIX: &str = "msck";

fn temp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(format!(".tmp{}", std::process::id()));
    path.with_file_name(name)
}

/// Writes `bytes` to `path` through a temporary file and a rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let tmp = temp_path(path);
    let res = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if res.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    res.with_context(|| format!("writing {}", path.display()))
}

pub fn dataset_to_string(ds: &Dataset) -> Result<String> {
    let mut out = serde_json::to_string(&ds.meta)?;
    out.push('\n');
    for e in &ds.examples {
        out.push_str(&serde_json::to_string(e)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_dataset(path: &Path, ds: &Dataset) -> Result<()> {
    atomic_write(path, dataset_to_string(ds)?.as_bytes())
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut lines = BufReader::new(f).lines();
    let header = lines.next().context("empty dataset file")??;
    let meta: DatasetMeta = serde_json::from_str(&header).context("dataset header")?;
    if meta.version != DATASET_VERSION {
        bail!("unsupported dataset version {}", meta.version);
    }
    let mut examples = Vec::new();
    for (k, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let e: msp_core::dataset::CutSequenceExample =
            serde_json::from_str(&line).with_context(|| format!("example on line {}", k + 2))?;
        e.validate().with_context(|| format!("example on line {}", k + 2))?;
        examples.push(e);
    }
    Ok(Dataset { meta, examples })
}

pub fn write_checkpoint(path: &Path, ckpt: &ModelCheckpoint) -> Result<()> {
    atomic_write(path, serde_json::to_string(ckpt)?.as_bytes())
}

pub fn read_checkpoint(path: &Path) -> Result<ModelCheckpoint> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let ckpt: ModelCheckpoint = serde_json::from_str(&text).context("checkpoint")?;
    ckpt.validate()?;
    Ok(ckpt)
}

/// Human-editable instance description; `lambda` is keyed by parameter
/// name.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    #[serde(alias = "family_id")]
    pub family: Family,
    #[serde(alias = "T")]
    pub stages: usize,
    pub lambda: BTreeMap<String, f64>,
    #[serde(default)]
    pub seed: u64,
}

impl InstanceFile {
    pub fn from_instance(inst: &ProblemInstance) -> InstanceFile {
        InstanceFile {
            family: inst.family,
            stages: inst.stages,
            lambda: inst.lambda.entries.iter().cloned().collect(),
            seed: inst.seed,
        }
    }

    pub fn to_instance(&self) -> Result<ProblemInstance> {
        let spec = family_spec(self.family);
        if let Some(k) = self.lambda.keys().find(|k| !spec.priors.iter().any(|p| p.0 == k.as_str())) {
            bail!("unknown parameter {k} for {}", self.family);
        }
        let values = spec
            .priors
            .iter()
            .map(|&(name, _, _)| self.lambda.get(name).copied().with_context(|| format!("missing parameter {name}")))
            .collect::<Result<Vec<_>>>()?;
        Ok(ProblemInstance::new(self.family, self.stages, &values)?.with_seed(self.seed))
    }
}

pub fn read_instance(path: &Path) -> Result<ProblemInstance> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str::<InstanceFile>(&text).context("instance file")?.to_instance()
}

/// CSV bytes from a header and rows of already formatted cells.
pub fn csv_bytes(header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    Ok(w.into_inner().map_err(|e| e.into_error())?)
}

/// Writes `csv` at `path` and `summary` next to it with a `.json`
/// extension; returns the summary path.
pub fn write_report<S: Serialize>(path: &Path, csv: &[u8], summary: &S) -> Result<PathBuf> {
    let json_path = path.with_extension("json");
    if json_path == path {
        bail!("report path must not end in .json");
    }
    atomic_write(path, csv)?;
    let mut text = serde_json::to_string_pretty(summary)?;
    text.push('\n');
    atomic_write(&json_path, text.as_bytes())?;
    Ok(json_path)
}

/// Plain number formatting shared by every report; empty for NaN.
pub fn num(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

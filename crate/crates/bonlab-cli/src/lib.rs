//! Batch front-end for bonlab: config-driven runs, the built-in
//! verification suite and instance export.

// `!(x > y)` is how NaN gets rejected along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod jobs;
pub mod plot;
pub mod verify;

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

pub use config::{ExperimentConfig, OUT_ENV};

/// Bad input from the user. Maps to exit code 2.
#[derive(Debug, Clone, PartialEq)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

impl From<bonlab::Error> for UsageError {
    fn from(e: bonlab::Error) -> Self {
        UsageError(e.to_string())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes through a temporary sibling so readers never see partial files.
fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    fs::write(&tmp, contents).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

#[derive(Serialize)]
struct JobEntry {
    id: String,
    kind: &'static str,
    csv: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    svg: Option<String>,
    rows: usize,
    #[serde(skip_serializing_if = "serde_json::Value::is_null")]
    summary: serde_json::Value,
}

#[derive(Serialize)]
struct Manifest<'a> {
    version: &'static str,
    seed: u64,
    config_hash: String,
    instance: &'a str,
    instance_hash: String,
    jobs: Vec<JobEntry>,
    config: &'a ExperimentConfig,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub output_dir: PathBuf,
    pub files: Vec<PathBuf>,
}

/// Resolves a config argument: a file path, or the name of a built-in.
pub fn load_config(arg: &str) -> std::result::Result<ExperimentConfig, UsageError> {
    let p = Path::new(arg);
    if !p.exists() {
        if let Some(cfg) = config::builtin(arg) {
            return Ok(cfg);
        }
    }
    ExperimentConfig::load(p)
}

/// Runs every job in a worker pool and writes one CSV per job, optional
/// SVG plots and `manifest.json`. Output bytes depend only on the config
/// (seed included) and the crate version.
pub fn run(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    let inst = cfg.instance.build().map_err(UsageError::from)?;
    let out = cfg.resolved_output_dir();
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;

    let instance_json = serde_json::to_string(&inst)?;
    let instance_hash = sha256_hex(instance_json.as_bytes());
    let config_hash = sha256_hex(serde_json::to_string(cfg)?.as_bytes());
    let preamble = format!("# instance_hash={instance_hash} seed={} version={}\n", cfg.seed, bonlab::VERSION);

    let tables: Vec<Result<jobs::Table>> = cfg
        .jobs
        .par_iter()
        .enumerate()
        .map(|(i, job)| {
            jobs::run_job(cfg, &inst, i, job)
                .map_err(anyhow::Error::from)
                .with_context(|| format!("job {i} ({}) failed", job.kind()))
        })
        .collect();

    let mut files = Vec::new();
    let mut entries = Vec::new();
    for (i, (job, table)) in cfg.jobs.iter().zip(tables).enumerate() {
        let table = table?;
        let id = format!("job{i:02}_{}", job.kind());
        let csv = format!("{id}.csv");
        write_atomic(&out.join(&csv), &table.to_csv(&preamble))?;
        files.push(out.join(&csv));
        let svg = match (&table.plot, cfg.plots) {
            (Some(p), true) => {
                let name = format!("{id}.svg");
                write_atomic(&out.join(&name), &p.to_svg())?;
                files.push(out.join(&name));
                Some(name)
            }
            _ => None,
        };
        entries.push(JobEntry { id, kind: job.kind(), csv, svg, rows: table.rows.len(), summary: table.summary });
    }
    let manifest = Manifest {
        version: bonlab::VERSION,
        seed: cfg.seed,
        config_hash,
        instance: &inst.name,
        instance_hash,
        jobs: entries,
        config: cfg,
    };
    let path = out.join("manifest.json");
    write_atomic(&path, &(serde_json::to_string_pretty(&manifest)? + "\n"))?;
    files.push(path);
    Ok(RunOutcome { output_dir: out, files })
}

/// Parses `k=v,k=v` into numeric parameters.
pub fn parse_params(s: &str) -> std::result::Result<BTreeMap<String, f64>, UsageError> {
    let mut out = BTreeMap::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| UsageError(format!("invalid parameter `{part}`: expected `name=value`")))?;
        let (k, v) = (k.trim(), v.trim());
        let x: f64 = v
            .parse()
            .map_err(|_| UsageError(format!("invalid parameter `{k}`: `{v}` is not a number")))?;
        if out.insert(k.to_string(), x).is_some() {
            return Err(UsageError(format!("invalid parameter `{k}`: given twice")));
        }
    }
    Ok(out)
}

/// Builds a family member and serializes it.
pub fn instance_json(name: &str, params: &str) -> std::result::Result<String, UsageError> {
    let params = parse_params(params)?;
    let inst = bonlab::instances::generate(name, &params)?;
    Ok(serde_json::to_string_pretty(&inst).expect("instance serializes") + "\n")
}

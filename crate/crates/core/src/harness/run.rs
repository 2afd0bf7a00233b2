//! Batch evaluation runs and their manifests.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::metrics::{records_csv_bytes, MetricRecord};

use super::aggregate::{aggregate, summary_csv_bytes, CaseIndex, GroupKey};
use super::catalog::load_catalog;
use super::config::Config;
use super::pipeline::evaluate_case;
use super::store::{ForecastStore, TargetStore};

pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunInputs {
    pub catalog: PathBuf,
    pub forecasts: PathBuf,
    pub targets: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputFile {
    /// Path relative to the output directory.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

/// Everything needed to rerun an evaluation and check its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub toolkit_version: String,
    pub inputs: RunInputs,
    pub models: Vec<String>,
    pub case_ids: Vec<String>,
    pub parameters: serde_json::Value,
    pub outputs: Vec<OutputFile>,
    /// `(model, case)` pairs with at least one diagnostic.
    pub partial: Vec<String>,
}

impl RunManifest {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub manifest: RunManifest,
    pub records: Vec<MetricRecord>,
    pub messages: Vec<String>,
}

impl RunResult {
    pub fn is_partial(&self) -> bool {
        !self.manifest.partial.is_empty()
    }
}

pub const SUMMARY_GROUPS: [GroupKey; 3] = [GroupKey::EventType, GroupKey::Lead, GroupKey::Model];

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn jsonl_bytes(records: &[MetricRecord]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    for r in records {
        serde_json::to_writer(&mut buf, r)?;
        buf.push(b'\n');
    }
    Ok(buf)
}

/// Evaluate every (case, model) pair and write records, summary,
/// diagnostics and finally the manifest into `out_dir`.
pub fn run_evaluation(inputs: &RunInputs, cfg: &Config, out_dir: impl AsRef<Path>) -> Result<RunResult> {
    let out_dir = out_dir.as_ref();
    cfg.validate()?;
    let cases = load_catalog(&inputs.catalog)?;
    let forecasts = ForecastStore::new(&inputs.forecasts);
    let targets = TargetStore::new(&inputs.targets);
    let models = if cfg.evaluation.models.is_empty() {
        forecasts.models()?
    } else {
        cfg.evaluation.models.clone()
    };

    let pairs: Vec<(usize, &String)> = (0..cases.len()).flat_map(|c| models.iter().map(move |m| (c, m))).collect();
    let results: Vec<_> = pairs
        .par_iter()
        .map(|&(c, m)| (c, m, evaluate_case(&cases[c], m, cfg, &forecasts, &targets)))
        .collect();

    let mut records = Vec::new();
    let mut messages = Vec::new();
    let mut partial = Vec::new();
    for (c, m, ev) in results {
        if ev.partial {
            partial.push(format!("{m}/{}", cases[c].id));
        }
        records.extend(ev.records);
        messages.extend(ev.messages);
    }
    records.sort_by(|a, b| {
        (&a.model, &a.case, a.init_time, a.lead_hours, &a.metric).cmp(&(&b.model, &b.case, b.init_time, b.lead_hours, &b.metric))
    });
    partial.sort();
    messages.sort();

    let summary = aggregate(&records, &CaseIndex::new(&cases), &SUMMARY_GROUPS);
    let mut diag = messages.join("\n");
    if !diag.is_empty() {
        diag.push('\n');
    }
    let files: Vec<(&str, Vec<u8>)> = vec![
        ("records.csv", records_csv_bytes(&records)?),
        ("records.jsonl", jsonl_bytes(&records)?),
        ("summary.csv", summary_csv_bytes(&summary)?),
        ("diagnostics.txt", diag.into_bytes()),
    ];
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut outputs = Vec::new();
    for (name, bytes) in &files {
        let p = out_dir.join(name);
        fs::write(&p, bytes).map_err(|e| Error::io(&p, e))?;
        outputs.push(OutputFile {
            path: name.to_string(),
            bytes: bytes.len() as u64,
            sha256: sha256_hex(bytes),
        });
    }
    let manifest = RunManifest {
        toolkit_version: TOOLKIT_VERSION.to_string(),
        inputs: inputs.clone(),
        models,
        case_ids: cases.iter().map(|c| c.id.clone()).collect(),
        parameters: cfg.to_json(),
        outputs,
        partial,
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    let mp = out_dir.join(MANIFEST_FILE);
    fs::write(&mp, text).map_err(|e| Error::io(&mp, e))?;
    Ok(RunResult {
        manifest,
        records,
        messages,
    })
}

/// Output files whose regenerated content differs from the manifest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayReport {
    pub mismatched: Vec<String>,
}

/// Rerun the evaluation described by a manifest into `out_dir` and compare
/// every output digest.
pub fn replay(manifest: &RunManifest, out_dir: impl AsRef<Path>) -> Result<(RunResult, ReplayReport)> {
    if manifest.toolkit_version != TOOLKIT_VERSION {
        return Err(Error::InvalidParameter(format!(
            "manifest written by version {}, this is {TOOLKIT_VERSION}",
            manifest.toolkit_version
        )));
    }
    let cfg = Config::from_json(&manifest.parameters)?;
    let result = run_evaluation(&manifest.inputs, &cfg, out_dir)?;
    let mut mismatched: Vec<String> = manifest
        .outputs
        .iter()
        .filter(|o| !result.manifest.outputs.contains(o))
        .map(|o| o.path.clone())
        .collect();
    if result.manifest.case_ids != manifest.case_ids || result.manifest.models != manifest.models {
        mismatched.push(MANIFEST_FILE.into());
    }
    Ok((result, ReplayReport { mismatched }))
}

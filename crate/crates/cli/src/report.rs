//! JSON reports, per-trial CSV and atomic file output.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use anyhow::Context;
use serde::{Deserialize, Serialize};

use crate::spec::ExperimentSpec;

pub const SCHEMA: u32 = 1;

/// One seed's numbers, in the command's fixed column order.
#[derive(Clone, Debug, PartialEq)]
pub struct Trial {
    pub seed: u64,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub min: f64,
    pub p10: f64,
    pub p50: f64,
    pub p90: f64,
    pub max: f64,
}

impl Quantiles {
    /// Nearest-rank quantiles; `None` on an empty sample.
    pub fn of(xs: &[f64]) -> Option<Self> {
        if xs.is_empty() {
            return None;
        }
        let mut v = xs.to_vec();
        v.sort_by(f64::total_cmp);
        let q = |p: f64| v[((p * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1];
        Some(Quantiles { min: v[0], p10: q(0.1), p50: q(0.5), p90: q(0.9), max: v[v.len() - 1] })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    /// The condition checked, in words.
    pub contract: String,
    pub passed: usize,
    pub required: usize,
    pub total: usize,
    pub pass: bool,
    pub quantiles: BTreeMap<String, Quantiles>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: u32,
    pub spec: ExperimentSpec,
    pub seeds: Vec<u64>,
    pub columns: Vec<String>,
    pub trials: Vec<serde_json::Value>,
    pub aggregate: Aggregate,
}

impl Report {
    pub fn new(spec: ExperimentSpec, columns: &[&str], trials: &[Trial], aggregate: Aggregate) -> Self {
        let rows = trials
            .iter()
            .map(|t| {
                let mut m = serde_json::Map::new();
                m.insert("seed".into(), t.seed.into());
                for (c, v) in columns.iter().zip(&t.values) {
                    m.insert(c.to_string(), (*v).into());
                }
                serde_json::Value::Object(m)
            })
            .collect();
        Report {
            schema: SCHEMA,
            seeds: trials.iter().map(|t| t.seed).collect(),
            spec,
            columns: columns.iter().map(|c| c.to_string()).collect(),
            trials: rows,
            aggregate,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// `seed,<columns...>`, one line per trial.
pub fn trials_csv(columns: &[&str], trials: &[Trial]) -> String {
    let mut out = String::from("seed");
    for c in columns {
        out.push(',');
        out.push_str(c);
    }
    out.push('\n');
    for t in trials {
        let _ = write!(out, "{}", t.seed);
        for v in &t.values {
            let _ = write!(out, ",{v:e}");
        }
        out.push('\n');
    }
    out
}

/// Writes through a temporary file in the target directory, then renames over `path`.
pub fn write_atomic(path: &Path, contents: &[u8]) -> anyhow::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating a temp file in {}", dir.display()))?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

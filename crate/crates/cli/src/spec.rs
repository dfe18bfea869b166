//! Resolved experiment descriptions. Every report embeds one, and `replay` runs it again.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Gen,
    EmbedVerify,
    RegressL2,
    RegressL1,
    Lowrank,
    Cur,
    Distributed,
    Sparsify,
    Schatten,
    AttackJl,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("unit variant");
        f.write_str(s.as_str().expect("string tag"))
    }
}

/// Where a matrix, vector or graph comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Source {
    /// Matrix Market file.
    File { path: PathBuf },
    PlantedRank { n: usize, d: usize, k: usize, strength: f64, noise: f64, seed: u64 },
    RandomGaussian { n: usize, d: usize, seed: u64 },
    /// Whitespace-separated `u v w` lines.
    EdgeList { path: PathBuf },
    Graph { family: GraphFamily, n: usize, p: f64, seed: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphFamily {
    Complete,
    ErdosRenyi,
}

impl FromStr for GraphFamily {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> anyhow::Result<Self> {
        match s {
            "complete" => Ok(GraphFamily::Complete),
            "er" | "erdos-renyi" | "erdos_renyi" => Ok(GraphFamily::ErdosRenyi),
            other => bail!("unknown graph family `{other}` (complete, er)"),
        }
    }
}

/// Inclusive seed range, written `a..b`; a single number is a range of one.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SeedRange {
    pub first: u64,
    pub last: u64,
}

impl SeedRange {
    pub fn seeds(&self) -> Vec<u64> {
        (self.first..=self.last).collect()
    }
}

impl FromStr for SeedRange {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> anyhow::Result<Self> {
        let parse = |t: &str| t.trim().parse::<u64>().with_context(|| format!("bad seed `{t}`"));
        let (first, last) = match s.split_once("..") {
            Some((a, b)) => (parse(a)?, parse(b.trim_start_matches('='))?),
            None => {
                let x = parse(s)?;
                (x, x)
            }
        };
        if last < first {
            bail!("empty seed range `{s}`");
        }
        Ok(SeedRange { first, last })
    }
}

impl fmt::Display for SeedRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.first, self.last)
    }
}

impl Serialize for SeedRange {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SeedRange {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Distributed scenario file: `{s, n, d, k, eps, seed, generator}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub s: usize,
    pub n: usize,
    pub d: usize,
    pub k: usize,
    #[serde(alias = "ε")]
    pub eps: f64,
    /// Seeds the split of `A` into shares.
    pub seed: u64,
    pub generator: Source,
}

/// Algorithm parameters; only the ones a command uses are set.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub eps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub p: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rows: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sketch: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mode: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub integer_safe: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub chain: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub scenario: Option<Scenario>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub report: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub csv: Option<PathBuf>,
    /// Generated matrix or graph, sparsifier edge list, or ledger CSV, depending on the command.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub artifact: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub laplacian: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub command: Command,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub input: Option<Source>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rhs: Option<Source>,
    pub params: Params,
    pub seeds: SeedRange,
    pub outputs: Outputs,
}

impl ExperimentSpec {
    pub fn new(command: Command, seeds: SeedRange) -> Self {
        Self { command, input: None, rhs: None, params: Params::default(), seeds, outputs: Outputs::default() }
    }

    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    pub fn from_json(text: &str) -> anyhow::Result<Self> {
        serde_json::from_str(text).context("parsing experiment spec")
    }
}

//! Flat key-value experiment files for the `simulate` command.
//!
//! One `key = value` pair per line; `#` starts a comment. Unknown or
//! duplicate keys are errors with the offending line number, so experiment
//! records stay diffable and typo-proof. Command-line flags override file
//! values.
//!
//! Keys:
//!
//! ```text
//! # population: either a CSV path or a synthetic triple
//! pop            = path/to/pop.csv
//! pop_seed       = 1          # synthetic population seed
//! pop_n          = 10000      # synthetic population size
//! pop_p          = 12         # synthetic auxiliary dimension
//!
//! # nonprobability set: either a partition CSV or a generated scenario
//! partition      = path/to/partition.csv
//! scenario       = sim1       # sim1 | k1..k8
//! fraction       = 0.7        # target share of U allocated to A
//! npd_seed       = 2          # propensity + allocation seed
//!
//! strategies     = srs_u_ht, srs_b_madi_rf
//! grid           = 25:800:25  # or a comma list: 25,50,100
//! replicates     = 1000
//! seed           = 42         # master seed
//! level          = 0.95
//! enumeration    = false      # replace draws with all samples
//! dump_replicates = false
//!
//! # forest shape used by every forest-based strategy
//! trees          = 100
//! mtry           = 0          # 0 keeps the p/3 default
//! min_leaf       = 5
//! max_depth      = 0          # 0 means unbounded
//! bootstrap      = true
//! ```

use std::collections::BTreeSet;
use std::path::PathBuf;

use thiserror::Error;

use crate::npd::Scenario;
use crate::simulation::{SimulationConfig, Strategy};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got {got:?}")]
    BadSyntax { line: usize, got: String },
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key {key:?}")]
    DuplicateKey { line: usize, key: String },
    #[error("line {line}: key {key:?}: {reason}")]
    BadValue {
        line: usize,
        key: String,
        reason: String,
    },
    #[error("{0}")]
    Invalid(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Where the population comes from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PopulationSource {
    File(PathBuf),
    Synthetic { seed: u64, n: usize, p: usize },
}

/// Where the A/B split comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum NpdSource {
    File(PathBuf),
    Generated {
        scenario: Scenario,
        fraction: f64,
        seed: u64,
    },
}

/// Parsed experiment file: data sources plus the harness configuration.
#[derive(Clone, Debug)]
pub struct ExperimentSpec {
    pub population: PopulationSource,
    pub npd: Option<NpdSource>,
    pub simulation: SimulationConfig,
}

const KNOWN_KEYS: [&str; 18] = [
    "pop",
    "pop_seed",
    "pop_n",
    "pop_p",
    "partition",
    "scenario",
    "fraction",
    "npd_seed",
    "strategies",
    "grid",
    "replicates",
    "seed",
    "level",
    "enumeration",
    "dump_replicates",
    "trees",
    "mtry",
    "min_leaf",
];
const KNOWN_KEYS_FOREST: [&str; 2] = ["max_depth", "bootstrap"];

/// Parse a grid spec: `start:stop:step` or a comma-separated list.
pub fn parse_grid(text: &str) -> Result<Vec<usize>, String> {
    let text = text.trim();
    if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() != 3 {
            return Err(format!("range grid must be start:stop:step, got {text:?}"));
        }
        let start: usize = parts[0]
            .trim()
            .parse()
            .map_err(|_| "bad start".to_string())?;
        let stop: usize = parts[1]
            .trim()
            .parse()
            .map_err(|_| "bad stop".to_string())?;
        let step: usize = parts[2]
            .trim()
            .parse()
            .map_err(|_| "bad step".to_string())?;
        if step == 0 || start == 0 || stop < start {
            return Err(format!("degenerate grid range {text:?}"));
        }
        Ok((start..=stop).step_by(step).collect())
    } else {
        text.split(',')
            .map(|part| {
                part.trim()
                    .parse::<usize>()
                    .map_err(|_| format!("bad grid entry {part:?}"))
            })
            .collect()
    }
}

pub fn parse_strategies(text: &str) -> Result<Vec<Strategy>, String> {
    let mut out = Vec::new();
    for part in text.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        if part == "all" {
            out.extend(Strategy::ALL);
            continue;
        }
        out.push(Strategy::parse(part).map_err(|e| e.to_string())?);
    }
    if out.is_empty() {
        return Err("no strategies given".to_string());
    }
    Ok(out)
}

impl ExperimentSpec {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut seen = BTreeSet::new();
        let mut pop_path: Option<PathBuf> = None;
        let mut pop_seed: Option<u64> = None;
        let mut pop_n: Option<usize> = None;
        let mut pop_p: Option<usize> = None;
        let mut partition_path: Option<PathBuf> = None;
        let mut scenario: Option<Scenario> = None;
        let mut fraction: Option<f64> = None;
        let mut npd_seed: Option<u64> = None;
        let mut sim = SimulationConfig::default();
        let mut strategies_set = false;

        for (index, raw) in text.lines().enumerate() {
            let line = index + 1;
            let stripped = raw.split('#').next().unwrap_or("").trim();
            if stripped.is_empty() {
                continue;
            }
            let Some((key, value)) = stripped.split_once('=') else {
                return Err(ConfigError::BadSyntax {
                    line,
                    got: raw.trim().to_string(),
                });
            };
            let key = key.trim();
            let value = value.trim();
            if !KNOWN_KEYS.contains(&key) && !KNOWN_KEYS_FOREST.contains(&key) {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: key.to_string(),
                });
            }
            if !seen.insert(key.to_string()) {
                return Err(ConfigError::DuplicateKey {
                    line,
                    key: key.to_string(),
                });
            }
            let bad = |reason: &str| ConfigError::BadValue {
                line,
                key: key.to_string(),
                reason: reason.to_string(),
            };
            match key {
                "pop" => pop_path = Some(PathBuf::from(value)),
                "pop_seed" => pop_seed = Some(value.parse().map_err(|_| bad("not an integer"))?),
                "pop_n" => pop_n = Some(value.parse().map_err(|_| bad("not a count"))?),
                "pop_p" => pop_p = Some(value.parse().map_err(|_| bad("not a count"))?),
                "partition" => partition_path = Some(PathBuf::from(value)),
                "scenario" => {
                    scenario = Some(Scenario::parse(value).map_err(|e| bad(&e.to_string()))?)
                }
                "fraction" => fraction = Some(value.parse().map_err(|_| bad("not a number"))?),
                "npd_seed" => npd_seed = Some(value.parse().map_err(|_| bad("not an integer"))?),
                "strategies" => {
                    sim.strategies = parse_strategies(value).map_err(|e| bad(&e))?;
                    strategies_set = true;
                }
                "grid" => sim.grid = parse_grid(value).map_err(|e| bad(&e))?,
                "replicates" => sim.replicates = value.parse().map_err(|_| bad("not a count"))?,
                "seed" => sim.master_seed = value.parse().map_err(|_| bad("not an integer"))?,
                "level" => sim.level = value.parse().map_err(|_| bad("not a number"))?,
                "enumeration" => {
                    sim.enumeration = value.parse().map_err(|_| bad("expected true/false"))?
                }
                "dump_replicates" => {
                    sim.dump_replicates = value.parse().map_err(|_| bad("expected true/false"))?
                }
                "trees" => sim.forest.n_trees = value.parse().map_err(|_| bad("not a count"))?,
                "mtry" => {
                    let v: usize = value.parse().map_err(|_| bad("not a count"))?;
                    sim.forest.mtry = if v == 0 { None } else { Some(v) };
                }
                "min_leaf" => {
                    sim.forest.min_leaf = value.parse().map_err(|_| bad("not a count"))?
                }
                "max_depth" => {
                    let v: usize = value.parse().map_err(|_| bad("not a count"))?;
                    sim.forest.max_depth = if v == 0 { None } else { Some(v) };
                }
                "bootstrap" => {
                    sim.forest.bootstrap = value.parse().map_err(|_| bad("expected true/false"))?
                }
                _ => unreachable!("key list checked above"),
            }
        }

        let population = match (pop_path, pop_seed, pop_n, pop_p) {
            (Some(path), None, None, None) => PopulationSource::File(path),
            (None, Some(seed), Some(n), Some(p)) => PopulationSource::Synthetic { seed, n, p },
            (None, None, None, None) => {
                return Err(ConfigError::Invalid(
                    "population missing: set `pop` or `pop_seed`/`pop_n`/`pop_p`".into(),
                ))
            }
            _ => {
                return Err(ConfigError::Invalid(
                    "set either `pop` or the full `pop_seed`/`pop_n`/`pop_p` triple, not a mix"
                        .into(),
                ))
            }
        };

        let npd = match (partition_path, scenario) {
            (Some(path), None) => {
                if fraction.is_some() || npd_seed.is_some() {
                    return Err(ConfigError::Invalid(
                        "`fraction`/`npd_seed` only apply to generated scenarios".into(),
                    ));
                }
                Some(NpdSource::File(path))
            }
            (None, Some(scenario)) => {
                let fraction = fraction
                    .ok_or_else(|| ConfigError::Invalid("scenario needs a `fraction`".into()))?;
                Some(NpdSource::Generated {
                    scenario,
                    fraction,
                    seed: npd_seed.unwrap_or(0),
                })
            }
            (Some(_), Some(_)) => {
                return Err(ConfigError::Invalid(
                    "set either `partition` or `scenario`, not both".into(),
                ))
            }
            (None, None) => None,
        };

        if !strategies_set {
            return Err(ConfigError::Invalid("`strategies` is required".into()));
        }
        Ok(Self {
            population,
            npd,
            simulation: sim,
        })
    }

    pub fn from_path(path: &std::path::Path) -> Result<(Self, Vec<u8>), ConfigError> {
        let bytes = std::fs::read(path)?;
        let text = String::from_utf8_lossy(&bytes).to_string();
        let spec = Self::parse(&text)?;
        Ok((spec, bytes))
    }
}

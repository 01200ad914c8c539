//! Nonprobability-data generation for simulation studies.
//!
//! Produces per-unit response propensities under several selection-bias
//! scenarios, deterministic cutoff partitions, and the rejection-sampling
//! allocation that admits units to the register subset A until a target
//! share of the population is covered. Units with zero propensity can never
//! enter A, which is how the missing-not-at-random scenarios are built.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::population::{fmt_f64, Partition, Population};

#[derive(Debug, Error)]
pub enum NpdError {
    #[error("scenario {0:?} is not recognized (expected sim1 or k1..k8)")]
    UnknownScenario(String),
    #[error("scenario k{k} does not generate propensities")]
    DeterministicScenario { k: u8 },
    #[error("propensity generation needs at least {min} units, got {got}")]
    TooFewUnits { min: usize, got: usize },
    #[error("cutoff level {l} out of range 1..=9")]
    BadCutoffLevel { l: u8 },
    #[error("target share {fraction} out of range (0, 1)")]
    BadFraction { fraction: f64 },
    #[error("infeasible allocation: {have} units have positive propensity but {need} are needed")]
    Infeasible { have: usize, need: usize },
    #[error("allocation stalled after {attempts} admission trials")]
    Stalled { attempts: u64 },
    #[error("propensity file: line {line}: {reason}")]
    BadPropensityFile { line: u64, reason: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Scenario label for generated nonprobability data.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scenario {
    /// Propensity rising with the study variable via decile caps.
    Sim1,
    /// Numbered scenarios: k1/k2 deterministic cutoffs, k3..k8 propensities.
    K(u8),
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, NpdError> {
        match text.trim().to_ascii_lowercase().as_str() {
            "sim1" => Ok(Scenario::Sim1),
            s if s.len() == 2 && s.starts_with('k') => {
                let k: u8 = s[1..]
                    .parse()
                    .map_err(|_| NpdError::UnknownScenario(text.into()))?;
                if (1..=8).contains(&k) {
                    Ok(Scenario::K(k))
                } else {
                    Err(NpdError::UnknownScenario(text.into()))
                }
            }
            _ => Err(NpdError::UnknownScenario(text.into())),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Scenario::Sim1 => "sim1".into(),
            Scenario::K(k) => format!("k{k}"),
        }
    }

    /// Cutoff scenarios carry no propensity.
    pub fn is_deterministic(&self) -> bool {
        matches!(self, Scenario::K(1) | Scenario::K(2))
    }
}

/// Per-unit probabilities of entering the nonprobability set, aligned with
/// the population frame.
#[derive(Clone, Debug)]
pub struct Propensity {
    pub scenario: Scenario,
    theta: Vec<f64>,
}

impl Propensity {
    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn save_csv_writer<W: Write>(&self, writer: W, pop: &Population) -> Result<(), NpdError> {
        let mut csv = csv::Writer::from_writer(writer);
        csv.write_record(["id", "theta"])?;
        for row in 0..pop.len() {
            csv.write_record([pop.id_at(row).to_string(), fmt_f64(self.theta[row])])?;
        }
        csv.flush()?;
        Ok(())
    }

    pub fn save_csv_path<P: AsRef<Path>>(&self, path: P, pop: &Population) -> Result<(), NpdError> {
        let file = std::fs::File::create(path)?;
        self.save_csv_writer(file, pop)
    }

    pub fn from_csv_reader<R: Read>(
        reader: R,
        pop: &Population,
        scenario: Scenario,
    ) -> Result<Self, NpdError> {
        let mut csv = csv::ReaderBuilder::new().from_reader(reader);
        let mut theta = vec![f64::NAN; pop.len()];
        for record in csv.records() {
            let record = record?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            let id: u64 = record[0]
                .trim()
                .parse()
                .map_err(|_| NpdError::BadPropensityFile {
                    line,
                    reason: format!("bad id {:?}", &record[0]),
                })?;
            let row = pop.row_of(id).ok_or_else(|| NpdError::BadPropensityFile {
                line,
                reason: format!("id {id} not in population"),
            })?;
            let value: f64 = record[1]
                .trim()
                .parse()
                .map_err(|_| NpdError::BadPropensityFile {
                    line,
                    reason: format!("bad theta {:?}", &record[1]),
                })?;
            theta[row] = value;
        }
        if theta.iter().any(|v| v.is_nan()) {
            return Err(NpdError::BadPropensityFile {
                line: 0,
                reason: "file does not cover every unit".into(),
            });
        }
        Ok(Self { scenario, theta })
    }
}

/// Rank-based equal-count decile of each unit's study value: deciles 1..=10,
/// ties broken by id ascending.
fn y_deciles(pop: &Population) -> Vec<u8> {
    let n = pop.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        pop.y_at(a)
            .partial_cmp(&pop.y_at(b))
            .expect("finite y")
            .then(pop.id_at(a).cmp(&pop.id_at(b)))
    });
    let mut decile = vec![0u8; n];
    for (rank, &row) in order.iter().enumerate() {
        decile[row] = (rank * 10 / n) as u8 + 1;
    }
    decile
}

/// Rank of each unit's study value rescaled to [0, 1], ties by id ascending.
fn y_ranks_unit_interval(pop: &Population) -> Vec<f64> {
    let n = pop.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        pop.y_at(a)
            .partial_cmp(&pop.y_at(b))
            .expect("finite y")
            .then(pop.id_at(a).cmp(&pop.id_at(b)))
    });
    let mut rank = vec![0.0; n];
    let denom = (n - 1).max(1) as f64;
    for (k, &row) in order.iter().enumerate() {
        rank[row] = k as f64 / denom;
    }
    rank
}

/// Propensity rising with the study variable: `theta_i ~ Uniform(0, 0.1 d)`
/// where d is the unit's y-decile, so caps run linearly from 0.1 (lowest
/// decile) to 1.0 (highest).
pub fn theta_sim1(pop: &Population, rng: &mut ChaCha8Rng) -> Result<Propensity, NpdError> {
    if pop.len() < 10 {
        return Err(NpdError::TooFewUnits {
            min: 10,
            got: pop.len(),
        });
    }
    let deciles = y_deciles(pop);
    let theta = deciles
        .iter()
        .map(|&d| {
            let cap = 0.1 * d as f64;
            rng.random_range(0.0..cap)
        })
        .collect();
    Ok(Propensity {
        scenario: Scenario::Sim1,
        theta,
    })
}

// Named constants of the numbered scenarios.
const V_SHAPE_CEILING: f64 = 0.95;
const V_SHAPE_FLOOR: f64 = 0.01;
const V_SHAPE_NOISE: f64 = 0.05;
const FORCED_ZERO_SHARE: f64 = 0.05;
const SPREAD_CEILING: f64 = 0.95;

/// Propensities for the numbered scenarios k3..k8.
///
/// - k3: same construction as [`theta_sim1`].
/// - k4: `1 - theta_3`, computed from the same stream.
/// - k5: V-shaped in y — distance from the median rescaled to [0, 1], scaled
///   to a 0.95 ceiling with bounded noise and a small positive floor, then a
///   uniformly drawn 5% of units forced to exactly zero.
/// - k6: `1 - theta_5`, except forced zeros stay zero.
/// - k7: `Uniform(0, cap)` with `cap = 0.95 (1 - rank(y))`: wide spread at
///   low y, shrinking to nothing at the top.
/// - k8: `1 - theta_7`.
pub fn theta_scenario(
    pop: &Population,
    k: u8,
    rng: &mut ChaCha8Rng,
) -> Result<Propensity, NpdError> {
    match k {
        1 | 2 => Err(NpdError::DeterministicScenario { k }),
        3 => Ok(Propensity {
            scenario: Scenario::K(3),
            ..theta_sim1(pop, rng)?
        }),
        4 => {
            let base = theta_sim1(pop, rng)?;
            let theta = base.theta.iter().map(|t| 1.0 - t).collect();
            Ok(Propensity {
                scenario: Scenario::K(4),
                theta,
            })
        }
        5 => Ok(theta_v_shape(pop, rng, false)),
        6 => Ok(theta_v_shape(pop, rng, true)),
        7 => Ok(theta_rank_spread(pop, rng, false)),
        8 => Ok(theta_rank_spread(pop, rng, true)),
        _ => Err(NpdError::UnknownScenario(format!("k{k}"))),
    }
}

fn theta_v_shape(pop: &Population, rng: &mut ChaCha8Rng, inverted: bool) -> Propensity {
    let n = pop.len();
    let mut sorted: Vec<f64> = pop.y().to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite y"));
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    };
    let deviations: Vec<f64> = pop.y().iter().map(|&v| (v - median).abs()).collect();
    let max_dev = deviations.iter().cloned().fold(0.0f64, f64::max);

    let mut theta: Vec<f64> = deviations
        .iter()
        .map(|&d| {
            let z = if max_dev > 0.0 { d / max_dev } else { 0.0 };
            let noise = rng.random_range(-V_SHAPE_NOISE..V_SHAPE_NOISE);
            (V_SHAPE_CEILING * z + noise).clamp(V_SHAPE_FLOOR, V_SHAPE_CEILING)
        })
        .collect();

    // forced zeros: a uniformly drawn fixed-size subset, shared between the
    // paired scenarios through the shared stream
    let forced = (FORCED_ZERO_SHARE * n as f64).round() as usize;
    let mut rows: Vec<usize> = (0..n).collect();
    for i in 0..forced.min(n) {
        let j = rng.random_range(i..n);
        rows.swap(i, j);
    }
    if inverted {
        for t in theta.iter_mut() {
            *t = 1.0 - *t;
        }
    }
    for &row in rows.iter().take(forced.min(n)) {
        theta[row] = 0.0;
    }
    let scenario = if inverted {
        Scenario::K(6)
    } else {
        Scenario::K(5)
    };
    Propensity { scenario, theta }
}

fn theta_rank_spread(pop: &Population, rng: &mut ChaCha8Rng, inverted: bool) -> Propensity {
    let ranks = y_ranks_unit_interval(pop);
    let mut theta: Vec<f64> = ranks
        .iter()
        .map(|&r| {
            let cap = SPREAD_CEILING * (1.0 - r);
            if cap > 0.0 {
                rng.random_range(0.0..cap)
            } else {
                0.0
            }
        })
        .collect();
    if inverted {
        for t in theta.iter_mut() {
            *t = 1.0 - *t;
        }
    }
    let scenario = if inverted {
        Scenario::K(8)
    } else {
        Scenario::K(7)
    };
    Propensity { scenario, theta }
}

/// Cutoff direction for the deterministic scenarios.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CutoffDirection {
    /// Highest study values enter A.
    Top,
    /// Lowest study values enter A.
    Bottom,
}

/// Deterministic cutoff partition: the `round(0.1 l N)` units with the
/// highest (or lowest) study values form A; ties break by id ascending.
pub fn cutoff_partition(
    pop: &Population,
    l: u8,
    direction: CutoffDirection,
) -> Result<Partition, NpdError> {
    if !(1..=9).contains(&l) {
        return Err(NpdError::BadCutoffLevel { l });
    }
    let target = (0.1 * l as f64 * pop.len() as f64).round() as usize;
    cutoff_partition_by_count(pop, target, direction)
}

/// Cutoff partition with an explicit target register size.
pub fn cutoff_partition_by_count(
    pop: &Population,
    n_a: usize,
    direction: CutoffDirection,
) -> Result<Partition, NpdError> {
    let n = pop.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        let cmp = pop.y_at(a).partial_cmp(&pop.y_at(b)).expect("finite y");
        let cmp = match direction {
            CutoffDirection::Top => cmp.reverse(),
            CutoffDirection::Bottom => cmp,
        };
        cmp.then(pop.id_at(a).cmp(&pop.id_at(b)))
    });
    let mut delta = vec![false; n];
    for &row in order.iter().take(n_a.min(n)) {
        delta[row] = true;
    }
    Ok(Partition::new(pop, delta).expect("aligned by construction"))
}

/// Stream label of a scenario inside the propensity/allocation domains.
/// Complement pairs (k4 of k3, k6 of k5, k8 of k7) share a label, since each
/// is an elementwise transform of its partner computed on the same stream;
/// this is what makes the paired forced-zero sets coincide.
fn scenario_stream_index(scenario: Scenario) -> u64 {
    match scenario {
        Scenario::Sim1 => 0,
        Scenario::K(k) => (k - (k + 1) % 2) as u64,
    }
}

/// Produce the nonprobability partition for a scenario, plus the propensity
/// when the scenario is propensity-driven. Deterministic in
/// `(population, scenario, fraction, seed)`.
pub fn generate_npd(
    pop: &Population,
    scenario: Scenario,
    fraction: f64,
    seed: u64,
) -> Result<(Partition, Option<Propensity>), NpdError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(NpdError::BadFraction { fraction });
    }
    let index = scenario_stream_index(scenario);
    match scenario {
        Scenario::K(1) | Scenario::K(2) => {
            let target = (fraction * pop.len() as f64).round() as usize;
            let direction = if scenario == Scenario::K(1) {
                CutoffDirection::Top
            } else {
                CutoffDirection::Bottom
            };
            Ok((cutoff_partition_by_count(pop, target, direction)?, None))
        }
        Scenario::Sim1 | Scenario::K(_) => {
            let mut theta_rng =
                crate::rng::stream(seed, crate::rng::StreamDomain::Propensity, index, 0, 0);
            let propensity = match scenario {
                Scenario::Sim1 => theta_sim1(pop, &mut theta_rng)?,
                Scenario::K(k) => theta_scenario(pop, k, &mut theta_rng)?,
            };
            let mut alloc_rng =
                crate::rng::stream(seed, crate::rng::StreamDomain::Allocation, index, 0, 0);
            let partition = allocate_npd(pop, &propensity, fraction, &mut alloc_rng)?;
            Ok((partition, Some(propensity)))
        }
    }
}

/// Stall guard: admission trials per unit of population size before the
/// allocation loop gives up.
const MAX_ATTEMPTS_PER_UNIT: u64 = 1_000_000;

/// Rejection-sampling allocation: repeatedly pick a uniformly random unit
/// not yet in A and admit it with probability `theta_i`, until
/// `round(fraction * N)` units are in A. Unit picks and admission draws
/// interleave on the one stream, so the whole scenario replays from its
/// seeds. Zero-propensity units can never be admitted.
pub fn allocate_npd(
    pop: &Population,
    propensity: &Propensity,
    fraction: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Partition, NpdError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(NpdError::BadFraction { fraction });
    }
    let n = pop.len();
    let theta = propensity.theta();
    let target = (fraction * n as f64).round() as usize;
    let feasible = theta.iter().filter(|&&t| t > 0.0).count();
    if feasible < target {
        return Err(NpdError::Infeasible {
            have: feasible,
            need: target,
        });
    }

    let mut delta = vec![false; n];
    let mut pool: Vec<u32> = (0..n as u32).collect();
    let mut admitted = 0usize;
    let mut attempts = 0u64;
    let max_attempts = MAX_ATTEMPTS_PER_UNIT.saturating_mul(n as u64);
    while admitted < target {
        attempts += 1;
        if attempts > max_attempts {
            return Err(NpdError::Stalled { attempts });
        }
        let pick = rng.random_range(0..pool.len());
        let row = pool[pick] as usize;
        let u: f64 = rng.random();
        if u < theta[row] {
            delta[row] = true;
            admitted += 1;
            pool.swap_remove(pick);
        }
    }
    Ok(Partition::new(pop, delta).expect("aligned by construction"))
}

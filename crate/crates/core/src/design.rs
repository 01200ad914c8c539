//! Simple random sampling without replacement over a frame.
//!
//! A frame is either the whole population U or the complement B of a
//! partition. Samples carry their frame size and size n, from which the SRS
//! first- and second-order inclusion probabilities follow in closed form.
//! Drawing uses a partial Fisher-Yates shuffle (exact uniform size-n
//! subsets); exhaustive enumeration of all subsets backs the unbiasedness
//! oracles.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::population::{Partition, Population};

/// Default cap on the number of enumerated samples.
pub const DEFAULT_ENUMERATION_CAP: u128 = 1_000_000;

#[derive(Debug, Error)]
pub enum DesignError {
    #[error("sample size {n} out of range 1..={frame}")]
    SampleSizeOutOfRange { n: usize, frame: usize },
    #[error("second-order inclusion probabilities need n >= 2, got {n}")]
    NeedsTwo { n: usize },
    #[error("enumeration of C({frame}, {n}) samples exceeds cap {cap}")]
    EnumerationCapExceeded { frame: usize, n: usize, cap: u128 },
    #[error("frame is empty")]
    EmptyFrame,
    #[error("sample contains a repeated unit (frame row {row})")]
    DuplicateUnit { row: u32 },
}

/// Which frame a sample was drawn from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FrameKind {
    /// The whole population U.
    Population,
    /// The complement B of the register subset.
    Complement,
}

impl FrameKind {
    pub fn label(&self) -> &'static str {
        match self {
            FrameKind::Population => "U",
            FrameKind::Complement => "B",
        }
    }
}

/// An ordered sampling frame: population rows in frame order.
#[derive(Clone, Debug)]
pub struct Frame {
    kind: FrameKind,
    rows: Vec<u32>,
}

impl Frame {
    /// The whole population as a frame.
    pub fn population(pop: &Population) -> Self {
        Self {
            kind: FrameKind::Population,
            rows: (0..pop.len() as u32).collect(),
        }
    }

    /// The complement B of the register subset as a frame.
    pub fn complement(partition: &Partition) -> Self {
        Self {
            kind: FrameKind::Complement,
            rows: partition.b_rows(),
        }
    }

    pub fn kind(&self) -> FrameKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Population rows of the frame members, in frame order.
    pub fn rows(&self) -> &[u32] {
        &self.rows
    }

    /// Member ids in frame order.
    pub fn ids(&self, pop: &Population) -> Vec<u64> {
        self.rows.iter().map(|&r| pop.id_at(r as usize)).collect()
    }
}

/// A drawn SRS sample: distinct population rows plus the design quantities
/// needed for estimation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sample {
    kind: FrameKind,
    frame_size: usize,
    /// Population rows of the sampled units, ascending.
    rows: Vec<u32>,
}

impl Sample {
    pub fn new(
        kind: FrameKind,
        frame_size: usize,
        mut rows: Vec<u32>,
    ) -> Result<Self, DesignError> {
        let n = rows.len();
        if n == 0 || n > frame_size {
            return Err(DesignError::SampleSizeOutOfRange {
                n,
                frame: frame_size,
            });
        }
        rows.sort_unstable();
        if let Some(pair) = rows.windows(2).find(|pair| pair[0] == pair[1]) {
            return Err(DesignError::DuplicateUnit { row: pair[0] });
        }
        Ok(Self {
            kind,
            frame_size,
            rows,
        })
    }

    pub fn kind(&self) -> FrameKind {
        self.kind
    }

    pub fn frame_size(&self) -> usize {
        self.frame_size
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[u32] {
        &self.rows
    }

    pub fn ids(&self, pop: &Population) -> Vec<u64> {
        self.rows.iter().map(|&r| pop.id_at(r as usize)).collect()
    }

    /// Study values of the sampled units, in sample order.
    pub fn y_values(&self, pop: &Population) -> Vec<f64> {
        self.rows.iter().map(|&r| pop.y_at(r as usize)).collect()
    }

    /// First-order inclusion probability, constant n/N under SRS.
    pub fn pi(&self) -> f64 {
        self.rows.len() as f64 / self.frame_size as f64
    }

    /// Second-order inclusion probability for two units; `same_unit` selects
    /// the diagonal, where it equals the first-order probability.
    pub fn pi2(&self, same_unit: bool) -> Result<f64, DesignError> {
        if same_unit {
            return Ok(self.pi());
        }
        srs_second_order(self.frame_size, self.rows.len())
    }

    /// True when the sample is a census of its frame.
    pub fn is_census(&self) -> bool {
        self.rows.len() == self.frame_size
    }
}

/// SRS first-order inclusion probability n/N.
pub fn srs_first_order(frame_size: usize, n: usize) -> Result<f64, DesignError> {
    if n == 0 || n > frame_size {
        return Err(DesignError::SampleSizeOutOfRange {
            n,
            frame: frame_size,
        });
    }
    Ok(n as f64 / frame_size as f64)
}

/// SRS second-order inclusion probability n(n-1) / (N(N-1)) for distinct
/// units. Undefined (and refused) for n < 2: joint probabilities vanish and
/// variance estimation is impossible.
pub fn srs_second_order(frame_size: usize, n: usize) -> Result<f64, DesignError> {
    if n < 2 {
        return Err(DesignError::NeedsTwo { n });
    }
    if n > frame_size {
        return Err(DesignError::SampleSizeOutOfRange {
            n,
            frame: frame_size,
        });
    }
    Ok((n * (n - 1)) as f64 / (frame_size * (frame_size - 1)) as f64)
}

/// Design covariance kernel `pi_ij - pi_i * pi_j`.
pub fn delta(pi_i: f64, pi_j: f64, pi_ij: f64) -> f64 {
    pi_ij - pi_i * pi_j
}

/// Draw a uniform size-n subset of the frame via partial Fisher-Yates.
/// Deterministic for a fixed rng state.
pub fn draw_srs(frame: &Frame, n: usize, rng: &mut ChaCha8Rng) -> Result<Sample, DesignError> {
    if frame.is_empty() {
        return Err(DesignError::EmptyFrame);
    }
    if n == 0 || n > frame.len() {
        return Err(DesignError::SampleSizeOutOfRange {
            n,
            frame: frame.len(),
        });
    }
    let mut pool: Vec<u32> = frame.rows.clone();
    for i in 0..n {
        let j = rng.random_range(i..pool.len());
        pool.swap(i, j);
    }
    pool.truncate(n);
    Sample::new(frame.kind, frame.len(), pool)
}

/// Binomial coefficient, saturating at `u128::MAX`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        match acc.checked_mul((n - i) as u128) {
            Some(v) => acc = v / (i as u128 + 1),
            None => return u128::MAX,
        }
    }
    acc
}

/// Lexicographic enumeration of every size-n subset of a frame, each with
/// design probability 1 / C(frame, n).
pub struct SampleEnumeration<'a> {
    frame: &'a Frame,
    n: usize,
    /// Indices into the frame's row list; `None` once exhausted.
    state: Option<Vec<usize>>,
}

impl<'a> SampleEnumeration<'a> {
    pub fn new(frame: &'a Frame, n: usize) -> Result<Self, DesignError> {
        Self::with_cap(frame, n, DEFAULT_ENUMERATION_CAP)
    }

    pub fn with_cap(frame: &'a Frame, n: usize, cap: u128) -> Result<Self, DesignError> {
        if n == 0 || n > frame.len() {
            return Err(DesignError::SampleSizeOutOfRange {
                n,
                frame: frame.len(),
            });
        }
        let count = binomial(frame.len(), n);
        if count > cap {
            return Err(DesignError::EnumerationCapExceeded {
                frame: frame.len(),
                n,
                cap,
            });
        }
        Ok(Self {
            frame,
            n,
            state: Some((0..n).collect()),
        })
    }

    /// Number of samples the enumeration will yield.
    pub fn count(&self) -> u128 {
        binomial(self.frame.len(), self.n)
    }
}

impl Iterator for SampleEnumeration<'_> {
    type Item = Sample;

    fn next(&mut self) -> Option<Self::Item> {
        let state = self.state.as_mut()?;
        let rows: Vec<u32> = state.iter().map(|&i| self.frame.rows[i]).collect();
        let sample = Sample {
            kind: self.frame.kind,
            frame_size: self.frame.len(),
            rows,
        };

        // advance to the next combination
        let size = self.frame.len();
        let n = self.n;
        let mut i = n;
        loop {
            if i == 0 {
                self.state = None;
                break;
            }
            i -= 1;
            if state[i] != i + size - n {
                state[i] += 1;
                for j in i + 1..n {
                    state[j] = state[j - 1] + 1;
                }
                break;
            }
        }
        Some(sample)
    }
}

//! Observation sequences, evidence paths, randomization streams and the
//! element-wise combination rule.
//!
//! An evidence path is a trajectory `S_0 = 1, S_1, ..., S_N` of nonnegative
//! capital. Element-wise testing runs one test martingale per null parameter
//! value and regards the null as falsified to the degree of the smallest of
//! them, `S_n = inf_θ S^θ_n`.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Upper cap applied to every evidence value.
pub const EVIDENCE_CAP: f64 = 1e300;

/// Clamp a raw evidence value into `[0, EVIDENCE_CAP]`.
#[inline]
pub fn clamp_evidence(value: f64) -> f64 {
    if value.is_nan() || value <= 0.0 {
        0.0
    } else {
        value.min(EVIDENCE_CAP)
    }
}

/// Evidence value from its natural logarithm, with the same clamping.
#[inline]
pub fn evidence_from_ln(ln_value: f64) -> f64 {
    if ln_value == f64::NEG_INFINITY || ln_value.is_nan() {
        0.0
    } else if ln_value >= EVIDENCE_CAP.ln() {
        EVIDENCE_CAP
    } else {
        ln_value.exp()
    }
}

// ---------------------------------------------------------------------------
// Observation sequences
// ---------------------------------------------------------------------------

/// A sequence of binary observations.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct BinarySequence(Vec<u8>);

impl BinarySequence {
    pub fn new(values: Vec<u8>) -> Result<Self> {
        if let Some(&bad) = values.iter().find(|&&v| v > 1) {
            return Err(Error::InvalidObservation {
                value: bad.to_string(),
                reason: "binary observations must be 0 or 1",
            });
        }
        Ok(Self(values))
    }

    pub fn from_bools(values: impl IntoIterator<Item = bool>) -> Self {
        Self(values.into_iter().map(u8::from).collect())
    }

    /// The sequence whose `len` bits are those of `index`, first observation
    /// in the most significant position.
    pub fn from_index(index: usize, len: usize) -> Self {
        Self((0..len).map(|i| ((index >> (len - 1 - i)) & 1) as u8).collect())
    }

    /// Inverse of [`BinarySequence::from_index`].
    pub fn index(&self) -> usize {
        self.0.iter().fold(0usize, |acc, &z| (acc << 1) | z as usize)
    }

    pub fn values(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Number of ones, `K`.
    pub fn ones(&self) -> usize {
        self.0.iter().map(|&z| z as usize).sum()
    }

    /// Number of ones among the first `n` observations.
    pub fn ones_in_prefix(&self, n: usize) -> usize {
        self.0[..n.min(self.len())].iter().map(|&z| z as usize).sum()
    }
}

impl fmt::Display for BinarySequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &z in &self.0 {
            f.write_str(if z == 1 { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for BinarySequence {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.trim()
            .chars()
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                other => Err(Error::InvalidObservation {
                    value: other.to_string(),
                    reason: "binary observations must be 0 or 1",
                }),
            })
            .collect::<Result<Vec<u8>>>()
            .map(Self)
    }
}

/// A sequence of finite real observations.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RealSequence(Vec<f64>);

impl RealSequence {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(&bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidObservation {
                value: bad.to_string(),
                reason: "real observations must be finite",
            });
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

// ---------------------------------------------------------------------------
// Evidence paths
// ---------------------------------------------------------------------------

/// A nonnegative evidence trajectory indexed by time `0..=N`, starting at 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidencePath(Vec<f64>);

impl EvidencePath {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        match values.first() {
            None => return Err(Error::InvalidPath("path must contain S_0".into())),
            Some(&s0) if s0 != 1.0 => {
                return Err(Error::InvalidPath(format!("S_0 must be 1, got {s0}")))
            }
            _ => {}
        }
        if let Some((n, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0 && **v <= EVIDENCE_CAP))
        {
            return Err(Error::InvalidPath(format!("S_{n} = {v} is not in [0, 1e300]")));
        }
        Ok(Self(values))
    }

    /// The trivial path `(1)` at horizon 0.
    pub fn initial() -> Self {
        Self(vec![1.0])
    }

    /// Constant path of ones up to `horizon`.
    pub fn ones(horizon: usize) -> Self {
        Self(vec![1.0; horizon + 1])
    }

    /// Append the next value, clamped into the admissible range.
    pub fn push(&mut self, value: f64) {
        self.0.push(clamp_evidence(value));
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    /// Largest time index `N`.
    pub fn horizon(&self) -> usize {
        self.0.len() - 1
    }

    pub fn at(&self, n: usize) -> f64 {
        self.0[n]
    }

    pub fn last(&self) -> f64 {
        *self.0.last().expect("evidence path always holds S_0")
    }
}

/// Element-wise combination: the pointwise infimum over parameter values of
/// their evidence paths, truncated at `horizon`.
pub fn elementwise_combine<'a, I>(paths: I, horizon: usize) -> Result<EvidencePath>
where
    I: IntoIterator<Item = &'a EvidencePath>,
{
    let mut combined: Option<Vec<f64>> = None;
    for path in paths {
        if path.0.len() < horizon + 1 {
            return Err(Error::RaggedPaths {
                len: path.0.len(),
                horizon,
            });
        }
        let values = &path.0[..=horizon];
        match combined.as_mut() {
            None => combined = Some(values.to_vec()),
            Some(acc) => acc
                .iter_mut()
                .zip(values)
                .for_each(|(a, &v)| *a = a.min(v)),
        }
    }
    combined.map(EvidencePath).ok_or(Error::NoParameterValues)
}

// ---------------------------------------------------------------------------
// Monte Carlo e-variable check
// ---------------------------------------------------------------------------

/// Sample mean and standard error of a batch of final evidence values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
}

impl CalibrationReport {
    /// `|mean - 1| <= k * std_error`.
    pub fn within(&self, k: f64) -> bool {
        (self.mean - 1.0).abs() <= k * self.std_error
    }

    /// Distance of the mean from 1 in standard errors.
    pub fn z_score(&self) -> f64 {
        let d = self.mean - 1.0;
        if d == 0.0 {
            0.0
        } else {
            d / self.std_error
        }
    }
}

/// Mean and standard error (sample standard deviation over `sqrt(n)`) of
/// final values drawn under a null sampler.
pub fn verify_evariable(final_values: &[f64]) -> Result<CalibrationReport> {
    if final_values.is_empty() {
        return Err(Error::Empty("final values"));
    }
    if let Some(&bad) = final_values.iter().find(|v| v.is_nan() || **v < 0.0) {
        return Err(Error::InvalidValue {
            what: "final evidence value",
            value: bad,
        });
    }
    let n = final_values.len();
    let mean = final_values.iter().sum::<f64>() / n as f64;
    let std_error = if n < 2 {
        0.0
    } else {
        let ss: f64 = final_values.iter().map(|v| (v - mean).powi(2)).sum();
        (ss / (n - 1) as f64).sqrt() / (n as f64).sqrt()
    };
    Ok(CalibrationReport { mean, std_error, n })
}

// ---------------------------------------------------------------------------
// Randomization
// ---------------------------------------------------------------------------

/// A reproducible stream of uniform draws in `[0, 1)`.
///
/// Backed by ChaCha12. The 256-bit key is built from `(seed, lane)` and the
/// ChaCha stream number is `stream_id`, so every `(seed, lane, stream_id)`
/// triple addresses its own independent keystream. Lanes separate the roles
/// a single replication needs (dataset, τ for BK, τ for mean BK).
#[derive(Debug, Clone)]
pub struct RandomizationStream {
    seed: u64,
    lane: u64,
    stream_id: u64,
    rng: ChaCha12Rng,
}

impl RandomizationStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self::with_lane(seed, 0, stream_id)
    }

    pub fn with_lane(seed: u64, lane: u64, stream_id: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        key[8..16].copy_from_slice(&lane.to_le_bytes());
        let mut rng = ChaCha12Rng::from_seed(key);
        rng.set_stream(stream_id);
        Self {
            seed,
            lane,
            stream_id,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn lane(&self) -> u64 {
        self.lane
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Next draw, uniform on `[0, 1)` with 53 random bits.
    pub fn next_uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Next Bernoulli draw by inverse transform: 1 iff the uniform is `< p`.
    pub fn next_bernoulli(&mut self, p: f64) -> u8 {
        u8::from(self.next_uniform() < p)
    }
}

// ---------------------------------------------------------------------------
// Parameter grids
// ---------------------------------------------------------------------------

/// Finite, strictly increasing set of null parameter values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaGrid(Vec<f64>);

impl ThetaGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidGrid("grid is empty".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid("grid values must be finite".into()));
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidGrid("grid must be strictly increasing".into()));
        }
        Ok(Self(values))
    }

    /// `points` equally spaced values from 0 to 1 inclusive.
    pub fn unit_interval(points: usize) -> Result<Self> {
        match points {
            0 => Err(Error::InvalidGrid("grid is empty".into())),
            1 => Self::new(vec![0.5]),
            _ => Self::new(
                (0..points)
                    .map(|i| i as f64 / (points - 1) as f64)
                    .collect(),
            ),
        }
    }

    /// The default Bernoulli grid `{0, 0.01, ..., 1}`.
    pub fn bernoulli_default() -> Self {
        Self::unit_interval(101).expect("101 points form a valid grid")
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

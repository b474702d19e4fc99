//! Bayes–Kelly conformal test martingale for a Bernoulli changepoint
//! alternative.
//!
//! The martingale bets, at every step, the conditional density of the next
//! conformal p-value under the alternative `Q`, given the p-values seen so
//! far. Under the exchangeability null the p-values are i.i.d. uniform, so any
//! such density is a fair bet and the capital `S_n = Π f_i(p_i)` is a test
//! martingale. Against `Q` the bet is Kelly-optimal.
//!
//! # The predictive density
//!
//! Under `Q` the observations are independent with `P(z_n = 1) = q_n`, where
//! `q_n = π_0` for `n ≤ N_0` and `π_1` afterwards. With identity conformity,
//! if `k` ones were seen before step `n`:
//!
//! - `z_n = 1` (probability `q_n`) puts `p_n` uniformly on `[(n-k-1)/n, 1]`,
//!   density `n / (k+1)`;
//! - `z_n = 0` (probability `1 - q_n`) puts `p_n` uniformly on `[0, (n-k)/n]`,
//!   density `n / (n-k)`.
//!
//! The p-values depend on the past only through the running count `k`, so an
//! exact Bayes filter over `k` ([`CountPosterior`]) gives the predictive
//! density
//!
//! ```text
//! f_n(p) = Σ_k w(k) [ q_n n/(k+1) 1{p ≥ (n-k-1)/n} + (1-q_n) n/(n-k) 1{p < (n-k)/n} ]
//! ```
//!
//! which is constant on each cell `[j/n, (j+1)/n)`. Branch intervals are
//! half-open with the last cell closed at 1, so p-values on a boundary (a
//! probability-zero event) resolve deterministically.
//!
//! The changepoint is fixed at `N_0`.

use serde::{Deserialize, Serialize};

use crate::compression::{exch_p_value, ExchangeabilitySummary, PValue};
use crate::evidence::{evidence_from_ln, BinarySequence, EvidencePath, RandomizationStream};
use crate::{Error, Result};

/// First `n0` observations Bernoulli(`pi0`), next `n1` Bernoulli(`pi1`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChangepointAlternative {
    pub n0: usize,
    pub n1: usize,
    pub pi0: f64,
    pub pi1: f64,
}

impl Default for ChangepointAlternative {
    fn default() -> Self {
        Self {
            n0: 10,
            n1: 10,
            pi0: 0.1,
            pi1: 0.9,
        }
    }
}

impl ChangepointAlternative {
    pub fn new(n0: usize, n1: usize, pi0: f64, pi1: f64) -> Result<Self> {
        let alt = Self { n0, n1, pi0, pi1 };
        alt.validate()?;
        Ok(alt)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n0 + self.n1 == 0 {
            return Err(Error::InvalidAlternative("N0 + N1 must be at least 1".into()));
        }
        for (name, p) in [("pi0", self.pi0), ("pi1", self.pi1)] {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::InvalidAlternative(format!("{name} = {p} is not in (0, 1)")));
            }
        }
        Ok(())
    }

    /// Total number of observations `N = N0 + N1`.
    pub fn horizon(&self) -> usize {
        self.n0 + self.n1
    }

    /// Probability of a one at step `n` (1-based).
    pub fn one_probability(&self, n: usize) -> f64 {
        if n <= self.n0 {
            self.pi0
        } else {
            self.pi1
        }
    }

    /// Odds ratio `((1 - π0) π1) / (π0 (1 - π1))` of a one after versus before the change.
    pub fn odds_ratio(&self) -> f64 {
        ((1.0 - self.pi0) * self.pi1) / (self.pi0 * (1.0 - self.pi1))
    }
}

/// Posterior over the number of ones seen so far.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountPosterior {
    weights: Vec<f64>,
}

impl Default for CountPosterior {
    fn default() -> Self {
        Self::initial()
    }
}

impl CountPosterior {
    /// Before any observation the count is 0.
    pub fn initial() -> Self {
        Self { weights: vec![1.0] }
    }

    /// Weights indexed by count `k = 0..=n`; normalized on construction.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Config("posterior weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::Config("posterior weights sum to zero".into()));
        }
        Ok(Self {
            weights: weights.into_iter().map(|w| w / total).collect(),
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Number of observations this posterior has absorbed.
    pub fn steps(&self) -> usize {
        self.weights.len() - 1
    }

    pub fn weight(&self, k: usize) -> f64 {
        self.weights.get(k).copied().unwrap_or(0.0)
    }

    /// Most probable count.
    pub fn mode(&self) -> usize {
        self.weights
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(k, _)| k)
            .unwrap_or(0)
    }
}

/// Piecewise-constant probability density on `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BettingDensity {
    breakpoints: Vec<f64>,
    levels: Vec<f64>,
}

impl BettingDensity {
    pub fn new(breakpoints: Vec<f64>, levels: Vec<f64>) -> Result<Self> {
        let ok = breakpoints.len() == levels.len() + 1
            && breakpoints.first() == Some(&0.0)
            && breakpoints.last() == Some(&1.0)
            && breakpoints.windows(2).all(|w| w[0] < w[1])
            && levels.iter().all(|l| l.is_finite() && *l >= 0.0);
        if !ok {
            return Err(Error::Config("malformed piecewise-constant density".into()));
        }
        Ok(Self { breakpoints, levels })
    }

    pub fn uniform() -> Self {
        Self {
            breakpoints: vec![0.0, 1.0],
            levels: vec![1.0],
        }
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    /// `Σ level · width`.
    pub fn integral(&self) -> f64 {
        self.levels
            .iter()
            .zip(self.breakpoints.windows(2))
            .map(|(l, w)| l * (w[1] - w[0]))
            .sum()
    }

    /// Density at `p`: cells are `[lo, hi)`, the last one closed at 1.
    pub fn evaluate(&self, p: f64) -> f64 {
        if !(0.0..=1.0).contains(&p) {
            return 0.0;
        }
        let cell = self.breakpoints[1..self.breakpoints.len() - 1].partition_point(|&b| b <= p);
        self.levels[cell]
    }
}

/// Index of the cell `[j/n, (j+1)/n)` containing `p`, last cell closed.
///
/// Boundaries are computed as `j as f64 / n as f64`, the same expression the
/// p-value map uses, so p-values landing exactly on a branch endpoint are
/// classified consistently.
fn cell_index(p: f64, n: usize) -> usize {
    let nf = n as f64;
    let mut j = ((p * nf).floor().max(0.0) as usize).min(n - 1);
    while j > 0 && p < j as f64 / nf {
        j -= 1;
    }
    while j + 1 < n && p >= (j + 1) as f64 / nf {
        j += 1;
    }
    j
}

fn check_step(post: &CountPosterior, n: usize, alt: &ChangepointAlternative) -> Result<()> {
    let horizon = alt.horizon();
    if n == 0 || n > horizon {
        return Err(Error::StepOutOfRange { step: n, horizon });
    }
    if post.steps() != n - 1 {
        return Err(Error::Config(format!(
            "posterior has absorbed {} observations, step {n} needs {}",
            post.steps(),
            n - 1
        )));
    }
    Ok(())
}

/// Density of the `n`-th p-value under the alternative given the posterior
/// over the count after `n - 1` observations.
pub fn predictive_density(
    post: &CountPosterior,
    n: usize,
    alt: &ChangepointAlternative,
) -> Result<BettingDensity> {
    check_step(post, n, alt)?;
    let q = alt.one_probability(n);
    let nf = n as f64;
    // Difference array over cells: the z = 1 branch of count k covers cells
    // j >= n-k-1, the z = 0 branch covers cells j <= n-k-1.
    let mut diff = vec![0.0; n + 1];
    for (k, &w) in post.weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let split = n - k - 1;
        let one = w * q * nf / (k + 1) as f64;
        let zero = w * (1.0 - q) * nf / (n - k) as f64;
        diff[split] += one;
        diff[n] -= one;
        diff[0] += zero;
        diff[split + 1] -= zero;
    }
    let mut levels = Vec::with_capacity(n);
    let mut acc = 0.0;
    for d in &diff[..n] {
        acc += d;
        levels.push(acc.max(0.0));
    }
    let breakpoints = (0..=n).map(|j| j as f64 / nf).collect();
    Ok(BettingDensity { breakpoints, levels })
}

/// One Bayes filter step: returns the updated posterior and the bet
/// `f_n(p_n)`.
///
/// If `p_n` falls outside every branch with positive weight the bet is 0; the
/// posterior is then propagated without conditioning on `p_n`.
pub fn bk_update(
    post: &CountPosterior,
    p_n: PValue,
    n: usize,
    alt: &ChangepointAlternative,
) -> Result<(CountPosterior, f64)> {
    check_step(post, n, alt)?;
    let q = alt.one_probability(n);
    let nf = n as f64;
    let cell = cell_index(p_n.value(), n);
    let mut next = vec![0.0; n + 1];
    let mut bet = 0.0;
    for (k, &w) in post.weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let split = n - k - 1;
        if cell >= split {
            let mass = w * q * nf / (k + 1) as f64;
            next[k + 1] += mass;
            bet += mass;
        }
        if cell <= split {
            let mass = w * (1.0 - q) * nf / (n - k) as f64;
            next[k] += mass;
            bet += mass;
        }
    }
    if bet > 0.0 {
        next.iter_mut().for_each(|w| *w /= bet);
    } else {
        next.iter_mut().for_each(|w| *w = 0.0);
        for (k, &w) in post.weights.iter().enumerate() {
            next[k + 1] += w * q;
            next[k] += w * (1.0 - q);
        }
    }
    debug_assert!((next.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    Ok((CountPosterior { weights: next }, bet))
}

/// Per-step record of a BK run.
#[derive(Debug, Clone)]
pub struct BkTrace {
    pub path: EvidencePath,
    pub p_values: Vec<PValue>,
    pub densities: Vec<BettingDensity>,
    pub posteriors: Vec<CountPosterior>,
}

fn check_data(data: &BinarySequence, alt: &ChangepointAlternative) -> Result<()> {
    alt.validate()?;
    if data.len() != alt.horizon() {
        return Err(Error::LengthMismatch {
            expected: alt.horizon(),
            got: data.len(),
        });
    }
    Ok(())
}

/// Run the BK martingale over `data`, one τ draw per step, returning
/// `S_0, ..., S_N`.
pub fn bk_run(
    data: &BinarySequence,
    taus: &mut RandomizationStream,
    alt: &ChangepointAlternative,
) -> Result<EvidencePath> {
    check_data(data, alt)?;
    let mut summary = ExchangeabilitySummary::default();
    let mut post = CountPosterior::initial();
    let mut ln_capital = 0.0f64;
    let mut path = EvidencePath::initial();
    for (i, &z) in data.values().iter().enumerate() {
        let p = exch_p_value(summary, z, taus.next_uniform())?;
        let (next, bet) = bk_update(&post, p, i + 1, alt)?;
        ln_capital += bet.ln();
        path.push(evidence_from_ln(ln_capital));
        summary = summary_step(summary, z);
        post = next;
    }
    Ok(path)
}

fn summary_step(s: ExchangeabilitySummary, z: u8) -> ExchangeabilitySummary {
    crate::compression::exch_forward(s, z)
}

/// [`bk_run`] that also records p-values, full predictive densities and
/// posteriors at every step.
pub fn bk_trace(
    data: &BinarySequence,
    taus: &mut RandomizationStream,
    alt: &ChangepointAlternative,
) -> Result<BkTrace> {
    check_data(data, alt)?;
    let mut summary = ExchangeabilitySummary::default();
    let mut post = CountPosterior::initial();
    let mut ln_capital = 0.0f64;
    let mut trace = BkTrace {
        path: EvidencePath::initial(),
        p_values: Vec::with_capacity(data.len()),
        densities: Vec::with_capacity(data.len()),
        posteriors: vec![post.clone()],
    };
    for (i, &z) in data.values().iter().enumerate() {
        let n = i + 1;
        let p = exch_p_value(summary, z, taus.next_uniform())?;
        let density = predictive_density(&post, n, alt)?;
        let (next, bet) = bk_update(&post, p, n, alt)?;
        ln_capital += bet.ln();
        trace.path.push(evidence_from_ln(ln_capital));
        trace.p_values.push(p);
        trace.densities.push(density);
        trace.posteriors.push(next.clone());
        summary = summary_step(summary, z);
        post = next;
    }
    Ok(trace)
}

/// Final values of `inner` independent BK runs on the same data.
///
/// Runs consume consecutive blocks of `N` draws from `taus`, so each run sees
/// its own independent τ sequence.
pub fn bk_finals(
    data: &BinarySequence,
    alt: &ChangepointAlternative,
    inner: usize,
    taus: &mut RandomizationStream,
) -> Result<Vec<f64>> {
    if inner == 0 {
        return Err(Error::Config("inner BK count must be at least 1".into()));
    }
    (0..inner)
        .map(|_| bk_run(data, taus, alt).map(|p| p.last()))
        .collect()
}

/// Mean BK: the arithmetic mean of `inner` independent BK final values on
/// the same data, approximating the τ-average of the final capital.
pub fn mean_bk_final(
    data: &BinarySequence,
    alt: &ChangepointAlternative,
    inner: usize,
    taus: &mut RandomizationStream,
) -> Result<f64> {
    let finals = bk_finals(data, alt, inner, taus)?;
    Ok(finals.iter().sum::<f64>() / finals.len() as f64)
}

/// Exact `E_τ[S_N]` on `data`, the quantity mean BK estimates.
///
/// Given the data, the `n`-th p-value is uniform on a union of whole cells
/// `[j/n, (j+1)/n)`: cells `n-k..n` when `z_n = 1`, cells `0..n-k` when
/// `z_n = 0`, with `k` the count including `z_n`. The filter only sees the
/// cell, so the expectation is a finite average over cell paths. Cost grows
/// like `N!` in the worst case; meant for short horizons.
pub fn tau_averaged_final(data: &BinarySequence, alt: &ChangepointAlternative) -> Result<f64> {
    check_data(data, alt)?;
    fn go(
        data: &[u8],
        n: usize,
        ones: usize,
        post: &CountPosterior,
        alt: &ChangepointAlternative,
    ) -> Result<f64> {
        let Some(&z) = data.get(n - 1) else {
            return Ok(1.0);
        };
        let k = ones + z as usize;
        let cells = if z == 1 { n - k..n } else { 0..n - k };
        let width = cells.len() as f64;
        let mut total = 0.0;
        for j in cells {
            let p = PValue::new((j as f64 + 0.5) / n as f64)?;
            let (next, bet) = bk_update(post, p, n, alt)?;
            if bet > 0.0 {
                total += bet * go(data, n + 1, k, &next, alt)?;
            }
        }
        Ok(total / width)
    }
    go(data.values(), 1, 0, &CountPosterior::initial(), alt)
}

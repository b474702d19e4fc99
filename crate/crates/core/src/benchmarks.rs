//! Likelihood-ratio benchmarks for the changepoint alternative and
//! finite-horizon naturalization.
//!
//! All benchmark formulas depend on a binary dataset only through the pair
//! `(k0, k1)` of ones before and after the changepoint, and are accumulated
//! in log space.
//!
//! - Lower benchmark: `Q(z) / sup_θ B_θ(z)`, valid for every θ.
//! - Upper benchmark: `Q(z) / B_0.5(z)`, valid only under `θ = 0.5`.
//! - Batch benchmark: the ratio of the alternative's to the null's conditional
//!   probability of the data given its exchangeability summary `K`,
//!
//! ```text
//! C(N, K) / Σ_{k=(K-N0)+}^{min(K,N1)} C(N0, K-k) C(N1, k) r^{k-k1},
//! r = ((1-π0) π1) / (π0 (1-π1)).
//! ```
//!
//! Naturalization turns any family of final values into a natural-filtration
//! test martingale under `B_θ` by setting `S̃_N = S_N` and averaging
//! backwards, `S̃_n = (1-θ) S̃_{n+1}(·0) + θ S̃_{n+1}(·1)`.

use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_binomial;

use crate::bk::ChangepointAlternative;
use crate::evidence::{evidence_from_ln, BinarySequence, ThetaGrid};
use crate::{Error, Result};

/// Largest horizon for which exhaustive tables are built.
pub const MAX_EXHAUSTIVE_HORIZON: usize = 22;

/// `x ln y` with `0 ln 0 = 0`.
fn xlny(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

fn ln_choose(n: usize, k: usize) -> f64 {
    ln_binomial(n as u64, k as u64)
}

/// Stable `ln Σ exp(x_i)`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Ones before and after the changepoint among the first `len` observations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentCounts {
    /// Observations in the pre-change segment.
    pub n0: usize,
    /// Observations in the post-change segment.
    pub n1: usize,
    pub k0: usize,
    pub k1: usize,
}

impl SegmentCounts {
    pub fn of(data: &BinarySequence, alt: &ChangepointAlternative) -> Self {
        let n = data.len();
        let n0 = n.min(alt.n0);
        let k0 = data.ones_in_prefix(n0);
        Self {
            n0,
            n1: n - n0,
            k0,
            k1: data.ones() - k0,
        }
    }

    pub fn len(&self) -> usize {
        self.n0 + self.n1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn ones(&self) -> usize {
        self.k0 + self.k1
    }
}

/// `ln Q(z_1..z_n)` from the segment counts.
pub fn ln_alternative_probability(c: SegmentCounts, alt: &ChangepointAlternative) -> f64 {
    let (k0, k1) = (c.k0 as f64, c.k1 as f64);
    xlny(k0, alt.pi0)
        + xlny(c.n0 as f64 - k0, 1.0 - alt.pi0)
        + xlny(k1, alt.pi1)
        + xlny(c.n1 as f64 - k1, 1.0 - alt.pi1)
}

/// `ln sup_θ θ^K (1-θ)^{n-K}`, attained at the MLE `θ = K/n`.
pub fn ln_max_null_likelihood(n: usize, ones: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let (nf, k) = (n as f64, ones as f64);
    xlny(k, k / nf) + xlny(nf - k, (nf - k) / nf)
}

fn check_len(data: &BinarySequence, alt: &ChangepointAlternative) -> Result<()> {
    if data.len() > alt.horizon() {
        return Err(Error::LengthMismatch {
            expected: alt.horizon(),
            got: data.len(),
        });
    }
    Ok(())
}

/// Lower benchmark from segment counts.
pub fn lower_benchmark_counts(c: SegmentCounts, alt: &ChangepointAlternative) -> f64 {
    evidence_from_ln(ln_alternative_probability(c, alt) - ln_max_null_likelihood(c.len(), c.ones()))
}

/// Upper benchmark from segment counts.
pub fn upper_benchmark_counts(c: SegmentCounts, alt: &ChangepointAlternative) -> f64 {
    evidence_from_ln(ln_alternative_probability(c, alt) + c.len() as f64 * std::f64::consts::LN_2)
}

/// `inf_θ Q(z) / B_θ(z)` over the observed prefix.
pub fn lower_benchmark(data: &BinarySequence, alt: &ChangepointAlternative) -> Result<f64> {
    check_len(data, alt)?;
    Ok(lower_benchmark_counts(SegmentCounts::of(data, alt), alt))
}

/// `Q(z) / B_0.5(z) = Q(z) 2^n`.
pub fn upper_benchmark(data: &BinarySequence, alt: &ChangepointAlternative) -> Result<f64> {
    check_len(data, alt)?;
    Ok(upper_benchmark_counts(SegmentCounts::of(data, alt), alt))
}

/// Batch benchmark for a full dataset with `total` ones, `post` of them after
/// the changepoint.
pub fn batch_benchmark(total: usize, post: usize, alt: &ChangepointAlternative) -> Result<f64> {
    let (n0, n1) = (alt.n0, alt.n1);
    if post > total.min(n1) || total - post > n0 {
        return Err(Error::BatchPrecondition { total, post });
    }
    let ln_r = alt.odds_ratio().ln();
    let lo = total.saturating_sub(n0);
    let hi = total.min(n1);
    let terms: Vec<f64> = (lo..=hi)
        .map(|k| {
            let shift = k as f64 - post as f64;
            // r^0 = 1 even when r is 0 or infinite.
            let power = if shift == 0.0 { 0.0 } else { shift * ln_r };
            ln_choose(n0, total - k) + ln_choose(n1, k) + power
        })
        .collect();
    Ok(evidence_from_ln(ln_choose(n0 + n1, total) - log_sum_exp(&terms)))
}

/// Lower, upper and batch benchmarks of one full dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkTriple {
    pub lower: f64,
    pub upper: f64,
    pub batch: f64,
}

pub fn benchmark_triple(data: &BinarySequence, alt: &ChangepointAlternative) -> Result<BenchmarkTriple> {
    if data.len() != alt.horizon() {
        return Err(Error::LengthMismatch {
            expected: alt.horizon(),
            got: data.len(),
        });
    }
    let c = SegmentCounts::of(data, alt);
    Ok(BenchmarkTriple {
        lower: lower_benchmark_counts(c, alt),
        upper: upper_benchmark_counts(c, alt),
        batch: batch_benchmark(c.ones(), c.k1, alt)?,
    })
}

// ---------------------------------------------------------------------------
// Naturalization
// ---------------------------------------------------------------------------

fn check_horizon(horizon: usize) -> Result<()> {
    if horizon > MAX_EXHAUSTIVE_HORIZON {
        return Err(Error::HorizonExceeded {
            horizon,
            max: MAX_EXHAUSTIVE_HORIZON,
        });
    }
    Ok(())
}

/// Final values on every binary sequence of length `N`, indexed by
/// [`BinarySequence::index`].
#[derive(Debug, Clone, PartialEq)]
pub struct FinalValueFunction {
    horizon: usize,
    table: Vec<f64>,
}

impl FinalValueFunction {
    pub fn new(horizon: usize, table: Vec<f64>) -> Result<Self> {
        check_horizon(horizon)?;
        if table.len() != 1 << horizon {
            return Err(Error::FinalsTableSize {
                horizon,
                got: table.len(),
            });
        }
        if let Some(&bad) = table.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidValue {
                what: "final value",
                value: bad,
            });
        }
        Ok(Self { horizon, table })
    }

    /// Tabulate `f` over all `2^horizon` sequences.
    pub fn tabulate(horizon: usize, mut f: impl FnMut(&BinarySequence) -> Result<f64>) -> Result<Self> {
        check_horizon(horizon)?;
        let table = (0..1usize << horizon)
            .map(|i| f(&BinarySequence::from_index(i, horizon)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(horizon, table)
    }

    /// Build from `(sequence, value)` pairs covering every sequence exactly once.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (BinarySequence, f64)>) -> Result<Self> {
        let mut horizon = None;
        let mut table: Vec<Option<f64>> = Vec::new();
        for (seq, value) in pairs {
            let n = *horizon.get_or_insert_with(|| seq.len());
            if seq.len() != n {
                return Err(Error::Config(format!(
                    "finals table mixes sequence lengths {n} and {}",
                    seq.len()
                )));
            }
            check_horizon(n)?;
            if table.is_empty() {
                table = vec![None; 1 << n];
            }
            let slot = &mut table[seq.index()];
            if slot.is_some() {
                return Err(Error::Config(format!("duplicate finals entry for {seq}")));
            }
            *slot = Some(value);
        }
        let horizon = horizon.ok_or(Error::Empty("finals table"))?;
        let missing = table.iter().filter(|v| v.is_none()).count();
        if missing > 0 {
            return Err(Error::FinalsTableSize {
                horizon,
                got: table.len() - missing,
            });
        }
        Self::new(horizon, table.into_iter().map(Option::unwrap).collect())
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn get(&self, data: &BinarySequence) -> Result<f64> {
        if data.len() != self.horizon {
            return Err(Error::LengthMismatch {
                expected: self.horizon,
                got: data.len(),
            });
        }
        Ok(self.table[data.index()])
    }

    pub fn values(&self) -> &[f64] {
        &self.table
    }
}

/// Natural test martingale under `B_θ` obtained by backward averaging: one
/// value per prefix of length `0..=N`.
#[derive(Debug, Clone, PartialEq)]
pub struct NaturalizedTree {
    theta: f64,
    /// `levels[n][i]` is the value at the prefix of length `n` with index `i`.
    levels: Vec<Vec<f64>>,
}

impl NaturalizedTree {
    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn horizon(&self) -> usize {
        self.levels.len() - 1
    }

    /// Value at a prefix of any length up to the horizon.
    pub fn value(&self, prefix: &BinarySequence) -> Result<f64> {
        let level = self.levels.get(prefix.len()).ok_or(Error::LengthMismatch {
            expected: self.horizon(),
            got: prefix.len(),
        })?;
        Ok(level[prefix.index()])
    }

    /// Values at prefix length `n`, indexed by prefix index.
    pub fn level(&self, n: usize) -> &[f64] {
        &self.levels[n]
    }

    /// The `B_θ`-expectation of the final values.
    pub fn root(&self) -> f64 {
        self.levels[0][0]
    }

    /// Every `(prefix, value)` pair, shorter prefixes first.
    pub fn entries(&self) -> impl Iterator<Item = (BinarySequence, f64)> + '_ {
        self.levels.iter().enumerate().flat_map(|(n, level)| {
            level
                .iter()
                .enumerate()
                .map(move |(i, &v)| (BinarySequence::from_index(i, n), v))
        })
    }
}

/// Backward-average `finals` under `B_θ` down to the empty prefix.
pub fn naturalize_finite_horizon(
    finals: &FinalValueFunction,
    theta: f64,
    horizon: usize,
) -> Result<NaturalizedTree> {
    check_horizon(horizon)?;
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::InvalidValue { what: "theta", value: theta });
    }
    if finals.horizon != horizon {
        return Err(Error::FinalsTableSize {
            horizon,
            got: finals.table.len(),
        });
    }
    let mut levels = Vec::with_capacity(horizon + 1);
    levels.push(finals.table.clone());
    for _ in 0..horizon {
        let child = levels.last().expect("at least the final level");
        let parent: Vec<f64> = child
            .chunks_exact(2)
            .map(|pair| (1.0 - theta) * pair[0] + theta * pair[1])
            .collect();
        levels.push(parent);
    }
    levels.reverse();
    Ok(NaturalizedTree { theta, levels })
}

/// `min_θ S̃^θ_N(data)` over the grid; equals `finals(data)` because
/// backward averaging leaves the final level untouched.
pub fn elementwise_natural_final(
    finals: &FinalValueFunction,
    grid: &ThetaGrid,
    horizon: usize,
    data: &BinarySequence,
) -> Result<f64> {
    if data.len() != horizon {
        return Err(Error::LengthMismatch {
            expected: horizon,
            got: data.len(),
        });
    }
    let original = finals.get(data)?;
    let mut inf = f64::INFINITY;
    for &theta in grid.values() {
        let tree = naturalize_finite_horizon(finals, theta, horizon)?;
        inf = inf.min(tree.value(data)?);
    }
    if inf != original {
        return Err(Error::Assertion(format!(
            "naturalized final {inf} differs from original {original} at {data}"
        )));
    }
    Ok(inf)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(s: &str) -> BinarySequence {
        s.parse().unwrap()
    }

    /// Direct evaluation of Q(z) / B_θ(z) by multiplying per-observation
    /// probabilities.
    fn direct_ratio(data: &BinarySequence, alt: &ChangepointAlternative, theta: f64) -> f64 {
        data.values()
            .iter()
            .enumerate()
            .map(|(i, &z)| {
                let q = alt.one_probability(i + 1);
                let (qz, bz) = if z == 1 { (q, theta) } else { (1.0 - q, 1.0 - theta) };
                qz / bz
            })
            .product()
    }

    #[test]
    fn lower_benchmark_examples() {
        let alt = ChangepointAlternative::default();
        assert_eq!(lower_benchmark(&BinarySequence::default(), &alt).unwrap(), 1.0);
        let ideal = seq("00000000001111111111");
        let lb = lower_benchmark(&ideal, &alt).unwrap();
        assert!((lb / 1.8f64.powi(20) - 1.0).abs() < 1e-12);
        // Grid search over θ confirms the supremum sits at the MLE.
        let grid_min = (1..1000)
            .map(|i| direct_ratio(&ideal, &alt, i as f64 / 1000.0))
            .fold(f64::INFINITY, f64::min);
        assert!(lb <= grid_min * (1.0 + 1e-12));
        assert!((lb / grid_min - 1.0).abs() < 1e-9);
        assert!((lower_benchmark(&seq("0"), &alt).unwrap() - 0.9).abs() < 1e-15);
        assert!(lower_benchmark(&BinarySequence::new(vec![0; 21]).unwrap(), &alt).is_err());
    }

    #[test]
    fn upper_benchmark_examples() {
        let alt = ChangepointAlternative::default();
        assert_eq!(upper_benchmark(&BinarySequence::default(), &alt).unwrap(), 1.0);
        let ideal = seq("00000000001111111111");
        let ub = upper_benchmark(&ideal, &alt).unwrap();
        assert!((ub / 1.8f64.powi(20) - 1.0).abs() < 1e-12);
        assert!((ub / direct_ratio(&ideal, &alt, 0.5) - 1.0).abs() < 1e-12);
        let lb = lower_benchmark(&ideal, &alt).unwrap();
        assert!((ub / lb - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lower_and_upper_on_prefixes_match_direct_products() {
        let alt = ChangepointAlternative::new(4, 3, 0.25, 0.6).unwrap();
        for i in 0..(1 << 7) {
            let full = BinarySequence::from_index(i, 7);
            for n in 0..=7 {
                let prefix = BinarySequence::new(full.values()[..n].to_vec()).unwrap();
                let ub = upper_benchmark(&prefix, &alt).unwrap();
                assert!((ub / direct_ratio(&prefix, &alt, 0.5) - 1.0).abs() < 1e-12);
                let lb = lower_benchmark(&prefix, &alt).unwrap();
                assert!(lb <= ub * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn batch_examples() {
        let alt = ChangepointAlternative::default();
        assert!((batch_benchmark(0, 0, &alt).unwrap() - 1.0).abs() < 1e-12);
        let v = batch_benchmark(10, 10, &alt).unwrap();
        assert!((v / 7.185e4 - 1.0).abs() < 1e-3, "{v}");
        assert!(batch_benchmark(5, 6, &alt).is_err());
        assert!(batch_benchmark(15, 4, &alt).is_err());
        assert!((batch_benchmark(20, 10, &alt).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn batch_null_expectation_is_one() {
        let alt = ChangepointAlternative::default();
        for theta in [0.1, 0.5, 0.9] {
            let mut total = 0.0;
            for k0 in 0..=10usize {
                for k1 in 0..=10usize {
                    let k = k0 + k1;
                    let ln_w = ln_choose(10, k0) + ln_choose(10, k1)
                        + k as f64 * f64::ln(theta)
                        + (20 - k) as f64 * f64::ln(1.0 - theta);
                    total += ln_w.exp() * batch_benchmark(k, k1, &alt).unwrap();
                }
            }
            assert!((total - 1.0).abs() < 1e-9, "θ={theta}: {total}");
        }
    }

    #[test]
    fn triple_requires_full_length() {
        let alt = ChangepointAlternative::default();
        assert!(benchmark_triple(&seq("0101"), &alt).is_err());
        let t = benchmark_triple(&seq("00000000001111111111"), &alt).unwrap();
        assert!(t.lower <= t.upper);
    }

    #[test]
    fn naturalize_examples() {
        let constant = FinalValueFunction::new(3, vec![2.5; 8]).unwrap();
        let tree = naturalize_finite_horizon(&constant, 0.3, 3).unwrap();
        assert!(tree.entries().all(|(_, v)| (v - 2.5).abs() < 1e-15));
        assert_eq!(tree.entries().count(), 15);

        let finals = FinalValueFunction::new(1, vec![0.0, 2.0]).unwrap();
        let tree = naturalize_finite_horizon(&finals, 0.5, 1).unwrap();
        assert_eq!(tree.root(), 1.0);
        assert_eq!(tree.value(&seq("0")).unwrap(), 0.0);
        assert_eq!(tree.value(&seq("1")).unwrap(), 2.0);

        assert!(matches!(
            naturalize_finite_horizon(&finals, 0.5, 23),
            Err(Error::HorizonExceeded { .. })
        ));
        assert!(naturalize_finite_horizon(&finals, 1.5, 1).is_err());
        assert!(FinalValueFunction::new(2, vec![1.0; 3]).is_err());
        assert!(FinalValueFunction::new(23, vec![]).is_err());
    }

    #[test]
    fn naturalized_tree_is_a_martingale() {
        let mut state = 0x2545_f491_4f6c_dd1du64;
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let table: Vec<f64> = (0..64).map(|_| 10.0 * next()).collect();
        let finals = FinalValueFunction::new(6, table).unwrap();
        for theta in [0.0, 0.2, 0.5, 0.77, 1.0] {
            let tree = naturalize_finite_horizon(&finals, theta, 6).unwrap();
            for n in 0..6 {
                for (i, &v) in tree.level(n).iter().enumerate() {
                    let want = (1.0 - theta) * tree.level(n + 1)[2 * i] + theta * tree.level(n + 1)[2 * i + 1];
                    assert!((v - want).abs() < 1e-12);
                }
            }
            assert_eq!(tree.level(6), finals.values());
        }
    }

    #[test]
    fn elementwise_natural_final_recovers_finals() {
        let table: Vec<f64> = (0..64).map(|i| ((i * 37) % 11) as f64 / 3.0).collect();
        let finals = FinalValueFunction::new(6, table).unwrap();
        let grid = ThetaGrid::unit_interval(11).unwrap();
        let single = ThetaGrid::new(vec![0.4]).unwrap();
        for i in 0..64 {
            let data = BinarySequence::from_index(i, 6);
            let want = finals.get(&data).unwrap();
            assert_eq!(elementwise_natural_final(&finals, &grid, 6, &data).unwrap(), want);
            assert_eq!(elementwise_natural_final(&finals, &single, 6, &data).unwrap(), want);
        }
    }

    #[test]
    fn finals_from_pairs() {
        let pairs = vec![(seq("1"), 2.0), (seq("0"), 0.0)];
        let f = FinalValueFunction::from_pairs(pairs).unwrap();
        assert_eq!(f.values(), &[0.0, 2.0]);
        assert!(FinalValueFunction::from_pairs(vec![(seq("1"), 2.0)]).is_err());
        assert!(FinalValueFunction::from_pairs(vec![(seq("1"), 2.0), (seq("1"), 1.0)]).is_err());
        assert!(FinalValueFunction::from_pairs(vec![(seq("1"), 2.0), (seq("00"), 1.0)]).is_err());
        assert!(FinalValueFunction::from_pairs(Vec::new()).is_err());
    }

    #[test]
    fn log_sum_exp_is_stable() {
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert!((log_sum_exp(&[1000.0, 1000.0]) - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert!((log_sum_exp(&[-1000.0, 0.0]) - 0.0).abs() < 1e-12);
    }
}

//! Goodness-of-fit statistics and quantiles used by the calibration suites.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::{Error, Result};

/// Pearson chi-square statistic with its reference quantile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub df: usize,
    /// Upper quantile of the reference chi-square law at `level`.
    pub critical: f64,
    pub level: f64,
}

impl ChiSquareTest {
    pub fn passes(&self) -> bool {
        self.statistic < self.critical
    }
}

fn chi_square_quantile(df: usize, level: f64) -> Result<f64> {
    let law = ChiSquared::new(df as f64)
        .map_err(|e| Error::Config(format!("chi-square with {df} degrees of freedom: {e}")))?;
    Ok(law.inverse_cdf(level))
}

fn bin_of(u: f64, bins: usize) -> usize {
    ((u * bins as f64) as usize).min(bins - 1)
}

fn pearson(counts: &[u64], expected: f64) -> f64 {
    counts
        .iter()
        .map(|&c| {
            let d = c as f64 - expected;
            d * d / expected
        })
        .sum()
}

/// Chi-square test that `values` are uniform on `[0, 1]`, equal-width bins.
pub fn chi_square_uniformity(values: &[f64], bins: usize, level: f64) -> Result<ChiSquareTest> {
    if values.is_empty() {
        return Err(Error::Empty("values"));
    }
    if bins < 2 {
        return Err(Error::Config("need at least two bins".into()));
    }
    let mut counts = vec![0u64; bins];
    for &u in values {
        counts[bin_of(u, bins)] += 1;
    }
    let expected = values.len() as f64 / bins as f64;
    Ok(ChiSquareTest {
        statistic: pearson(&counts, expected),
        df: bins - 1,
        critical: chi_square_quantile(bins - 1, level)?,
        level,
    })
}

/// Chi-square test that pairs are uniform on the unit square, i.e. that the
/// two coordinates are independent and each uniform. `bins` per axis.
pub fn chi_square_pair_uniformity(
    pairs: &[(f64, f64)],
    bins: usize,
    level: f64,
) -> Result<ChiSquareTest> {
    if pairs.is_empty() {
        return Err(Error::Empty("pairs"));
    }
    if bins < 2 {
        return Err(Error::Config("need at least two bins".into()));
    }
    let mut counts = vec![0u64; bins * bins];
    for &(u, v) in pairs {
        counts[bin_of(u, bins) * bins + bin_of(v, bins)] += 1;
    }
    let cells = bins * bins;
    let expected = pairs.len() as f64 / cells as f64;
    Ok(ChiSquareTest {
        statistic: pearson(&counts, expected),
        df: cells - 1,
        critical: chi_square_quantile(cells - 1, level)?,
        level,
    })
}

/// Non-overlapping lag-1 pairs `(x_1, x_2), (x_3, x_4), ...` within each sequence.
pub fn lag1_pairs<'a>(sequences: impl IntoIterator<Item = &'a [f64]>) -> Vec<(f64, f64)> {
    sequences
        .into_iter()
        .flat_map(|s| s.chunks_exact(2).map(|c| (c[0], c[1])))
        .collect()
}

/// Quantile with linear interpolation between order statistics: for sorted
/// `x_0..x_{n-1}`, position `h = (n-1) q`, value
/// `x_⌊h⌋ + (h - ⌊h⌋)(x_⌊h⌋+1 - x_⌊h⌋)`.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

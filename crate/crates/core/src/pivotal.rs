//! Gaussian online pivotal models.
//!
//! A normalizing transformation maps `(z_1, ..., z_n)` to `z'_n` so that the
//! transformed sequence has a parameter-free law under every element of the
//! null family:
//!
//! | model        | `z'_1` | `z'_n`, n ≥ 2               | null family        |
//! |--------------|--------|-----------------------------|--------------------|
//! | full         | 0      | `(z_n - z_1) / (z_2 - z_1)` | `N(μ, σ²)`         |
//! | variance 1   | 0      | `z_n - z_1`                 | `N(μ, 1)`          |
//! | mean 0       | 1      | `z_n / z_1`                 | `N(0, σ²)`         |
//!
//! Divisions by zero return 0. For `0/0` this is the usual convention; for a
//! nonzero numerator it makes the map total. Both cases have probability zero
//! under the Gaussian laws above.
//!
//! [`pivotal_example_path`] is a test martingale in the filtration generated
//! by the variance-1 normalization that no natural test martingale under any
//! `N(μ, 1)` dominates at times 1 and 2; [`nondomination_ratio`] is the
//! factor by which it would have to be beaten at time 1.

use std::f64::consts::FRAC_1_SQRT_2;

use serde::{Deserialize, Serialize};

use crate::evidence::EvidencePath;
use crate::gaussian::std_normal_cdf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PivotalNormalizer {
    FullGaussian,
    Var1,
    Mean0,
}

fn ratio_or_zero(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        if num != 0.0 {
            log::debug!("normalizer division {num}/0 mapped to 0");
        }
        0.0
    } else {
        num / den
    }
}

/// Apply the normalizing transformation to every prefix of `data`.
pub fn normalize(kind: PivotalNormalizer, data: &[f64]) -> Vec<f64> {
    let Some(&first) = data.first() else {
        return Vec::new();
    };
    match kind {
        PivotalNormalizer::FullGaussian => {
            let spread = data.get(1).map_or(0.0, |&z2| z2 - first);
            std::iter::once(0.0)
                .chain(data[1..].iter().map(|&z| ratio_or_zero(z - first, spread)))
                .collect()
        }
        PivotalNormalizer::Var1 => data.iter().map(|&z| z - first).collect(),
        PivotalNormalizer::Mean0 => data.iter().map(|&z| ratio_or_zero(z, first)).collect(),
    }
}

/// `N(0, 2)` mass of `[-1, 1]`, the probability that `Z_2 - Z_1` lands there.
pub fn difference_window_mass() -> f64 {
    2.0 * std_normal_cdf(FRAC_1_SQRT_2) - 1.0
}

/// The pivotal test martingale that bets everything at time 2 on
/// `z_2 - z_1 ∈ [-1, 1]`: 1 up to time 1, then `1 / N(0,2)([-1,1])` or 0.
pub fn pivotal_example_path(data: &[f64]) -> EvidencePath {
    let mut path = EvidencePath::initial();
    if data.is_empty() {
        return path;
    }
    path.push(1.0);
    if data.len() >= 2 {
        let diff = normalize(PivotalNormalizer::Var1, &data[..2])[1];
        let value = if (-1.0..=1.0).contains(&diff) {
            1.0 / difference_window_mass()
        } else {
            0.0
        };
        for _ in 2..=data.len() {
            path.push(value);
        }
    }
    path
}

/// `N(0,1)([-1,1]) / N(0,2)([-1,1])`, about 1.31.
pub fn nondomination_ratio() -> f64 {
    (2.0 * std_normal_cdf(1.0) - 1.0) / difference_window_mass()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evidence::RandomizationStream;
    use proptest::prelude::*;

    /// Composite Simpson integration of the `N(0, var)` density over `[-1, 1]`.
    fn gaussian_mass_quadrature(var: f64) -> f64 {
        let n = 20_000;
        let h = 2.0 / n as f64;
        let pdf = |x: f64| (-x * x / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt();
        let mut acc = pdf(-1.0) + pdf(1.0);
        for i in 1..n {
            let x = -1.0 + i as f64 * h;
            acc += if i % 2 == 1 { 4.0 } else { 2.0 } * pdf(x);
        }
        acc * h / 3.0
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize(PivotalNormalizer::FullGaussian, &[1.0, 3.0, 7.0]), vec![0.0, 1.0, 3.0]);
        assert_eq!(normalize(PivotalNormalizer::FullGaussian, &[2.0, 2.0, 2.0]), vec![0.0, 0.0, 0.0]);
        assert_eq!(normalize(PivotalNormalizer::Var1, &[5.0, 5.0, 6.0]), vec![0.0, 0.0, 1.0]);
        assert_eq!(normalize(PivotalNormalizer::Mean0, &[2.0, 1.0, -4.0]), vec![1.0, 0.5, -2.0]);
        assert_eq!(normalize(PivotalNormalizer::Mean0, &[0.0, 0.0, 3.0]), vec![0.0, 0.0, 0.0]);
        assert_eq!(normalize(PivotalNormalizer::FullGaussian, &[2.0, 2.0, 5.0]), vec![0.0, 0.0, 0.0]);
        assert_eq!(normalize(PivotalNormalizer::FullGaussian, &[4.0]), vec![0.0]);
        assert!(normalize(PivotalNormalizer::Var1, &[]).is_empty());
    }

    #[test]
    fn example_path_cases() {
        let c = 1.0 / gaussian_mass_quadrature(2.0);
        assert!((c - 1.9213).abs() < 1e-4);
        let p = pivotal_example_path(&[0.0, 0.5, 9.0, -4.0]);
        assert_eq!(p.horizon(), 4);
        assert_eq!(&p.values()[..2], &[1.0, 1.0]);
        for &v in &p.values()[2..] {
            assert!((v - c).abs() < 1e-10);
        }
        assert_eq!(pivotal_example_path(&[0.0, 2.0]).values(), &[1.0, 1.0, 0.0]);
        assert_eq!(pivotal_example_path(&[]).values(), &[1.0]);
        assert_eq!(pivotal_example_path(&[3.0]).values(), &[1.0, 1.0]);
        // Closed window.
        assert!(pivotal_example_path(&[0.0, 1.0]).last() > 1.0);
        assert!(pivotal_example_path(&[0.0, -1.0]).last() > 1.0);
    }

    #[test]
    fn ratio_matches_quadrature() {
        let num = gaussian_mass_quadrature(1.0);
        let den = gaussian_mass_quadrature(2.0);
        assert!((num - 0.682_689_492_137_086).abs() < 1e-12);
        assert!((den - 0.520_499_877_813_046_5).abs() < 1e-12);
        assert!(num < 1.0 && den < 1.0);
        let r = nondomination_ratio();
        assert!(r > 1.0);
        assert!((r - num / den).abs() < 1e-10);
        assert!((r - 1.31).abs() < 0.01);
    }

    #[test]
    fn example_path_is_calibrated_under_gaussian_pairs() {
        // Box–Muller pairs from N(μ, 1); the final value has mean exactly 1.
        for (lane, mu) in [(0u64, 0.0), (1, -3.5), (2, 12.0)] {
            let mut s = RandomizationStream::with_lane(7, lane, 0);
            let finals: Vec<f64> = (0..10_000)
                .map(|_| {
                    let u1 = 1.0 - s.next_uniform();
                    let u2 = s.next_uniform();
                    let r = (-2.0 * u1.ln()).sqrt();
                    let a = 2.0 * std::f64::consts::PI * u2;
                    pivotal_example_path(&[mu + r * a.cos(), mu + r * a.sin()]).last()
                })
                .collect();
            let rep = crate::verify_evariable(&finals).unwrap();
            assert!(rep.within(3.0), "μ={mu}: {rep:?}");
        }
    }

    proptest! {
        #[test]
        fn var1_translation_invariant(
            data in proptest::collection::vec(-100.0f64..100.0, 1..12),
            shift in -100.0f64..100.0,
        ) {
            let a = normalize(PivotalNormalizer::Var1, &data);
            let shifted: Vec<f64> = data.iter().map(|z| z + shift).collect();
            let b = normalize(PivotalNormalizer::Var1, &shifted);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }

        #[test]
        fn full_affine_invariant(
            data in proptest::collection::vec(-100.0f64..100.0, 2..12),
            scale in prop_oneof![-10.0f64..-0.1, 0.1f64..10.0],
            shift in -100.0f64..100.0,
        ) {
            prop_assume!((data[1] - data[0]).abs() > 1e-3);
            let a = normalize(PivotalNormalizer::FullGaussian, &data);
            let moved: Vec<f64> = data.iter().map(|z| scale * z + shift).collect();
            let b = normalize(PivotalNormalizer::FullGaussian, &moved);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-7 * (1.0 + x.abs()));
            }
        }

        #[test]
        fn mean0_scale_invariant(
            data in proptest::collection::vec(-100.0f64..100.0, 1..12),
            scale in prop_oneof![-10.0f64..-0.1, 0.1f64..10.0],
        ) {
            prop_assume!(data[0].abs() > 1e-3);
            let a = normalize(PivotalNormalizer::Mean0, &data);
            let scaled: Vec<f64> = data.iter().map(|z| scale * z).collect();
            let b = normalize(PivotalNormalizer::Mean0, &scaled);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-9 * (1.0 + x.abs()));
            }
        }
    }
}

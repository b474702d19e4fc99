//! Standard Gaussian distribution function and interval masses.
//!
//! `Φ(x) = erfc(-x / √2) / 2`, with `erf`/`erfc` from `libm` (the musl
//! implementations, within an ulp or so). Going through `erfc` rather than
//! `1 + erf` keeps the lower tail accurate.

use std::f64::consts::FRAC_1_SQRT_2;

use libm::{erf, erfc};

/// Standard Gaussian cumulative distribution function.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// `N(0, variance)` mass of the symmetric interval `[-half_width, half_width]`.
pub fn centered_interval_mass(half_width: f64, variance: f64) -> f64 {
    erf(half_width / (2.0 * variance).sqrt())
}

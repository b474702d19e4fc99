//! Online compression models and conformal p-values.
//!
//! An online compression model summarizes the first `n` observations into
//! `σ_n` through a forward function `σ_n = F(σ_{n-1}, z_n)`, and pairs it
//! with a backward kernel giving the conditional law of `(σ_{n-1}, z_n)`
//! given `σ_n`. With conformity measure `A(σ, z) = z`, the conformal
//! p-value after observing `z_n` is
//!
//! ```text
//! p_n = B_Z({z : z < z_n} | σ_n) + τ_n · B_Z({z : z = z_n} | σ_n)
//! ```
//!
//! where `B_Z` is the marginal of the backward kernel on the last
//! observation. Under any law that agrees with the model, and with
//! independent uniform `τ_n`, the p-values are i.i.d. uniform on `[0, 1]`.
//!
//! Two models are implemented:
//!
//! - binary exchangeability, summary `(n, k)`; the last observation given
//!   `σ_n` is 1 with probability `k / n`;
//! - Gaussian with variance 1, summary `(n, Σ z_i)`; the last observation
//!   given the sum `s` is `N(s / n, (n - 1) / n)`.

use serde::{Deserialize, Serialize};

use crate::evidence::{BinarySequence, RandomizationStream, RealSequence};
use crate::gaussian::std_normal_cdf;
use crate::{Error, Result};

/// A p-value in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PValue(f64);

impl PValue {
    pub fn new(value: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&value) {
            Ok(Self(value))
        } else {
            Err(Error::PValueOutOfRange(value))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if (0.0..=1.0).contains(&tau) {
        Ok(())
    } else {
        Err(Error::TauOutOfRange(tau))
    }
}

/// The summary space, empty summary, forward function and backward-kernel
/// marginal of an online compression model, with `A(σ, z) = z`.
pub trait OnlineCompressionModel {
    type Observation: Copy;
    type Summary: Clone;

    fn empty(&self) -> Self::Summary;

    fn forward(&self, summary: &Self::Summary, z: Self::Observation) -> Self::Summary;

    /// Conformal p-value of `z` given the summary of the observations before it.
    fn p_value(&self, prev: &Self::Summary, z: Self::Observation, tau: f64) -> Result<PValue>;

    /// Summary of a whole sequence.
    fn summarize(&self, data: &[Self::Observation]) -> Self::Summary {
        data.iter()
            .fold(self.empty(), |s, &z| self.forward(&s, z))
    }

    /// Sequential p-values, one τ draw per observation.
    fn p_values(
        &self,
        data: &[Self::Observation],
        taus: &mut RandomizationStream,
    ) -> Result<Vec<PValue>> {
        let mut summary = self.empty();
        let mut out = Vec::with_capacity(data.len());
        for &z in data {
            out.push(self.p_value(&summary, z, taus.next_uniform())?);
            summary = self.forward(&summary, z);
        }
        Ok(out)
    }
}

// ---------------------------------------------------------------------------
// Binary exchangeability
// ---------------------------------------------------------------------------

/// Exchangeability summary of a binary sequence: its length and count of ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct ExchangeabilitySummary {
    pub n: usize,
    pub k: usize,
}

impl ExchangeabilitySummary {
    pub fn new(n: usize, k: usize) -> Result<Self> {
        if k > n {
            return Err(Error::Config(format!("summary count k={k} exceeds n={n}")));
        }
        Ok(Self { n, k })
    }

    /// Probability that the last observation is 1 given this summary.
    pub fn last_one_probability(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.k as f64 / self.n as f64
        }
    }
}

/// `(n, k) -> (n + 1, k + z)`.
pub fn exch_forward(summary: ExchangeabilitySummary, z: u8) -> ExchangeabilitySummary {
    ExchangeabilitySummary {
        n: summary.n + 1,
        k: summary.k + usize::from(z == 1),
    }
}

/// Conformal p-value of `z_n` under the binary exchangeability model.
///
/// With `(n, k)` the summary after absorbing `z_n`:
/// `z_n = 1` gives `(n - k)/n + τ k/n`, `z_n = 0` gives `τ (n - k)/n`.
pub fn exch_p_value(prev: ExchangeabilitySummary, z_n: u8, tau: f64) -> Result<PValue> {
    check_tau(tau)?;
    if z_n > 1 {
        return Err(Error::InvalidObservation {
            value: z_n.to_string(),
            reason: "binary observations must be 0 or 1",
        });
    }
    let after = exch_forward(prev, z_n);
    let n = after.n as f64;
    let zeros = (after.n - after.k) as f64 / n;
    let p = if z_n == 1 {
        zeros + tau * (after.k as f64 / n)
    } else {
        tau * zeros
    };
    Ok(PValue(p.clamp(0.0, 1.0)))
}

#[derive(Debug, Clone, Copy, Default)]
pub struct BinaryExchangeability;

impl OnlineCompressionModel for BinaryExchangeability {
    type Observation = u8;
    type Summary = ExchangeabilitySummary;

    fn empty(&self) -> ExchangeabilitySummary {
        ExchangeabilitySummary::default()
    }

    fn forward(&self, summary: &ExchangeabilitySummary, z: u8) -> ExchangeabilitySummary {
        exch_forward(*summary, z)
    }

    fn p_value(&self, prev: &ExchangeabilitySummary, z: u8, tau: f64) -> Result<PValue> {
        exch_p_value(*prev, z, tau)
    }
}

// ---------------------------------------------------------------------------
// Gaussian, variance 1
// ---------------------------------------------------------------------------

/// Summary of the variance-1 Gaussian model: count and running sum.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GaussianVar1Summary {
    pub n: usize,
    pub s: f64,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct GaussianVar1;

impl OnlineCompressionModel for GaussianVar1 {
    type Observation = f64;
    type Summary = GaussianVar1Summary;

    fn empty(&self) -> GaussianVar1Summary {
        GaussianVar1Summary::default()
    }

    fn forward(&self, summary: &GaussianVar1Summary, z: f64) -> GaussianVar1Summary {
        GaussianVar1Summary {
            n: summary.n + 1,
            s: summary.s + z,
        }
    }

    /// `τ` for the first observation; afterwards
    /// `Φ((z_n - s/n) / √((n-1)/n))`, ties having probability zero.
    fn p_value(&self, prev: &GaussianVar1Summary, z: f64, tau: f64) -> Result<PValue> {
        check_tau(tau)?;
        if !z.is_finite() {
            return Err(Error::InvalidObservation {
                value: z.to_string(),
                reason: "real observations must be finite",
            });
        }
        if prev.n == 0 {
            return Ok(PValue(tau));
        }
        let after = self.forward(prev, z);
        let n = after.n as f64;
        let centered = z - after.s / n;
        let sd = ((n - 1.0) / n).sqrt();
        Ok(PValue(std_normal_cdf(centered / sd)))
    }
}

/// Conformal p-value of `z_n` given the preceding observations, Gaussian
/// model with variance 1.
pub fn gauss_var1_p_value(prefix: &[f64], z_n: f64, tau: f64) -> Result<PValue> {
    let model = GaussianVar1;
    model.p_value(&model.summarize(prefix), z_n, tau)
}

// ---------------------------------------------------------------------------
// Dispatch over data kinds
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    BinaryExchangeability,
    GaussianVar1,
}

impl ModelKind {
    fn name(self) -> &'static str {
        match self {
            ModelKind::BinaryExchangeability => "binary-exchangeability",
            ModelKind::GaussianVar1 => "gaussian-var1",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Observations {
    Binary(BinarySequence),
    Real(RealSequence),
}

impl Observations {
    fn kind_name(&self) -> &'static str {
        match self {
            Observations::Binary(_) => "binary",
            Observations::Real(_) => "real",
        }
    }
}

/// Conformal p-values of a whole sequence under the selected model.
pub fn conformal_p_sequence(
    data: &Observations,
    taus: &mut RandomizationStream,
    model: ModelKind,
) -> Result<Vec<PValue>> {
    match (model, data) {
        (ModelKind::BinaryExchangeability, Observations::Binary(seq)) => {
            BinaryExchangeability.p_values(seq.values(), taus)
        }
        (ModelKind::GaussianVar1, Observations::Real(seq)) => GaussianVar1.p_values(seq.values(), taus),
        _ => Err(Error::ModelMismatch {
            model: model.name(),
            data: data.kind_name(),
        }),
    }
}

//! The changepoint experiment: dataset generation, the five final values per
//! replication, summaries and the calibration suites.
//!
//! Every replication draws from its own streams, addressed by
//! `(seed, lane, replication index)`, so records do not depend on the order in
//! which replications complete. Work is spread over replications with rayon
//! and the record list is assembled in replication order.

use std::io::{Read, Write};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::benchmarks::{
    batch_benchmark, benchmark_triple, lower_benchmark_counts, naturalize_finite_horizon,
    upper_benchmark_counts, FinalValueFunction, SegmentCounts,
};
use crate::bk::{bk_finals, bk_run, bk_trace, tau_averaged_final, ChangepointAlternative};
use crate::calibration::{chi_square_pair_uniformity, chi_square_uniformity, lag1_pairs, quantile_sorted};
use crate::compression::{BinaryExchangeability, OnlineCompressionModel};
use crate::evidence::{verify_evariable, BinarySequence, RandomizationStream};
use crate::pivotal::nondomination_ratio;
use crate::{Error, Result};

/// Stream lane for dataset generation.
pub const LANE_DATA: u64 = 1;
/// Stream lane for the τ draws of the single BK run.
pub const LANE_BK: u64 = 2;
/// Stream lane for the τ draws of the inner runs of mean BK.
pub const LANE_MEAN_BK: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// One dataset; `replications` independent BK and mean-BK runs on it.
    FixedDataset,
    /// A fresh dataset from the alternative for every replication.
    #[default]
    RandomDatasets,
    /// Fresh datasets from the i.i.d. Bernoulli(`null_theta`) null.
    NullCalibration,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed-dataset" => Ok(Mode::FixedDataset),
            "random-datasets" => Ok(Mode::RandomDatasets),
            "null-calibration" => Ok(Mode::NullCalibration),
            other => Err(Error::Config(format!(
                "unknown mode {other:?}; expected fixed-dataset, random-datasets or null-calibration"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub alt: ChangepointAlternative,
    pub replications: usize,
    pub inner_bk: usize,
    pub seed: u64,
    pub mode: Mode,
    pub null_theta: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            alt: ChangepointAlternative::default(),
            replications: 1000,
            inner_bk: 1000,
            seed: 42,
            mode: Mode::RandomDatasets,
            null_theta: 0.5,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.alt.validate()?;
        if self.replications == 0 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        if self.inner_bk == 0 {
            return Err(Error::Config("inner BK count must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.null_theta) {
            return Err(Error::Config(format!("null theta {} is not in [0, 1]", self.null_theta)));
        }
        Ok(())
    }
}

/// Final values of the five processes on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub rep: u64,
    pub dataset: String,
    #[serde(rename = "K")]
    pub total_ones: usize,
    pub k0: usize,
    pub k1: usize,
    pub bk: f64,
    pub mean_bk: f64,
    pub batch: f64,
    pub lb: f64,
    pub ub: f64,
}

/// The three streams of replication `rep`.
pub fn replication_streams(seed: u64, rep: u64) -> [RandomizationStream; 3] {
    [
        RandomizationStream::with_lane(seed, LANE_DATA, rep),
        RandomizationStream::with_lane(seed, LANE_BK, rep),
        RandomizationStream::with_lane(seed, LANE_MEAN_BK, rep),
    ]
}

/// First `n0` draws Bernoulli(`pi0`), next `n1` Bernoulli(`pi1`), by inverse
/// transform on the stream (draw `< p` gives 1). Probabilities may be 0 or 1.
pub fn generate_dataset(alt: &ChangepointAlternative, stream: &mut RandomizationStream) -> BinarySequence {
    BinarySequence::from_bools(
        (1..=alt.horizon()).map(|n| stream.next_bernoulli(alt.one_probability(n)) == 1),
    )
}

/// I.i.d. Bernoulli(`theta`) dataset of length `len`.
pub fn generate_null_dataset(theta: f64, len: usize, stream: &mut RandomizationStream) -> BinarySequence {
    BinarySequence::from_bools((0..len).map(|_| stream.next_bernoulli(theta) == 1))
}

fn record(
    rep: u64,
    data: &BinarySequence,
    cfg: &ExperimentConfig,
    bk_stream: &mut RandomizationStream,
    mean_stream: &mut RandomizationStream,
) -> Result<ReplicationRecord> {
    let alt = &cfg.alt;
    let triple = benchmark_triple(data, alt)?;
    let counts = SegmentCounts::of(data, alt);
    let bk = bk_run(data, bk_stream, alt)?.last();
    let inner = bk_finals(data, alt, cfg.inner_bk, mean_stream)?;
    Ok(ReplicationRecord {
        rep,
        dataset: data.to_string(),
        total_ones: counts.ones(),
        k0: counts.k0,
        k1: counts.k1,
        bk,
        mean_bk: inner.iter().sum::<f64>() / inner.len() as f64,
        batch: triple.batch,
        lb: triple.lower,
        ub: triple.upper,
    })
}

/// Run the experiment described by `cfg`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ReplicationRecord>> {
    cfg.validate()?;
    let started = Instant::now();
    let fixed = match cfg.mode {
        Mode::FixedDataset => {
            let mut s = RandomizationStream::with_lane(cfg.seed, LANE_DATA, 0);
            Some(generate_dataset(&cfg.alt, &mut s))
        }
        _ => None,
    };
    let records = (0..cfg.replications as u64)
        .into_par_iter()
        .map(|rep| {
            let [mut data_s, mut bk_s, mut mean_s] = replication_streams(cfg.seed, rep);
            let data = match (&fixed, cfg.mode) {
                (Some(d), _) => d.clone(),
                (None, Mode::NullCalibration) => {
                    generate_null_dataset(cfg.null_theta, cfg.alt.horizon(), &mut data_s)
                }
                (None, _) => generate_dataset(&cfg.alt, &mut data_s),
            };
            record(rep, &data, cfg, &mut bk_s, &mut mean_s)
        })
        .collect::<Result<Vec<_>>>()?;
    log::info!(
        "{} replications ({:?}, inner BK {}) in {:.2?}",
        records.len(),
        cfg.mode,
        cfg.inner_bk,
        started.elapsed()
    );
    Ok(records)
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

pub const CSV_HEADER: &str = "rep,dataset,K,k0,k1,bk,mean_bk,batch,lb,ub";

pub fn write_records<W: Write>(records: &[ReplicationRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if records.is_empty() {
        w.write_record(CSV_HEADER.split(','))?;
    }
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records<R: Read>(input: R) -> Result<Vec<ReplicationRecord>> {
    let mut rdr = csv::Reader::from_reader(input);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if header.join(",") != CSV_HEADER {
        return Err(Error::Config(format!(
            "unexpected CSV header {:?}, expected {CSV_HEADER:?}",
            header.join(",")
        )));
    }
    Ok(rdr.deserialize().collect::<std::result::Result<Vec<ReplicationRecord>, _>>()?)
}

// ---------------------------------------------------------------------------
// Summaries
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProcessStats {
    pub median: f64,
    pub mean: f64,
    pub q25: f64,
    pub q75: f64,
    pub q05: f64,
    pub q95: f64,
}

impl ProcessStats {
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("values"));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self {
            median: quantile_sorted(&sorted, 0.5),
            mean: values.iter().sum::<f64>() / values.len() as f64,
            q25: quantile_sorted(&sorted, 0.25),
            q75: quantile_sorted(&sorted, 0.75),
            q05: quantile_sorted(&sorted, 0.05),
            q95: quantile_sorted(&sorted, 0.95),
        })
    }
}

/// Per-process statistics over a set of records. Quantiles interpolate
/// linearly between order statistics at position `(n - 1) q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub count: usize,
    pub bk: ProcessStats,
    pub mean_bk: ProcessStats,
    pub batch: ProcessStats,
    pub lb: ProcessStats,
    pub ub: ProcessStats,
}

pub fn summarize(records: &[ReplicationRecord]) -> Result<SummaryStats> {
    if records.is_empty() {
        return Err(Error::Empty("records"));
    }
    let column = |f: fn(&ReplicationRecord) -> f64| -> Result<ProcessStats> {
        ProcessStats::of(&records.iter().map(f).collect::<Vec<_>>())
    };
    Ok(SummaryStats {
        count: records.len(),
        bk: column(|r| r.bk)?,
        mean_bk: column(|r| r.mean_bk)?,
        batch: column(|r| r.batch)?,
        lb: column(|r| r.lb)?,
        ub: column(|r| r.ub)?,
    })
}

// ---------------------------------------------------------------------------
// Calibration suites
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub seed: u64,
    /// Null datasets per θ.
    pub replications: usize,
    pub alt: ChangepointAlternative,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            replications: 10_000,
            alt: ChangepointAlternative::default(),
        }
    }
}

/// Null values of θ used by the calibration suites.
pub const NULL_THETAS: [f64; 3] = [0.1, 0.5, 0.9];

/// Pooled conformal p-values from `reps` null datasets, grouped per dataset.
pub fn null_p_values(theta: f64, len: usize, reps: usize, seed: u64, lane: u64) -> Result<Vec<Vec<f64>>> {
    (0..reps as u64)
        .into_par_iter()
        .map(|rep| {
            let mut data_s = RandomizationStream::with_lane(seed, lane, rep);
            let mut tau_s = RandomizationStream::with_lane(seed, lane + 1, rep);
            let data = generate_null_dataset(theta, len, &mut data_s);
            Ok(BinaryExchangeability
                .p_values(data.values(), &mut tau_s)?
                .into_iter()
                .map(|p| p.value())
                .collect())
        })
        .collect()
}

/// Conformal validity: chi-square uniformity of pooled p-values (20 bins) and
/// of non-overlapping lag-1 pairs (10 x 10 cells), at the 0.999 level.
pub fn check_conformal_validity(cfg: &VerifyConfig) -> Result<Vec<CheckOutcome>> {
    let mut out = Vec::new();
    for (i, &theta) in NULL_THETAS.iter().enumerate() {
        let groups = null_p_values(theta, cfg.alt.horizon(), cfg.replications, cfg.seed, 100 + 2 * i as u64)?;
        let pooled: Vec<f64> = groups.iter().flatten().copied().collect();
        let uni = chi_square_uniformity(&pooled, 20, 0.999)?;
        out.push(CheckOutcome::new(
            format!("conformal uniformity θ={theta}"),
            uni.passes(),
            format!("χ² = {:.2} < {:.2} (df {})", uni.statistic, uni.critical, uni.df),
        ));
        let pairs = lag1_pairs(groups.iter().map(Vec::as_slice));
        let ind = chi_square_pair_uniformity(&pairs, 10, 0.999)?;
        out.push(CheckOutcome::new(
            format!("conformal lag-1 independence θ={theta}"),
            ind.passes(),
            format!("χ² = {:.2} < {:.2} (df {})", ind.statistic, ind.critical, ind.df),
        ));
    }
    Ok(out)
}

/// BK calibration under i.i.d. Bernoulli(θ) data: mean final within 3 SE of 1,
/// and every predictive density integrating to 1 within 1e-9.
pub fn check_bk_calibration(cfg: &VerifyConfig) -> Result<Vec<CheckOutcome>> {
    let mut out = Vec::new();
    for (i, &theta) in NULL_THETAS.iter().enumerate() {
        let lane = 200 + 2 * i as u64;
        let runs = (0..cfg.replications as u64)
            .into_par_iter()
            .map(|rep| {
                let mut data_s = RandomizationStream::with_lane(cfg.seed, lane, rep);
                let mut tau_s = RandomizationStream::with_lane(cfg.seed, lane + 1, rep);
                let data = generate_null_dataset(theta, cfg.alt.horizon(), &mut data_s);
                let trace = bk_trace(&data, &mut tau_s, &cfg.alt)?;
                let worst = trace
                    .densities
                    .iter()
                    .map(|d| (d.integral() - 1.0).abs())
                    .fold(0.0, f64::max);
                Ok((trace.path.last(), worst))
            })
            .collect::<Result<Vec<(f64, f64)>>>()?;
        let finals: Vec<f64> = runs.iter().map(|r| r.0).collect();
        let worst = runs.iter().map(|r| r.1).fold(0.0, f64::max);
        let report = verify_evariable(&finals)?;
        out.push(CheckOutcome::new(
            format!("BK null calibration θ={theta}"),
            report.within(3.0),
            format!(
                "mean {:.4} ± {:.4} (z = {:.2}, n = {})",
                report.mean,
                report.std_error,
                report.z_score(),
                report.n
            ),
        ));
        out.push(CheckOutcome::new(
            format!("BK densities integrate to 1 θ={theta}"),
            worst <= 1e-9,
            format!("max |∫f - 1| = {worst:.3e}"),
        ));
    }
    Ok(out)
}

/// Exact null expectation of the batch benchmark on a 21-point θ grid.
pub fn check_batch_exactness(alt: &ChangepointAlternative) -> Result<CheckOutcome> {
    let mut worst: f64 = 0.0;
    for i in 0..=20 {
        let theta = i as f64 / 20.0;
        let mut total = 0.0;
        for k0 in 0..=alt.n0 {
            for k1 in 0..=alt.n1 {
                let w = binomial_pmf(alt.n0, k0, theta) * binomial_pmf(alt.n1, k1, theta);
                if w > 0.0 {
                    total += w * batch_benchmark(k0 + k1, k1, alt)?;
                }
            }
        }
        worst = worst.max((total - 1.0).abs());
    }
    Ok(CheckOutcome::new(
        "batch benchmark null expectation",
        worst <= 1e-9,
        format!("max |E - 1| over 21 θ = {worst:.3e}"),
    ))
}

fn binomial_pmf(n: usize, k: usize, theta: f64) -> f64 {
    let ln_c = statrs::function::factorial::ln_binomial(n as u64, k as u64);
    let a = if k == 0 { 0.0 } else { k as f64 * theta.ln() };
    let b = if k == n { 0.0 } else { (n - k) as f64 * (1.0 - theta).ln() };
    (ln_c + a + b).exp()
}

/// LB ≤ UB on random and boundary datasets.
pub fn check_benchmark_order(cfg: &VerifyConfig, datasets: usize) -> Result<CheckOutcome> {
    let alt = &cfg.alt;
    let n = alt.horizon();
    let mut boundary = vec![
        BinarySequence::new(vec![0; n])?,
        BinarySequence::new(vec![1; n])?,
        BinarySequence::from_bools((0..n).map(|i| i >= alt.n0)),
    ];
    boundary.extend((0..datasets as u64).map(|rep| {
        let mut s = RandomizationStream::with_lane(cfg.seed, 300, rep);
        generate_null_dataset(0.5, n, &mut s)
    }));
    let violations = boundary
        .iter()
        .filter(|d| {
            let c = SegmentCounts::of(d, alt);
            lower_benchmark_counts(c, alt) > upper_benchmark_counts(c, alt)
        })
        .count();
    Ok(CheckOutcome::new(
        "LB ≤ UB",
        violations == 0,
        format!("{violations} violations over {} datasets", boundary.len()),
    ))
}

/// Backward averaging of the exact τ-averaged BK finals on a short horizon:
/// the martingale identity holds at every node, and the root is the null
/// expectation of the finals, which is exactly 1 for every θ.
pub fn check_naturalization(cfg: &VerifyConfig) -> Result<CheckOutcome> {
    let alt = ChangepointAlternative::new(4, 4, cfg.alt.pi0, cfg.alt.pi1)?;
    let horizon = alt.horizon();
    let finals = FinalValueFunction::tabulate(horizon, |d| tau_averaged_final(d, &alt))?;
    let mut worst: f64 = 0.0;
    let mut root_err: f64 = 0.0;
    for theta in NULL_THETAS {
        let tree = naturalize_finite_horizon(&finals, theta, horizon)?;
        for level in 0..horizon {
            let next = tree.level(level + 1);
            for (i, &v) in tree.level(level).iter().enumerate() {
                worst = worst.max((v - ((1.0 - theta) * next[2 * i] + theta * next[2 * i + 1])).abs());
            }
        }
        root_err = root_err.max((tree.root() - 1.0).abs());
    }
    Ok(CheckOutcome::new(
        "naturalization martingale identity",
        worst <= 1e-12 && root_err <= 1e-12,
        format!("max identity error {worst:.3e}, max |root - 1| = {root_err:.3e} (N = {horizon})"),
    ))
}

/// Run every calibration suite.
pub fn run_verification(cfg: &VerifyConfig) -> Result<Vec<CheckOutcome>> {
    cfg.alt.validate()?;
    let mut out = Vec::new();
    let ratio = nondomination_ratio();
    out.push(CheckOutcome::new(
        "non-domination ratio",
        (ratio - 1.31).abs() <= 0.01,
        format!("{ratio:.6}"),
    ));
    out.extend(check_conformal_validity(cfg)?);
    out.extend(check_bk_calibration(cfg)?);
    out.push(check_batch_exactness(&cfg.alt)?);
    out.push(check_benchmark_order(cfg, 10 * cfg.replications)?);
    out.push(check_naturalization(cfg)?);
    Ok(out)
}

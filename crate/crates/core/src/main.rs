use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use ctm_core::benchmarks::{
    batch_benchmark, lower_benchmark, naturalize_finite_horizon, upper_benchmark, FinalValueFunction,
    SegmentCounts,
};
use ctm_core::bk::ChangepointAlternative;
use ctm_core::compression::{BinaryExchangeability, GaussianVar1, OnlineCompressionModel};
use ctm_core::harness::{
    read_records, run_experiment, run_verification, summarize, write_records, ExperimentConfig, Mode,
    VerifyConfig,
};
use ctm_core::{BinarySequence, Error, RandomizationStream, RealSequence};

/// Conformal and pivotal test martingales; changepoint benchmark experiment.
#[derive(Debug, Parser)]
#[command(name = "ctm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the changepoint experiment and write one CSV row per replication.
    Simulate(SimulateArgs),
    /// Summarize an experiment CSV as JSON quantiles per process.
    Summary {
        /// Experiment CSV (standard input if omitted).
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Lower, upper and batch benchmarks for one 0/1 dataset.
    Benchmarks {
        /// Dataset as a 0/1 string.
        #[arg(long)]
        data: String,
        #[command(flatten)]
        alt: AltArgs,
    },
    /// Conformal p-values of a sequence.
    Pvalues {
        /// A 0/1 string for the exchangeability model, or comma-separated reals
        /// for the Gaussian model.
        #[arg(long)]
        data: String,
        #[arg(long, value_enum, default_value_t = ModelArg::Exchangeability)]
        model: ModelArg,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        stream: u64,
    },
    /// Backward-average a finals table (CSV `dataset,value`) under Bernoulli(θ).
    Naturalize {
        #[arg(long)]
        finals: PathBuf,
        #[arg(long)]
        theta: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the calibration suites; exits with status 2 if any check fails.
    Verify {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Null datasets per θ.
        #[arg(long, default_value_t = 10_000)]
        reps: usize,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModelArg {
    Exchangeability,
    GaussianVar1,
}

#[derive(Debug, Args)]
struct AltArgs {
    #[arg(long)]
    n0: Option<usize>,
    #[arg(long)]
    n1: Option<usize>,
    #[arg(long)]
    pi0: Option<f64>,
    #[arg(long)]
    pi1: Option<f64>,
}

impl AltArgs {
    fn apply(&self, alt: &mut ChangepointAlternative) {
        alt.n0 = self.n0.unwrap_or(alt.n0);
        alt.n1 = self.n1.unwrap_or(alt.n1);
        alt.pi0 = self.pi0.unwrap_or(alt.pi0);
        alt.pi1 = self.pi1.unwrap_or(alt.pi1);
    }

    fn resolve(&self) -> ctm_core::Result<ChangepointAlternative> {
        let mut alt = ChangepointAlternative::default();
        self.apply(&mut alt);
        alt.validate()?;
        Ok(alt)
    }
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// JSON experiment configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    inner_bk: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    alt: AltArgs,
    /// Null parameter for null-calibration mode.
    #[arg(long)]
    theta: Option<f64>,
    /// Output CSV (standard output if omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

impl SimulateArgs {
    fn config(&self) -> ctm_core::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => serde_json::from_reader(BufReader::new(File::open(path)?))?,
            None => ExperimentConfig::default(),
        };
        if let Some(mode) = &self.mode {
            cfg.mode = mode.parse::<Mode>()?;
        }
        cfg.replications = self.reps.unwrap_or(cfg.replications);
        cfg.inner_bk = self.inner_bk.unwrap_or(cfg.inner_bk);
        cfg.seed = self.seed.unwrap_or(cfg.seed);
        cfg.null_theta = self.theta.unwrap_or(cfg.null_theta);
        self.alt.apply(&mut cfg.alt);
        cfg.validate()?;
        Ok(cfg)
    }
}

fn output(path: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn input(path: Option<&Path>) -> io::Result<Box<dyn Read>> {
    Ok(match path {
        Some(p) => Box::new(BufReader::new(File::open(p)?)),
        None => Box::new(io::stdin().lock()),
    })
}

fn print_json<T: Serialize>(value: &T) -> ctm_core::Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

#[derive(Serialize)]
struct BenchmarkReport {
    dataset: String,
    #[serde(rename = "K")]
    total_ones: usize,
    k0: usize,
    k1: usize,
    lb: f64,
    ub: f64,
    /// Only defined for a full-length dataset.
    batch: Option<f64>,
}

#[derive(Serialize)]
struct PValueRow {
    n: usize,
    z: String,
    tau: f64,
    p: f64,
}

#[derive(Serialize)]
struct TreeRow {
    prefix: String,
    value: f64,
}

fn p_value_rows<M: OnlineCompressionModel>(
    model: &M,
    data: &[M::Observation],
    stream: &mut RandomizationStream,
    show: impl Fn(M::Observation) -> String,
) -> ctm_core::Result<Vec<PValueRow>> {
    let mut summary = model.empty();
    let mut rows = Vec::with_capacity(data.len());
    for (i, &z) in data.iter().enumerate() {
        let tau = stream.next_uniform();
        let p = model.p_value(&summary, z, tau)?;
        rows.push(PValueRow {
            n: i + 1,
            z: show(z),
            tau,
            p: p.value(),
        });
        summary = model.forward(&summary, z);
    }
    Ok(rows)
}

enum Failure {
    Usage(String),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Assertion(_) => Failure::Numerical(e.to_string()),
            other => Failure::Usage(other.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Simulate(args) => {
            let cfg = args.config()?;
            log::info!("simulate {cfg:?}");
            let records = run_experiment(&cfg)?;
            let mut out = output(args.out.as_deref())?;
            write_records(&records, &mut out)?;
            out.flush()?;
        }
        Command::Summary { input: path } => {
            let records = read_records(input(path.as_deref())?)?;
            print_json(&summarize(&records)?)?;
        }
        Command::Benchmarks { data, alt } => {
            let alt = alt.resolve()?;
            let data: BinarySequence = data.parse()?;
            let counts = SegmentCounts::of(&data, &alt);
            let batch = if data.len() == alt.horizon() {
                Some(batch_benchmark(counts.ones(), counts.k1, &alt)?)
            } else {
                None
            };
            print_json(&BenchmarkReport {
                dataset: data.to_string(),
                total_ones: counts.ones(),
                k0: counts.k0,
                k1: counts.k1,
                lb: lower_benchmark(&data, &alt)?,
                ub: upper_benchmark(&data, &alt)?,
                batch,
            })?;
        }
        Command::Pvalues {
            data,
            model,
            seed,
            stream,
        } => {
            let mut taus = RandomizationStream::new(seed, stream);
            let rows = match model {
                ModelArg::Exchangeability => {
                    let seq: BinarySequence = data.parse()?;
                    p_value_rows(&BinaryExchangeability, seq.values(), &mut taus, |z| z.to_string())?
                }
                ModelArg::GaussianVar1 => {
                    let values = data
                        .split(',')
                        .filter(|s| !s.trim().is_empty())
                        .map(|s| {
                            s.trim()
                                .parse::<f64>()
                                .map_err(|e| Failure::Usage(format!("bad observation {s:?}: {e}")))
                        })
                        .collect::<Result<Vec<_>, _>>()?;
                    let seq = RealSequence::new(values)?;
                    p_value_rows(&GaussianVar1, seq.values(), &mut taus, |z| z.to_string())?
                }
            };
            let mut w = csv::Writer::from_writer(io::stdout().lock());
            if rows.is_empty() {
                w.write_record(["n", "z", "tau", "p"])?;
            }
            for row in rows {
                w.serialize(row)?;
            }
            w.flush()?;
        }
        Command::Naturalize { finals, theta, out } => {
            let mut rdr = csv::Reader::from_reader(BufReader::new(File::open(&finals)?));
            let mut pairs = Vec::new();
            for row in rdr.records() {
                let row = row?;
                let (Some(dataset), Some(value)) = (row.get(0), row.get(1)) else {
                    return Err(Failure::Usage(format!("malformed finals row {row:?}")));
                };
                let value: f64 = value
                    .trim()
                    .parse()
                    .map_err(|e| Failure::Usage(format!("bad final value {value:?}: {e}")))?;
                pairs.push((dataset.parse::<BinarySequence>()?, value));
            }
            let table = FinalValueFunction::from_pairs(pairs)?;
            let tree = naturalize_finite_horizon(&table, theta, table.horizon())?;
            let mut w = csv::Writer::from_writer(output(out.as_deref())?);
            for (prefix, value) in tree.entries() {
                w.serialize(TreeRow {
                    prefix: prefix.to_string(),
                    value,
                })?;
            }
            w.flush()?;
        }
        Command::Verify { seed, reps } => {
            if reps == 0 {
                return Err(Failure::Usage("--reps must be at least 1".into()));
            }
            let cfg = VerifyConfig {
                seed,
                replications: reps,
                ..VerifyConfig::default()
            };
            let outcomes = run_verification(&cfg)?;
            let mut out = io::stdout().lock();
            for o in &outcomes {
                writeln!(out, "{} {}: {}", if o.passed { "PASS" } else { "FAIL" }, o.name, o.detail)?;
            }
            let failed = outcomes.iter().filter(|o| !o.passed).count();
            if failed > 0 {
                return Err(Failure::Numerical(format!("{failed} calibration checks failed")));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

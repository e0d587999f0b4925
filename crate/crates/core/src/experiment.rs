//! Convergence experiments against the exact Beneš filter.
//!
//! One signal path and one observation path are simulated on a fine grid
//! and then held fixed. Every filter run consumes a strided (coarsened) view
//! of that observation path; errors are measured at the terminal time
//! against the exact posterior computed on the fine grid.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path as FsPath, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use sha2::{Digest, Sha256};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::benes::{exact_moment, exact_posterior, BenesParams};
use crate::branching::BranchingAlgorithm;
use crate::error::{Error, Result};
use crate::filter::{run_with, FilterConfig, OffspringMeanDraw, Record, WeightUpdate};
use crate::mixture::DEFAULT_QUADRATURE_ORDER;
use crate::model::{fmt_f64, parse_f64, simulate_observation, simulate_signal, Path, TimeGrid};
use crate::rng::{CounterRng, Stream};

/// Environment variable bounding worker threads (0 or unset: rayon default).
pub const THREADS_ENV: &str = "GMFILTER_THREADS";

pub const SIGNAL_FILE: &str = "signal.csv";
pub const OBSERVATION_FILE: &str = "observation.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TestFunction {
    X,
    X2,
    X3,
}

impl TestFunction {
    pub const ALL: [TestFunction; 3] = [TestFunction::X, TestFunction::X2, TestFunction::X3];

    pub fn degree(self) -> u32 {
        match self {
            TestFunction::X => 1,
            TestFunction::X2 => 2,
            TestFunction::X3 => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TestFunction::X => "x",
            TestFunction::X2 => "x2",
            TestFunction::X3 => "x3",
        }
    }
}

impl FromStr for TestFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "x" | "x1" => Ok(TestFunction::X),
            "x2" | "x^2" => Ok(TestFunction::X2),
            "x3" | "x^3" => Ok(TestFunction::X3),
            other => Err(Error::Parse(format!("unknown test function {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    /// `α = 0`.
    Classic,
    /// `α` from the configuration, `1/√n` by default.
    Mixture,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Classic => "classic",
            Method::Mixture => "mixture",
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "classic" => Ok(Method::Classic),
            "mixture" => Ok(Method::Mixture),
            other => Err(Error::Parse(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    /// Sweep values are time-step counts `m`; `n` is fixed.
    TimeSteps,
    /// Sweep values are particle counts `n`; `m` is fixed.
    ParticleCount,
    /// A particle-count sweep followed by a log-log rate fit.
    ConvergenceRate,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::TimeSteps => "time_steps",
            SweepAxis::ParticleCount => "particle_count",
            SweepAxis::ConvergenceRate => "convergence_rate",
        }
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "time_steps" | "m" => Ok(SweepAxis::TimeSteps),
            "particle_count" | "n" => Ok(SweepAxis::ParticleCount),
            "convergence_rate" | "rate" => Ok(SweepAxis::ConvergenceRate),
            other => Err(Error::Parse(format!("unknown sweep axis {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub benes: BenesParams,
    /// Steps of the fine grid on which the reference paths are simulated.
    pub fine_steps: usize,
    /// `n` used when sweeping time steps.
    pub particles: usize,
    /// `m` used when sweeping particle counts.
    pub time_steps: usize,
    /// `None` selects `1/√n`.
    pub alpha: Option<f64>,
    pub beta: f64,
    /// Number of correction intervals over `[0, T]`.
    pub branch_intervals: usize,
    pub branching: BranchingAlgorithm,
    pub weight_update: WeightUpdate,
    pub offspring_mean_draw: OffspringMeanDraw,
    pub quadrature_order: usize,
    pub sweep: SweepAxis,
    pub sweep_values: Vec<usize>,
    pub replicates: usize,
    pub test_functions: Vec<TestFunction>,
    pub output_dir: PathBuf,
    pub master_seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            benes: BenesParams::default(),
            fine_steps: 1_000_000,
            particles: 40_000,
            time_steps: 100,
            alpha: None,
            beta: 1.0,
            branch_intervals: 20,
            branching: BranchingAlgorithm::Tbba,
            weight_update: WeightUpdate::StochasticExponential,
            offspring_mean_draw: OffspringMeanDraw::PerParent,
            quadrature_order: DEFAULT_QUADRATURE_ORDER,
            sweep: SweepAxis::ParticleCount,
            sweep_values: vec![100, 400, 1600, 6400],
            replicates: 20,
            test_functions: vec![TestFunction::X2, TestFunction::X3],
            output_dir: PathBuf::from("out"),
            master_seed: 2024,
        }
    }
}

fn parse_list<T: FromStr>(s: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| p.trim().parse::<T>().map_err(|e| Error::Parse(format!("{p:?}: {e}"))))
        .collect()
}

fn parse_num<T: FromStr>(key: &str, s: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    s.parse::<T>()
        .map_err(|e| Error::Parse(format!("{key} = {s:?}: {e}")))
}

impl ExperimentConfig {
    /// Parses a flat `key = value` file on top of the defaults. Blank lines
    /// and lines starting with `#` are ignored; unknown keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected key = value", lineno + 1)))?;
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<FsPath>) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    /// Sets one configuration key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "mu" => self.benes.mu = parse_f64(value)?,
            "sigma" => self.benes.sigma = parse_f64(value)?,
            "h1" => self.benes.h1 = parse_f64(value)?,
            "h2" => self.benes.h2 = parse_f64(value)?,
            "x0" => self.benes.x0 = parse_f64(value)?,
            "horizon" => self.benes.horizon = parse_f64(value)?,
            "fine_steps" => self.fine_steps = parse_num(key, value)?,
            "particles" => self.particles = parse_num(key, value)?,
            "time_steps" => self.time_steps = parse_num(key, value)?,
            "alpha" => {
                self.alpha = match value {
                    "auto" => None,
                    v => Some(parse_f64(v)?),
                }
            }
            "beta" => self.beta = parse_f64(value)?,
            "branch_intervals" => self.branch_intervals = parse_num(key, value)?,
            "branching" => self.branching = value.parse()?,
            "weight_update" => {
                self.weight_update = match value {
                    "exponential" => WeightUpdate::StochasticExponential,
                    "euler" => WeightUpdate::EulerLinear,
                    v => return Err(Error::Parse(format!("unknown weight update {v:?}"))),
                }
            }
            "offspring_draw" => {
                self.offspring_mean_draw = match value {
                    "per_parent" => OffspringMeanDraw::PerParent,
                    "per_offspring" => OffspringMeanDraw::PerOffspring,
                    v => return Err(Error::Parse(format!("unknown offspring draw {v:?}"))),
                }
            }
            "quadrature_order" => self.quadrature_order = parse_num(key, value)?,
            "sweep" => self.sweep = value.parse()?,
            "sweep_values" => self.sweep_values = parse_list(value)?,
            "replicates" => self.replicates = parse_num(key, value)?,
            "test_functions" => self.test_functions = parse_list(value)?,
            "output_dir" => self.output_dir = PathBuf::from(value),
            "master_seed" => self.master_seed = parse_num(key, value)?,
            other => return Err(Error::Config(format!("unknown configuration key {other:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.benes.validate()?;
        if self.fine_steps == 0 || self.particles == 0 || self.time_steps == 0 {
            return Err(Error::Config("fine_steps, particles and time_steps must be positive".into()));
        }
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be at least 1".into()));
        }
        if self.branch_intervals == 0 {
            return Err(Error::Config("branch_intervals must be at least 1".into()));
        }
        if self.sweep_values.is_empty()
            || self.sweep_values[0] == 0
            || self.sweep_values.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::Config(
                "sweep_values must be strictly increasing positive integers".into(),
            ));
        }
        if self.test_functions.is_empty() {
            return Err(Error::Config("at least one test function is required".into()));
        }
        if let Some(a) = self.alpha {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::Config(format!("alpha must lie in [0, 1], got {a}")));
            }
        }
        Ok(())
    }

    /// The configuration in the file format; parsing it gives back `self`.
    pub fn to_config_string(&self) -> String {
        let b = &self.benes;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("mu", b.mu.to_string());
        kv("sigma", b.sigma.to_string());
        kv("h1", b.h1.to_string());
        kv("h2", b.h2.to_string());
        kv("x0", b.x0.to_string());
        kv("horizon", b.horizon.to_string());
        kv("fine_steps", self.fine_steps.to_string());
        kv("particles", self.particles.to_string());
        kv("time_steps", self.time_steps.to_string());
        kv("alpha", self.alpha.map_or("auto".into(), |a| a.to_string()));
        kv("beta", self.beta.to_string());
        kv("branch_intervals", self.branch_intervals.to_string());
        kv(
            "branching",
            match self.branching {
                BranchingAlgorithm::Tbba => "tbba",
                BranchingAlgorithm::Multinomial => "multinomial",
            }
            .into(),
        );
        kv(
            "weight_update",
            match self.weight_update {
                WeightUpdate::StochasticExponential => "exponential",
                WeightUpdate::EulerLinear => "euler",
            }
            .into(),
        );
        kv(
            "offspring_draw",
            match self.offspring_mean_draw {
                OffspringMeanDraw::PerParent => "per_parent",
                OffspringMeanDraw::PerOffspring => "per_offspring",
            }
            .into(),
        );
        kv("quadrature_order", self.quadrature_order.to_string());
        kv("sweep", self.sweep.name().into());
        kv("sweep_values", join(&self.sweep_values, |v| v.to_string()));
        kv("replicates", self.replicates.to_string());
        kv("test_functions", join(&self.test_functions, |f| f.name().to_string()));
        kv("output_dir", self.output_dir.display().to_string());
        kv("master_seed", self.master_seed.to_string());
        s
    }

    /// `α` for a population of `n` particles under `method`.
    pub fn alpha_for(&self, method: Method, n: usize) -> f64 {
        match method {
            Method::Classic => 0.0,
            Method::Mixture => self.alpha.unwrap_or(1.0 / (n as f64).sqrt()),
        }
    }

    /// Filter configuration for one sweep cell: `n` particles on `m` time
    /// steps, keyed by the sweep value and replicate.
    pub fn filter_config(&self, method: Method, n: usize, m: usize, sweep_value: usize, replicate: usize) -> Result<FilterConfig> {
        let intervals = self.branch_intervals;
        if m % intervals != 0 {
            return Err(Error::Config(format!(
                "{m} time steps cannot be split into {intervals} correction intervals"
            )));
        }
        let delta = self.benes.horizon / intervals as f64;
        let mut cfg = FilterConfig::new(n, delta, m / intervals)
            .with_alpha(self.alpha_for(method, n))
            .with_beta(self.beta)
            .with_branching(self.branching)
            .with_weight_update(self.weight_update)
            .with_offspring_mean_draw(self.offspring_mean_draw)
            .with_seed(cell_seed(self.master_seed, sweep_value))
            .with_replicate(replicate as u64);
        cfg.quadrature_order = self.quadrature_order;
        Ok(cfg)
    }
}

fn join<T>(items: &[T], f: impl Fn(&T) -> String) -> String {
    items.iter().map(f).collect::<Vec<_>>().join(",")
}

/// Filter seed shared by both methods within a sweep cell.
pub fn cell_seed(master_seed: u64, sweep_value: usize) -> u64 {
    CounterRng::stream(master_seed, Stream::Replicate, &[sweep_value as u64]).key()
}

/// Rayon pool sized by `GMFILTER_THREADS` (0 or unset: automatic).
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => parse_num::<usize>(THREADS_ENV, v.trim())?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceData {
    pub signal: Path,
    pub observation: Path,
}

impl ReferenceData {
    /// The observation path coarsened to `steps` steps.
    pub fn observation_at(&self, steps: usize) -> Result<Path> {
        self.observation.coarsen_to(steps)
    }

    /// Exact moments at the terminal time on the fine grid.
    pub fn exact_moments(&self, params: &BenesParams) -> Result<BTreeMap<TestFunction, f64>> {
        let post = exact_posterior(&self.observation, self.observation.grid().steps(), params)?;
        TestFunction::ALL
            .iter()
            .map(|&f| Ok((f, exact_moment(&post, f.degree())?)))
            .collect()
    }

    pub fn write(&self, dir: impl AsRef<FsPath>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        self.signal.write_csv(fs::File::create(dir.join(SIGNAL_FILE))?)?;
        self.observation.write_csv(fs::File::create(dir.join(OBSERVATION_FILE))?)?;
        Ok(())
    }

    pub fn read(dir: impl AsRef<FsPath>) -> Result<Self> {
        let dir = dir.as_ref();
        Ok(Self {
            signal: Path::read_csv(fs::File::open(dir.join(SIGNAL_FILE))?)?,
            observation: Path::read_csv(fs::File::open(dir.join(OBSERVATION_FILE))?)?,
        })
    }
}

/// Simulates the fixed signal and observation paths on the fine grid.
pub fn generate_reference_data(config: &ExperimentConfig) -> Result<ReferenceData> {
    config.benes.validate()?;
    let grid = TimeGrid::new(config.benes.horizon, config.fine_steps)?;
    let model = config.benes.model();
    let signal = simulate_signal(&model, grid, &mut CounterRng::stream(config.master_seed, Stream::Signal, &[]))?;
    let observation = simulate_observation(
        &signal,
        &model,
        &mut CounterRng::stream(config.master_seed, Stream::Observation, &[]),
    )?;
    Ok(ReferenceData { signal, observation })
}

/// Aggregated relative errors of one `(sweep value, φ, method)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub sweep_value: usize,
    pub phi: TestFunction,
    pub method: Method,
    pub err_mean: f64,
    pub err_stderr: f64,
    pub wall_ms: f64,
    /// Replicates that completed.
    pub replicates: usize,
    /// Replicates that failed, with the first failure message.
    pub failures: usize,
    pub failure: Option<String>,
}

/// `|estimate − exact| / |exact|`.
pub fn relative_error(estimate: f64, exact: f64) -> f64 {
    (estimate - exact).abs() / exact.abs()
}

/// Runs every sweep cell for both methods. Replicates of one cell differ
/// only in their filter streams; both methods share those streams.
pub fn run_sweep(config: &ExperimentConfig, reference: &ReferenceData) -> Result<Vec<ErrorReport>> {
    config.validate()?;
    let exact = reference.exact_moments(&config.benes)?;
    let model = config.benes.model();
    let methods = [Method::Classic, Method::Mixture];

    let jobs: Vec<(usize, Method, usize)> = config
        .sweep_values
        .iter()
        .flat_map(|&v| methods.iter().flat_map(move |&m| (0..config.replicates).map(move |r| (v, m, r))))
        .collect();

    let pool = thread_pool()?;
    let outcomes: Vec<(Result<Vec<f64>>, f64)> = pool.install(|| {
        jobs.par_iter()
            .map(|&(value, method, replicate)| {
                let start = Instant::now();
                let result = (|| {
                    let (n, m) = match config.sweep {
                        SweepAxis::TimeSteps => (config.particles, value),
                        SweepAxis::ParticleCount | SweepAxis::ConvergenceRate => (value, config.time_steps),
                    };
                    let cfg = config.filter_config(method, n, m, value, replicate)?;
                    let observation = reference.observation_at(m)?;
                    let snaps = run_with(cfg, &model, &observation, Record::Final)?;
                    let mixture = &snaps.last().expect("final snapshot").mixture;
                    config
                        .test_functions
                        .iter()
                        .map(|f| Ok(relative_error(mixture.expect_monomial(f.degree())?, exact[f])))
                        .collect::<Result<Vec<f64>>>()
                })();
                (result, start.elapsed().as_secs_f64() * 1e3)
            })
            .collect()
    });

    let mut reports = Vec::new();
    for (cell, chunk) in outcomes.chunks(config.replicates).enumerate() {
        let (value, method, _) = jobs[cell * config.replicates];
        let wall_ms: f64 = chunk.iter().map(|c| c.1).sum();
        let failure = chunk.iter().find_map(|c| c.0.as_ref().err().map(|e| e.to_string()));
        let ok: Vec<&Vec<f64>> = chunk.iter().filter_map(|c| c.0.as_ref().ok()).collect();
        for (k, &phi) in config.test_functions.iter().enumerate() {
            let errs: Vec<f64> = ok.iter().map(|e| e[k]).collect();
            let (mean, se) = mean_and_stderr(&errs);
            reports.push(ErrorReport {
                sweep_value: value,
                phi,
                method,
                err_mean: mean,
                err_stderr: se,
                wall_ms,
                replicates: errs.len(),
                failures: chunk.len() - errs.len(),
                failure: failure.clone(),
            });
        }
    }
    Ok(reports)
}

/// Sample mean and standard error of the mean (NaN when undefined).
pub fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let k = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / k;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, (var / k).sqrt())
}

/// CSV `sweep_value,phi,method,err_mean,err_stderr,wall_ms`.
pub fn write_report_csv<W: Write>(reports: &[ErrorReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["sweep_value", "phi", "method", "err_mean", "err_stderr", "wall_ms"])?;
    for r in reports {
        w.write_record([
            r.sweep_value.to_string(),
            r.phi.name().to_string(),
            r.method.name().to_string(),
            fmt_f64(r.err_mean),
            fmt_f64(r.err_stderr),
            format!("{:.3}", r.wall_ms),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a report CSV; `replicates` is not stored in the file and is
/// supplied by the caller.
pub fn read_report_csv<R: std::io::Read>(input: R, replicates: usize) -> Result<Vec<ErrorReport>> {
    let mut r = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        out.push(ErrorReport {
            sweep_value: parse_num("sweep_value", &rec[0])?,
            phi: rec[1].parse()?,
            method: rec[2].parse()?,
            err_mean: parse_f64(&rec[3])?,
            err_stderr: parse_f64(&rec[4])?,
            wall_ms: parse_f64(&rec[5])?,
            replicates,
            failures: 0,
            failure: None,
        });
    }
    Ok(out)
}

/// Least-squares line through `(log x, log y)` with a 95% confidence
/// interval on the slope.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub points: usize,
}

pub fn fit_power_law(xs: &[f64], ys: &[f64]) -> Result<RateFit> {
    if xs.len() != ys.len() {
        return Err(Error::Dimension { expected: xs.len(), found: ys.len() });
    }
    if xs.len() < 3 {
        return Err(Error::InsufficientData(format!("{} points cannot bound a slope", xs.len())));
    }
    if xs.iter().chain(ys).any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::Domain("log-log fit needs positive finite values".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let k = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let se = (ssr / (k - 2.0) / sxx).sqrt();
    let t = StudentsT::new(0.0, 1.0, k - 2.0)
        .map_err(|e| Error::Domain(e.to_string()))?
        .inverse_cdf(0.975);
    Ok(RateFit {
        slope,
        intercept,
        ci_low: slope - t * se,
        ci_high: slope + t * se,
        points: xs.len(),
    })
}

/// Slope of mean error against the sweep value for one `(φ, method)`
/// series. Needs at least 4 points, each averaged over at least 20
/// replicates.
pub fn fit_convergence_rate(reports: &[ErrorReport]) -> Result<RateFit> {
    if reports.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "{} sweep points; at least 4 are required",
            reports.len()
        )));
    }
    let (phi, method) = (reports[0].phi, reports[0].method);
    if reports.iter().any(|r| r.phi != phi || r.method != method) {
        return Err(Error::Config("reports mix test functions or methods".into()));
    }
    if let Some(r) = reports.iter().find(|r| r.replicates < 20) {
        return Err(Error::InsufficientData(format!(
            "sweep value {} has {} replicates; at least 20 are required",
            r.sweep_value, r.replicates
        )));
    }
    let xs: Vec<f64> = reports.iter().map(|r| r.sweep_value as f64).collect();
    let ys: Vec<f64> = reports.iter().map(|r| r.err_mean).collect();
    fit_power_law(&xs, &ys)
}

/// The reports of one `(φ, method)` series, in sweep order.
pub fn series(reports: &[ErrorReport], phi: TestFunction, method: Method) -> Vec<ErrorReport> {
    reports
        .iter()
        .filter(|r| r.phi == phi && r.method == method)
        .cloned()
        .collect()
}

/// Hex SHA-256 of a file's bytes.
pub fn file_hash(path: impl AsRef<FsPath>) -> Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

/// Writes `<dir>/<name>.manifest` with the code version, seed, observation
/// file hash (when the file exists) and the configuration.
pub fn write_manifest(config: &ExperimentConfig, name: &str, extra: &[(&str, String)]) -> Result<PathBuf> {
    let dir = &config.output_dir;
    fs::create_dir_all(dir)?;
    let mut text = String::new();
    let _ = writeln!(text, "# {name}");
    let _ = writeln!(text, "version = {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(text, "seed = {}", config.master_seed);
    let obs = dir.join(OBSERVATION_FILE);
    if obs.exists() {
        let _ = writeln!(text, "observation_sha256 = {}", file_hash(&obs)?);
    }
    for (k, v) in extra {
        let _ = writeln!(text, "{k} = {v}");
    }
    let _ = writeln!(text, "# configuration");
    text.push_str(&config.to_config_string());
    let path = dir.join(format!("{name}.manifest"));
    fs::write(&path, text)?;
    Ok(path)
}

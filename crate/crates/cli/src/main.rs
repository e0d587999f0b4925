//! `gmfilter` command-line driver.

use std::fs;
use std::io::{self, Write};
use std::path::{Path as FsPath, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use gmfilter::benes::{exact_posterior, write_oracle_csv};
use gmfilter::branching::{allocation_variance_check, BranchingAlgorithm};
use gmfilter::experiment::{
    file_hash, fit_convergence_rate, generate_reference_data, read_report_csv, run_sweep, series,
    write_manifest, write_report_csv, ExperimentConfig, Method, ReferenceData, SweepAxis,
    TestFunction, OBSERVATION_FILE,
};
use gmfilter::filter::{run_with, write_trajectory_csv, Record};
use gmfilter::rng::{CounterRng, Stream};

#[derive(Parser, Debug)]
#[command(name = "gmfilter", version, about = "Generalised particle filters with Gaussian mixtures")]
struct Cli {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Override one configuration key (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate and store the fixed signal and observation paths.
    Simulate,
    /// Run one filter over the stored observation path and dump its trajectory.
    Filter {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long, value_enum, default_value_t = MethodArg::Mixture)]
        method: MethodArg,
        /// Filter time steps (defaults to `time_steps`).
        #[arg(long)]
        m: Option<usize>,
        #[arg(long, default_value_t = 0)]
        replicate: usize,
        #[arg(long, value_enum, default_value_t = RecordArg::Intervals)]
        record: RecordArg,
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Exact Beneš posterior at time `t` on the stored observation path.
    Oracle {
        #[arg(long)]
        t: Option<f64>,
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Error tables for a particle-count or time-step sweep.
    Sweep {
        #[arg(long, value_enum)]
        axis: Option<AxisArg>,
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<usize>>,
        #[arg(long)]
        replicates: Option<usize>,
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Log-log slope of mean error against the sweep value.
    Rate {
        #[arg(long, value_name = "FILE")]
        report: PathBuf,
        #[arg(long, value_enum, default_value_t = PhiArg::X2)]
        phi: PhiArg,
        #[arg(long, value_enum, default_value_t = MethodArg::Mixture)]
        method: MethodArg,
        /// Replicates behind each report row (defaults to `replicates`).
        #[arg(long)]
        replicates: Option<usize>,
    },
    /// Empirical offspring statistics of a branching algorithm.
    BranchTest {
        #[arg(long, value_enum, default_value_t = AlgorithmArg::Tbba)]
        algorithm: AlgorithmArg,
        #[arg(long, value_delimiter = ',', required = true)]
        weights: Vec<f64>,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 100_000)]
        draws: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum MethodArg {
    Classic,
    Mixture,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Classic => Method::Classic,
            MethodArg::Mixture => Method::Mixture,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum RecordArg {
    Final,
    Intervals,
    Every,
}

impl From<RecordArg> for Record {
    fn from(r: RecordArg) -> Self {
        match r {
            RecordArg::Final => Record::Final,
            RecordArg::Intervals => Record::Intervals,
            RecordArg::Every => Record::EveryStep,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum AxisArg {
    N,
    M,
    Rate,
}

impl From<AxisArg> for SweepAxis {
    fn from(a: AxisArg) -> Self {
        match a {
            AxisArg::N => SweepAxis::ParticleCount,
            AxisArg::M => SweepAxis::TimeSteps,
            AxisArg::Rate => SweepAxis::ConvergenceRate,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum PhiArg {
    X,
    X2,
    X3,
}

impl From<PhiArg> for TestFunction {
    fn from(p: PhiArg) -> Self {
        match p {
            PhiArg::X => TestFunction::X,
            PhiArg::X2 => TestFunction::X2,
            PhiArg::X3 => TestFunction::X3,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum AlgorithmArg {
    Tbba,
    Multinomial,
}

impl From<AlgorithmArg> for BranchingAlgorithm {
    fn from(a: AlgorithmArg) -> Self {
        match a {
            AlgorithmArg::Tbba => BranchingAlgorithm::Tbba,
            AlgorithmArg::Multinomial => BranchingAlgorithm::Multinomial,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::from_file(path)
            .with_context(|| format!("reading configuration {}", path.display()))?,
        None => ExperimentConfig::default(),
    };
    for item in &cli.overrides {
        let (k, v) = item
            .split_once('=')
            .with_context(|| format!("--set expects KEY=VALUE, got {item:?}"))?;
        cfg.set(k.trim(), v.trim())?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Stored reference data for `cfg`, simulated and written on first use.
fn reference_data(cfg: &ExperimentConfig) -> Result<ReferenceData> {
    let dir = &cfg.output_dir;
    if !dir.join(OBSERVATION_FILE).exists() {
        let data = generate_reference_data(cfg)?;
        data.write(dir)?;
        return Ok(data);
    }
    let data = ReferenceData::read(dir)
        .with_context(|| format!("reading reference data from {}", dir.display()))?;
    let grid = data.observation.grid();
    if grid.steps() != cfg.fine_steps || grid.horizon() != cfg.benes.horizon {
        bail!(
            "{} holds {} steps over [0, {}] but the configuration asks for {} steps over [0, {}]; rerun `simulate` or change output_dir",
            dir.display(),
            grid.steps(),
            grid.horizon(),
            cfg.fine_steps,
            cfg.benes.horizon
        );
    }
    Ok(data)
}

/// Writes through `f` to `path`, or to stdout when `path` is `None`.
fn emit<F>(path: Option<&FsPath>, f: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    match path {
        Some(p) => {
            if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(parent)?;
            }
            let mut file = io::BufWriter::new(fs::File::create(p)?);
            f(&mut file)?;
            file.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            f(&mut lock)?;
            lock.flush()?;
        }
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    let mut cfg = load_config(&cli)?;
    match cli.command {
        Command::Simulate => {
            let data = generate_reference_data(&cfg)?;
            data.write(&cfg.output_dir)?;
            let manifest = write_manifest(&cfg, "simulate", &[])?;
            eprintln!("wrote reference data and {}", manifest.display());
        }
        Command::Filter { n, alpha, method, m, replicate, record, out } => {
            if alpha.is_some() {
                cfg.alpha = alpha;
                cfg.validate()?;
            }
            let n = n.unwrap_or(cfg.particles);
            let m = m.unwrap_or(cfg.time_steps);
            let method = Method::from(method);
            let data = reference_data(&cfg)?;
            let fc = cfg.filter_config(method, n, m, n, replicate)?;
            let snaps = run_with(fc, &cfg.benes.model(), &data.observation_at(m)?, record.into())?;
            let out = out.unwrap_or_else(|| {
                cfg.output_dir.join(format!("filter_{}_n{n}_m{m}_r{replicate}.csv", method.name()))
            });
            emit(Some(&out), |w| Ok(write_trajectory_csv(&snaps, w)?))?;
            write_manifest(
                &cfg,
                "filter",
                &[
                    ("method", method.name().to_string()),
                    ("particles", n.to_string()),
                    ("steps", m.to_string()),
                    ("replicate", replicate.to_string()),
                    ("alpha_used", cfg.alpha_for(method, n).to_string()),
                    ("output", out.display().to_string()),
                    ("output_sha256", file_hash(&out)?),
                ],
            )?;
            eprintln!("wrote {}", out.display());
        }
        Command::Oracle { t, out } => {
            let data = reference_data(&cfg)?;
            let t = t.unwrap_or(cfg.benes.horizon);
            let grid = data.observation.grid();
            let index = grid
                .index_of(t)
                .with_context(|| format!("t = {t} is not a point of the observation grid"))?;
            let post = exact_posterior(&data.observation, index, &cfg.benes)?;
            emit(out.as_deref(), |w| Ok(write_oracle_csv(&[post], w)?))?;
            write_manifest(&cfg, "oracle", &[("t", t.to_string())])?;
        }
        Command::Sweep { axis, values, replicates, out } => {
            if let Some(a) = axis {
                cfg.sweep = a.into();
            }
            if let Some(v) = values {
                cfg.sweep_values = v;
            }
            if let Some(r) = replicates {
                cfg.replicates = r;
            }
            cfg.validate()?;
            let data = reference_data(&cfg)?;
            let reports = run_sweep(&cfg, &data)?;
            let out = out.unwrap_or_else(|| cfg.output_dir.join(format!("report_{}.csv", cfg.sweep.name())));
            emit(Some(&out), |w| Ok(write_report_csv(&reports, w)?))?;
            for r in reports.iter().filter(|r| r.failures > 0) {
                eprintln!(
                    "warning: {} {} at {}: {} of {} replicates failed ({})",
                    r.method.name(),
                    r.phi.name(),
                    r.sweep_value,
                    r.failures,
                    r.failures + r.replicates,
                    r.failure.as_deref().unwrap_or("unknown")
                );
            }
            if cfg.sweep == SweepAxis::ConvergenceRate {
                print_rates(&reports, &cfg.test_functions)?;
            }
            write_manifest(
                &cfg,
                "sweep",
                &[("output", out.display().to_string())],
            )?;
            eprintln!("wrote {}", out.display());
        }
        Command::Rate { report, phi, method, replicates } => {
            let replicates = replicates.unwrap_or(cfg.replicates);
            let file = fs::File::open(&report).with_context(|| format!("opening {}", report.display()))?;
            let reports = read_report_csv(file, replicates)?;
            let s = series(&reports, phi.into(), method.into());
            let fit = fit_convergence_rate(&s)?;
            println!("phi,method,slope,ci_low,ci_high,points");
            println!(
                "{},{},{},{},{},{}",
                TestFunction::from(phi).name(),
                Method::from(method).name(),
                fit.slope,
                fit.ci_low,
                fit.ci_high,
                fit.points
            );
            write_manifest(&cfg, "rate", &[("report", report.display().to_string())])?;
        }
        Command::BranchTest { algorithm, weights, n, draws, seed, out } => {
            let seed = seed.unwrap_or(cfg.master_seed);
            let mut rng = CounterRng::stream(seed, Stream::BranchTest, &[]);
            let report = allocation_variance_check(algorithm.into(), &weights, n, draws, &mut rng)?;
            emit(out.as_deref(), |w| Ok(report.write_csv(w)?))?;
            let joined = weights.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
            write_manifest(
                &cfg,
                "branch-test",
                &[
                    ("branch_seed", seed.to_string()),
                    ("weights", joined),
                    ("n", n.to_string()),
                    ("draws", draws.to_string()),
                ],
            )?;
        }
    }
    Ok(())
}

fn print_rates(reports: &[gmfilter::experiment::ErrorReport], phis: &[TestFunction]) -> Result<()> {
    for &phi in phis {
        for method in [Method::Classic, Method::Mixture] {
            match fit_convergence_rate(&series(reports, phi, method)) {
                Ok(fit) => eprintln!(
                    "{} {}: slope {:.4} (95% CI {:.4} .. {:.4})",
                    phi.name(),
                    method.name(),
                    fit.slope,
                    fit.ci_low,
                    fit.ci_high
                ),
                Err(e) => eprintln!("{} {}: {e}", phi.name(), method.name()),
            }
        }
    }
    Ok(())
}

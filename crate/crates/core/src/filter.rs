//! Generalised particle filter with Gaussian mixtures.
//!
//! Each generalised particle is a triple `(a, v, ω)`: an unnormalised weight
//! and the mean and variance of one Gaussian component. Between correction
//! times `iδ` the triples follow
//!
//! ```text
//! da = a h(v) dY
//! dv = f(v) dt + √(1−α) σ(v) dV⁽ʲ⁾
//! ω  = α (β + ∫ σ²(v) ds)
//! ```
//!
//! discretised with Euler steps and coefficients frozen at the pre-step
//! mean. At each correction time every particle is replaced by `o_j`
//! offspring (from [`crate::branching`]) whose means are drawn from
//! `N(v_j, ω_j)`; offspring restart with `a = 1` and `ω = αβ`.
//!
//! With `α = 0` all variances stay zero and the scheme is the classic
//! bootstrap particle filter with Dirac components.
//!
//! The filter also tracks `ξ_t = Π_{i ≤ [t/δ]} (1/n Σ_j a_j(iδ−)) · (1/n Σ_j a_j(t))`,
//! so that `ρ_t = ξ_t π_t` approximates the unnormalised conditional law.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::branching::{BranchingAlgorithm, OffspringAllocation};
use crate::error::{Error, Result};
use crate::mixture::{GaussianComponent, GaussianMixture, DEFAULT_QUADRATURE_ORDER};
use crate::model::{fmt_f64, InitialLaw, ModelSpec, Path};
use crate::rng::{CounterRng, Stream};

/// Populations at least this large are evolved on the rayon pool.
const PARALLEL_THRESHOLD: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightUpdate {
    /// `a ← a (1 + h ΔY)`; can reach non-positive values.
    EulerLinear,
    /// `a ← a exp(h ΔY − h² Δt / 2)`; always positive.
    StochasticExponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OffspringMeanDraw {
    /// One draw per parent, shared by all of its offspring.
    PerParent,
    /// An independent draw for every offspring.
    PerOffspring,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterConfig {
    pub particles: usize,
    pub branch_interval: f64,
    pub substeps_per_interval: usize,
    pub alpha: f64,
    pub beta: f64,
    pub branching: BranchingAlgorithm,
    pub weight_update: WeightUpdate,
    pub offspring_mean_draw: OffspringMeanDraw,
    pub quadrature_order: usize,
    pub seed: u64,
    /// Extra key for the random streams, so replicates of one
    /// configuration can share a seed.
    pub replicate: u64,
}

impl FilterConfig {
    /// Configuration with `α = 1/√n`, `β = 1`, tree based branching,
    /// exponential weight updates and per-parent offspring means.
    pub fn new(particles: usize, branch_interval: f64, substeps_per_interval: usize) -> Self {
        Self {
            particles,
            branch_interval,
            substeps_per_interval,
            alpha: 1.0 / (particles.max(1) as f64).sqrt(),
            beta: 1.0,
            branching: BranchingAlgorithm::Tbba,
            weight_update: WeightUpdate::StochasticExponential,
            offspring_mean_draw: OffspringMeanDraw::PerParent,
            quadrature_order: DEFAULT_QUADRATURE_ORDER,
            seed: 0,
            replicate: 0,
        }
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn with_branching(mut self, branching: BranchingAlgorithm) -> Self {
        self.branching = branching;
        self
    }

    pub fn with_weight_update(mut self, weight_update: WeightUpdate) -> Self {
        self.weight_update = weight_update;
        self
    }

    pub fn with_offspring_mean_draw(mut self, draw: OffspringMeanDraw) -> Self {
        self.offspring_mean_draw = draw;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_replicate(mut self, replicate: u64) -> Self {
        self.replicate = replicate;
        self
    }

    /// The classic particle filter: `α = 0`.
    pub fn classic(self) -> Self {
        self.with_alpha(0.0)
    }

    pub fn substep(&self) -> f64 {
        self.branch_interval / self.substeps_per_interval as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.particles == 0 {
            return Err(Error::Config("particle count must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!("beta must be positive, got {}", self.beta)));
        }
        if !(self.branch_interval > 0.0 && self.branch_interval.is_finite()) {
            return Err(Error::Config(format!(
                "branch interval must be positive, got {}",
                self.branch_interval
            )));
        }
        if self.substeps_per_interval == 0 {
            return Err(Error::Config("need at least one substep per interval".into()));
        }
        if self.quadrature_order == 0 {
            return Err(Error::Config("quadrature order must be at least 1".into()));
        }
        Ok(())
    }
}

/// One generalised particle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Particle {
    pub a: f64,
    pub v: f64,
    pub omega: f64,
}

#[derive(Debug, Clone)]
pub struct ParticleSystem {
    particles: Vec<Particle>,
    /// `ξ` at the last correction time.
    xi_at_branch: f64,
    t: f64,
    interval: u64,
    substep: u64,
    config: FilterConfig,
}

impl ParticleSystem {
    /// `n` particles with `a = 1`, means drawn from `initial`, `ω = αβ`.
    pub fn init(config: FilterConfig, initial: &InitialLaw) -> Result<Self> {
        config.validate()?;
        let omega = config.alpha * config.beta;
        let particles = (0..config.particles as u64)
            .map(|j| {
                let mut rng = CounterRng::stream(config.seed, Stream::Initial, &[config.replicate, j]);
                Particle {
                    a: 1.0,
                    v: initial.sample(&mut rng),
                    omega,
                }
            })
            .collect();
        Ok(Self {
            particles,
            xi_at_branch: 1.0,
            t: 0.0,
            interval: 0,
            substep: 0,
            config,
        })
    }

    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    pub fn config(&self) -> &FilterConfig {
        &self.config
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub(crate) fn set_time(&mut self, t: f64) {
        self.t = t;
    }

    /// Number of corrections performed so far.
    pub fn interval_index(&self) -> u64 {
        self.interval
    }

    /// `ξ_t`, including the factor of the current interval.
    pub fn xi(&self) -> f64 {
        self.xi_at_branch * self.mean_weight()
    }

    fn mean_weight(&self) -> f64 {
        self.particles.iter().map(|p| p.a).sum::<f64>() / self.particles.len() as f64
    }

    /// One Euler step of the triple dynamics driven by the observation
    /// increment `dy` over `dt`.
    pub fn evolve_substep(&mut self, model: &ModelSpec, dy: f64, dt: f64) -> Result<()> {
        if !(dt > 0.0) {
            return Err(Error::Domain(format!("time step must be positive, got {dt}")));
        }
        let cfg = &self.config;
        let noise_scale = (1.0 - cfg.alpha).sqrt();
        let alpha = cfg.alpha;
        let sqrt_dt = dt.sqrt();
        let update = cfg.weight_update;
        let key = CounterRng::stream(
            cfg.seed,
            Stream::Evolve,
            &[cfg.replicate, self.interval, self.substep],
        );
        let step = |j: usize, p: &mut Particle| {
            let v = p.v;
            let (f, s, h) = (model.drift(v), model.diffusion(v), model.sensor(v));
            let dv = if noise_scale == 0.0 {
                0.0
            } else {
                let z: f64 = key.fork(j as u64).sample(StandardNormal);
                sqrt_dt * z
            };
            p.v = v + f * dt + noise_scale * s * dv;
            p.omega += alpha * s * s * dt;
            p.a = match update {
                WeightUpdate::EulerLinear => p.a * (1.0 + h * dy),
                WeightUpdate::StochasticExponential => p.a * (h * dy - 0.5 * h * h * dt).exp(),
            };
        };
        if self.particles.len() >= PARALLEL_THRESHOLD {
            self.particles
                .par_iter_mut()
                .enumerate()
                .for_each(|(j, p)| step(j, p));
        } else {
            self.particles.iter_mut().enumerate().for_each(|(j, p)| step(j, p));
        }
        self.t += dt;
        self.substep += 1;

        for (j, p) in self.particles.iter().enumerate() {
            if !(p.v.is_finite() && p.omega.is_finite() && p.a.is_finite()) {
                return Err(Error::Divergence { particle: j, t: self.t });
            }
            if p.a <= 0.0 {
                return Err(Error::WeightCollapse { particle: j, weight: p.a });
            }
        }
        Ok(())
    }

    /// `ā_j = a_j / Σ_k a_k`.
    pub fn normalised_weights(&self) -> Result<Vec<f64>> {
        let total: f64 = self.particles.iter().map(|p| p.a).sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::DegenerateWeights);
        }
        Ok(self.particles.iter().map(|p| p.a / total).collect())
    }

    /// Effective sample size `1/Σ ā_j²`.
    pub fn ess(&self) -> Result<f64> {
        Ok(1.0 / self.normalised_weights()?.iter().map(|w| w * w).sum::<f64>())
    }

    /// Correction step: allocates offspring, draws their means from the
    /// parents' Gaussians, and resets weights and variances.
    pub fn branch(&mut self) -> Result<OffspringAllocation> {
        let weights = self.normalised_weights()?;
        let n = self.particles.len();
        let cfg = &self.config;
        let mut alloc_rng = CounterRng::stream(cfg.seed, Stream::Allocation, &[cfg.replicate, self.interval]);
        let alloc = cfg.branching.allocate(&weights, n, &mut alloc_rng)?;
        if alloc.total() != n {
            return Err(Error::Invariant(format!(
                "allocation produced {} offspring for {n} particles",
                alloc.total()
            )));
        }

        let reset_omega = cfg.alpha * cfg.beta;
        let mut next = Vec::with_capacity(n);
        for (j, (parent, &count)) in self.particles.iter().zip(alloc.counts()).enumerate() {
            if count == 0 {
                continue;
            }
            if parent.omega < 0.0 {
                return Err(Error::Invariant(format!(
                    "particle {j} has negative variance {}",
                    parent.omega
                )));
            }
            let spread = parent.omega.sqrt();
            let mut rng = CounterRng::stream(
                cfg.seed,
                Stream::OffspringMeans,
                &[cfg.replicate, self.interval, j as u64],
            );
            let draw = |rng: &mut CounterRng| {
                if spread == 0.0 {
                    parent.v
                } else {
                    let z: f64 = rng.sample(StandardNormal);
                    parent.v + spread * z
                }
            };
            match cfg.offspring_mean_draw {
                OffspringMeanDraw::PerParent => {
                    let v = draw(&mut rng);
                    next.extend(std::iter::repeat_n(
                        Particle { a: 1.0, v, omega: reset_omega },
                        count,
                    ));
                }
                OffspringMeanDraw::PerOffspring => {
                    for _ in 0..count {
                        let v = draw(&mut rng);
                        next.push(Particle { a: 1.0, v, omega: reset_omega });
                    }
                }
            }
        }

        self.xi_at_branch *= self.mean_weight();
        self.particles = next;
        self.interval += 1;
        self.substep = 0;
        Ok(alloc)
    }

    /// Normalised mixture `Σ ā_j N(v_j, ω_j)`.
    pub fn posterior(&self) -> Result<GaussianMixture> {
        let weights = self.normalised_weights()?;
        Ok(self
            .particles
            .iter()
            .zip(weights)
            .map(|(p, w)| GaussianComponent::new(w, p.v, p.omega))
            .collect())
    }

    /// `ρ_t = ξ_t π_t`, i.e. component weights `(ξ_{[t/δ]δ}/n)·a_j`.
    pub fn unnormalised_posterior(&self) -> Result<GaussianMixture> {
        self.normalised_weights()?;
        let scale = self.xi_at_branch / self.particles.len() as f64;
        Ok(self
            .particles
            .iter()
            .map(|p| GaussianComponent::new(scale * p.a, p.v, p.omega))
            .collect())
    }
}

/// Which times [`run_with`] records.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Record {
    /// Only the terminal time.
    Final,
    /// Time zero, every correction time (pre-correction state) and the
    /// terminal time.
    Intervals,
    /// Every filter step.
    EveryStep,
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub t: f64,
    pub mixture: GaussianMixture,
    pub xi: f64,
}

impl Snapshot {
    fn of(sys: &ParticleSystem) -> Result<Self> {
        Ok(Self {
            t: sys.time(),
            mixture: sys.posterior()?,
            xi: sys.xi(),
        })
    }

    /// Effective sample size of the recorded weights.
    pub fn ess(&self) -> f64 {
        1.0 / self.mixture.components().iter().map(|c| c.weight * c.weight).sum::<f64>()
    }
}

/// CSV `t,estimate_phi1,estimate_phi2,estimate_phi3,xi,ess` with the
/// posterior moments of degree 1..=3 at each snapshot.
pub fn write_trajectory_csv<W: std::io::Write>(snapshots: &[Snapshot], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "estimate_phi1", "estimate_phi2", "estimate_phi3", "xi", "ess"])?;
    for s in snapshots {
        w.write_record([
            fmt_f64(s.t),
            fmt_f64(s.mixture.expect_monomial(1)?),
            fmt_f64(s.mixture.expect_monomial(2)?),
            fmt_f64(s.mixture.expect_monomial(3)?),
            fmt_f64(s.xi),
            fmt_f64(s.ess()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Filter steps per observation step: `dt / dt_obs`, required to be a
/// positive integer that divides the observation grid.
fn observation_stride(config: &FilterConfig, observations: &Path) -> Result<usize> {
    let grid = observations.grid();
    let ratio = config.substep() / grid.dt();
    let stride = ratio.round();
    if stride < 1.0 || (ratio - stride).abs() > 1e-9 * ratio.max(1.0) {
        return Err(Error::Config(format!(
            "filter step {} is not a multiple of the observation step {}",
            config.substep(),
            grid.dt()
        )));
    }
    let stride = stride as usize;
    if grid.steps() % stride != 0 {
        return Err(Error::Config(format!(
            "filter step stride {stride} does not divide {} observation steps",
            grid.steps()
        )));
    }
    Ok(stride)
}

/// Runs the filter over the whole observation path, recording at every
/// correction time and at the end.
pub fn run(config: FilterConfig, model: &ModelSpec, observations: &Path) -> Result<Vec<Snapshot>> {
    run_with(config, model, observations, Record::Intervals)
}

/// Runs the filter over the observation path. No correction happens at the
/// terminal time, so the last snapshot holds the evolved state at `T`.
pub fn run_with(
    config: FilterConfig,
    model: &ModelSpec,
    observations: &Path,
    record: Record,
) -> Result<Vec<Snapshot>> {
    config.validate()?;
    let stride = observation_stride(&config, observations)?;
    let grid = observations.grid();
    let steps = grid.steps() / stride;
    let dt = config.substep();
    let substeps = config.substeps_per_interval;
    let mut sys = ParticleSystem::init(config, &model.initial_law())?;
    let mut out = Vec::new();
    if record != Record::Final {
        out.push(Snapshot::of(&sys)?);
    }
    for k in 0..steps {
        let dy = observations.values()[(k + 1) * stride] - observations.values()[k * stride];
        sys.evolve_substep(model, dy, dt)?;
        sys.set_time(grid.time((k + 1) * stride));
        let last = k + 1 == steps;
        let interval_end = (k + 1) % substeps == 0;
        if last || record == Record::EveryStep || (record == Record::Intervals && interval_end) {
            out.push(Snapshot::of(&sys)?);
        }
        if interval_end && !last {
            sys.branch()?;
        }
    }
    Ok(out)
}

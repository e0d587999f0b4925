//! Scalar signal/observation models and their Euler–Maruyama simulation.
//!
//! The signal solves `dX = f(X) dt + σ(X) dV` and the observation
//! `dY = h(X) dt + dW` with `Y_0 = 0`, where `V` and `W` are independent
//! standard Brownian motions.

use std::fmt;
use std::io::{Read, Write};
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Law of the initial signal value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialLaw {
    PointMass(f64),
    Normal { mean: f64, std_dev: f64 },
}

impl InitialLaw {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            InitialLaw::PointMass(x) => x,
            InitialLaw::Normal { mean, std_dev } => {
                let z: f64 = rng.sample(StandardNormal);
                mean + std_dev * z
            }
        }
    }
}

/// Coefficients `f`, `σ`, `h` and the initial law of a one-dimensional
/// filtering model.
#[derive(Clone)]
pub struct ModelSpec {
    drift: ScalarFn,
    diffusion: ScalarFn,
    sensor: ScalarFn,
    initial: InitialLaw,
}

impl fmt::Debug for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelSpec")
            .field("initial", &self.initial)
            .finish_non_exhaustive()
    }
}

impl ModelSpec {
    pub fn new<F, S, H>(drift: F, diffusion: S, sensor: H, initial: InitialLaw) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
        S: Fn(f64) -> f64 + Send + Sync + 'static,
        H: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            drift: Arc::new(drift),
            diffusion: Arc::new(diffusion),
            sensor: Arc::new(sensor),
            initial,
        }
    }

    #[inline]
    pub fn drift(&self, x: f64) -> f64 {
        (self.drift)(x)
    }

    #[inline]
    pub fn diffusion(&self, x: f64) -> f64 {
        (self.diffusion)(x)
    }

    #[inline]
    pub fn sensor(&self, x: f64) -> f64 {
        (self.sensor)(x)
    }

    pub fn initial_law(&self) -> InitialLaw {
        self.initial
    }

    pub fn with_initial_law(mut self, initial: InitialLaw) -> Self {
        self.initial = initial;
        self
    }
}

/// Equidistant grid `t_i = i·T/m`, `i = 0..=m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "horizon must be positive and finite, got {horizon}"
            )));
        }
        if steps == 0 {
            return Err(Error::InvalidGrid("step count must be positive".into()));
        }
        Ok(Self { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.horizon / self.steps as f64
    }

    /// Grid index nearest to `t`, if `t` lies on the grid up to `1e-9·dt`.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let x = t / self.dt();
        let i = x.round();
        if i < 0.0 || i > self.steps as f64 || (x - i).abs() > 1e-9 {
            None
        } else {
            Some(i as usize)
        }
    }
}

/// Values of a process at every point of a [`TimeGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl Path {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.steps() + 1 {
            return Err(Error::Dimension {
                expected: grid.steps() + 1,
                found: values.len(),
            });
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn last(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// `values[k+1] - values[k]`.
    pub fn increment(&self, k: usize) -> f64 {
        self.values[k + 1] - self.values[k]
    }

    /// Strided view keeping every `stride`-th point.
    pub fn subsample(&self, stride: usize) -> Result<Path> {
        if stride == 0 || self.grid.steps() % stride != 0 {
            return Err(Error::InvalidGrid(format!(
                "stride {stride} does not divide {} steps",
                self.grid.steps()
            )));
        }
        let grid = TimeGrid::new(self.grid.horizon(), self.grid.steps() / stride)?;
        let values = self.values.iter().step_by(stride).copied().collect();
        Path::new(grid, values)
    }

    /// Strided view with exactly `steps` steps.
    pub fn coarsen_to(&self, steps: usize) -> Result<Path> {
        if steps == 0 || self.grid.steps() % steps != 0 {
            return Err(Error::InvalidGrid(format!(
                "{steps} steps do not divide the {} steps of the path",
                self.grid.steps()
            )));
        }
        self.subsample(self.grid.steps() / steps)
    }

    /// CSV with header `t,value`, 17 significant digits.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "value"])?;
        for (i, v) in self.values.iter().enumerate() {
            w.write_record([fmt_f64(self.grid.time(i)), fmt_f64(*v)])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a path written by [`Path::write_csv`]; the grid is rebuilt from
    /// the final time stamp and the row count.
    pub fn read_csv<R: Read>(input: R) -> Result<Path> {
        let mut r = csv::Reader::from_reader(input);
        let headers = r.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["t", "value"] {
            return Err(Error::Parse(format!("unexpected path header {headers:?}")));
        }
        let mut times = Vec::new();
        let mut values = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            times.push(parse_f64(&rec[0])?);
            values.push(parse_f64(&rec[1])?);
        }
        if values.len() < 2 {
            return Err(Error::Parse("a path needs at least two rows".into()));
        }
        let grid = TimeGrid::new(times[times.len() - 1], values.len() - 1)?;
        Path::new(grid, values)
    }
}

pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub(crate) fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|e| Error::Parse(format!("{s:?}: {e}")))
}

/// Whether observation noise is added. `Suppressed` only keeps the drift
/// integral and exists for testing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseMode {
    Standard,
    Suppressed,
}

/// Euler–Maruyama signal path; `X_0` is drawn from the model's initial law.
pub fn simulate_signal<R: Rng + ?Sized>(
    model: &ModelSpec,
    grid: TimeGrid,
    rng: &mut R,
) -> Result<Path> {
    let dt = grid.dt();
    let sqrt_dt = dt.sqrt();
    let mut values = Vec::with_capacity(grid.steps() + 1);
    let mut x = model.initial_law().sample(rng);
    if !x.is_finite() {
        return Err(Error::SimulationDiverged { step: 0 });
    }
    values.push(x);
    for k in 0..grid.steps() {
        let sigma = model.diffusion(x);
        if sigma < 0.0 {
            return Err(Error::Domain(format!(
                "negative diffusion {sigma} at x = {x} (step {k})"
            )));
        }
        let z: f64 = rng.sample(StandardNormal);
        x = x + model.drift(x) * dt + sigma * sqrt_dt * z;
        if !x.is_finite() {
            return Err(Error::SimulationDiverged { step: k + 1 });
        }
        values.push(x);
    }
    Path::new(grid, values)
}

pub fn simulate_observation<R: Rng + ?Sized>(
    signal: &Path,
    model: &ModelSpec,
    rng: &mut R,
) -> Result<Path> {
    simulate_observation_with(signal, model, NoiseMode::Standard, rng)
}

pub fn simulate_observation_with<R: Rng + ?Sized>(
    signal: &Path,
    model: &ModelSpec,
    noise: NoiseMode,
    rng: &mut R,
) -> Result<Path> {
    let grid = signal.grid();
    if signal.values().len() != grid.steps() + 1 {
        return Err(Error::Dimension {
            expected: grid.steps() + 1,
            found: signal.values().len(),
        });
    }
    let dt = grid.dt();
    let sqrt_dt = dt.sqrt();
    let mut values = Vec::with_capacity(grid.steps() + 1);
    let mut y = 0.0;
    values.push(y);
    for (k, &x) in signal.values()[..grid.steps()].iter().enumerate() {
        let noise = match noise {
            NoiseMode::Standard => sqrt_dt * rng.sample::<f64, _>(StandardNormal),
            NoiseMode::Suppressed => 0.0,
        };
        y = y + model.sensor(x) * dt + noise;
        if !y.is_finite() {
            return Err(Error::SimulationDiverged { step: k + 1 });
        }
        values.push(y);
    }
    Path::new(grid, values)
}

/// Standard Brownian path: the law of `Y` when the sensor is switched off.
pub fn reference_measure_observation<R: Rng + ?Sized>(grid: TimeGrid, rng: &mut R) -> Path {
    let sqrt_dt = grid.dt().sqrt();
    let mut values = Vec::with_capacity(grid.steps() + 1);
    let mut y = 0.0;
    values.push(y);
    for _ in 0..grid.steps() {
        y += sqrt_dt * rng.sample::<f64, _>(StandardNormal);
        values.push(y);
    }
    Path { grid, values }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{CounterRng, Stream};

    fn constant_model(f: f64, s: f64, h: f64, x0: f64) -> ModelSpec {
        ModelSpec::new(move |_| f, move |_| s, move |_| h, InitialLaw::PointMass(x0))
    }

    #[test]
    fn zero_coefficients_give_zero_path() {
        let grid = TimeGrid::new(1.0, 50).unwrap();
        let path = simulate_signal(&constant_model(0.0, 0.0, 0.0, 0.0), grid, &mut CounterRng::new(1))
            .unwrap();
        assert!(path.values().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn unit_drift_reaches_one() {
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let path = simulate_signal(&constant_model(1.0, 0.0, 0.0, 0.0), grid, &mut CounterRng::new(1))
            .unwrap();
        // ten additions of 0.1 land within one ulp of 1
        assert!((path.last() - 1.0).abs() <= 2.0 * f64::EPSILON);
    }

    #[test]
    fn divergence_names_the_step() {
        let grid = TimeGrid::new(1.0, 100).unwrap();
        let model = ModelSpec::new(|x| x * x * 1e200, |_| 0.0, |_| 0.0, InitialLaw::PointMass(1.0));
        match simulate_signal(&model, grid, &mut CounterRng::new(1)) {
            Err(Error::SimulationDiverged { step }) => assert!(step >= 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn negative_diffusion_rejected() {
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let model = constant_model(0.0, -1.0, 0.0, 0.0);
        assert!(matches!(
            simulate_signal(&model, grid, &mut CounterRng::new(1)),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn pure_noise_observation_increment_variance() {
        let grid = TimeGrid::new(1.0, 100_000).unwrap();
        let model = constant_model(0.0, 0.0, 0.0, 0.0);
        let signal = Path::new(grid, vec![0.0; grid.steps() + 1]).unwrap();
        let y = simulate_observation(&signal, &model, &mut CounterRng::new(9)).unwrap();
        let m = grid.steps();
        let var = (0..m).map(|k| y.increment(k).powi(2)).sum::<f64>() / m as f64;
        assert!((var / grid.dt() - 1.0).abs() < 0.01, "ratio {}", var / grid.dt());
    }

    #[test]
    fn noiseless_observation_integrates_sensor() {
        let grid = TimeGrid::new(2.0, 8).unwrap();
        let model = constant_model(0.0, 0.0, 1.5, 0.0);
        let signal = Path::new(grid, vec![0.0; 9]).unwrap();
        let y = simulate_observation_with(&signal, &model, NoiseMode::Suppressed, &mut CounterRng::new(1))
            .unwrap();
        assert_eq!(y.values()[0], 0.0);
        assert!((y.last() - 3.0).abs() < 1e-14);
    }

    #[test]
    fn observation_rejects_malformed_signal() {
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let bad = Path { grid, values: vec![0.0; 3] };
        let model = constant_model(0.0, 0.0, 0.0, 0.0);
        assert!(matches!(
            simulate_observation(&bad, &model, &mut CounterRng::new(1)),
            Err(Error::Dimension { expected: 5, found: 3 })
        ));
    }

    #[test]
    fn reference_observation_single_increment() {
        let grid = TimeGrid::new(1.0, 1).unwrap();
        let n = 100_000;
        let mean = (0..n)
            .map(|r| {
                reference_measure_observation(grid, &mut CounterRng::stream(5, Stream::ReferenceObservation, &[r]))
                    .last()
            })
            .sum::<f64>()
            / n as f64;
        assert!(mean.abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn reference_observation_deterministic() {
        let grid = TimeGrid::new(1.0, 64).unwrap();
        let a = reference_measure_observation(grid, &mut CounterRng::new(3));
        let b = reference_measure_observation(grid, &mut CounterRng::new(3));
        assert_eq!(a, b);
    }

    #[test]
    fn reference_observation_terminal_variance() {
        let grid = TimeGrid::new(2.0, 20).unwrap();
        let n = 10_000u64;
        let ends: Vec<f64> = (0..n)
            .map(|r| reference_measure_observation(grid, &mut CounterRng::keyed(77, &[r])).last())
            .collect();
        let mean = ends.iter().sum::<f64>() / n as f64;
        let var = ends.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((var / 2.0 - 1.0).abs() < 0.05, "var {var}");
    }

    #[test]
    fn grid_index_lookup() {
        let grid = TimeGrid::new(10.0, 100).unwrap();
        assert_eq!(grid.index_of(10.0), Some(100));
        assert_eq!(grid.index_of(0.3), Some(3));
        assert_eq!(grid.index_of(0.35), None);
        assert_eq!(grid.index_of(10.1), None);
        assert!(TimeGrid::new(0.0, 3).is_err());
        assert!(TimeGrid::new(1.0, 0).is_err());
    }

    #[test]
    fn coarsening_telescopes() {
        let grid = TimeGrid::new(1.0, 1000).unwrap();
        let y = reference_measure_observation(grid, &mut CounterRng::new(2));
        let coarse = y.coarsen_to(100).unwrap();
        assert_eq!(coarse.values().len(), 101);
        for k in 0..100 {
            let fine_sum: f64 = (10 * k..10 * k + 10).map(|j| y.increment(j)).sum();
            assert!((coarse.increment(k) - fine_sum).abs() < 1e-12);
        }
        assert!(y.coarsen_to(300).is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let grid = TimeGrid::new(1.0, 16).unwrap();
        let y = reference_measure_observation(grid, &mut CounterRng::new(4));
        let mut buf = Vec::new();
        y.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,value\n"));
        let back = Path::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.values(), y.values());
        assert_eq!(back.grid().steps(), 16);
    }
}

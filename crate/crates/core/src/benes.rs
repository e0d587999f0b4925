//! Exact posterior of the Beneš filter.
//!
//! Signal `dX = μσ tanh(μX/σ) dt + σ dV`, observation `dY = (h₁X + h₂) dt + dW`.
//! Given `Y` on `[0, t]`, `X_t` is a two-component Gaussian mixture
//!
//! ```text
//! π_t = w⁺ N(A⁺/2B, 1/2B) + w⁻ N(A⁻/2B, 1/2B)
//! A±  = ±μ/σ + h₁Ψ_t + (h₁X₀ + h₂)/(σ sinh(h₁σt)) − (h₂/σ) coth(h₁σt)
//! B   = (h₁/2σ) coth(h₁σt)
//! w±  ∝ exp((A±)²/4B)
//! Ψ_t = ∫₀ᵗ sinh(h₁σs)/sinh(h₁σt) dY_s
//! ```
//!
//! `Ψ_t` is evaluated on the observation grid with the right-endpoint sum
//! `Σ_{k<i} sinh(h₁σt_{k+1})/sinh(h₁σt_i)·(Y_{t_{k+1}} − Y_{t_k})`.

use std::io::Write;

use crate::error::{Error, Result};
use crate::mixture::{GaussianComponent, GaussianMixture};
use crate::model::{fmt_f64, InitialLaw, ModelSpec, Path};

/// Largest `|h₁σt|` accepted before `sinh` is considered to overflow.
pub const SINH_ARGUMENT_LIMIT: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenesParams {
    pub mu: f64,
    pub sigma: f64,
    pub h1: f64,
    pub h2: f64,
    pub x0: f64,
    pub horizon: f64,
}

impl Default for BenesParams {
    /// `μ = 0.3, σ = 1, h₁ = 0.8, h₂ = 0, X₀ = 0, T = 10`.
    fn default() -> Self {
        Self {
            mu: 0.3,
            sigma: 1.0,
            h1: 0.8,
            h2: 0.0,
            x0: 0.0,
            horizon: 10.0,
        }
    }
}

impl BenesParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Domain(format!("sigma must be positive, got {}", self.sigma)));
        }
        if self.h1 == 0.0 {
            return Err(Error::Domain("h1 = 0 is not supported (coth singularity)".into()));
        }
        if !(self.horizon > 0.0) {
            return Err(Error::Domain(format!("horizon must be positive, got {}", self.horizon)));
        }
        Ok(())
    }

    /// The signal/observation model these parameters describe.
    pub fn model(&self) -> ModelSpec {
        let BenesParams { mu, sigma, h1, h2, x0, .. } = *self;
        ModelSpec::new(
            move |x| mu * sigma * (mu * x / sigma).tanh(),
            move |_| sigma,
            move |x| h1 * x + h2,
            InitialLaw::PointMass(x0),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenesPosterior {
    pub t: f64,
    pub w_plus: f64,
    pub w_minus: f64,
    pub a_plus: f64,
    pub a_minus: f64,
    pub b: f64,
}

impl BenesPosterior {
    pub fn mean_plus(&self) -> f64 {
        self.a_plus / (2.0 * self.b)
    }

    pub fn mean_minus(&self) -> f64 {
        self.a_minus / (2.0 * self.b)
    }

    /// Common component variance `1/2B`.
    pub fn variance(&self) -> f64 {
        1.0 / (2.0 * self.b)
    }

    pub fn mixture(&self) -> GaussianMixture {
        GaussianMixture::new(vec![
            GaussianComponent::new(self.w_plus, self.mean_plus(), self.variance()),
            GaussianComponent::new(self.w_minus, self.mean_minus(), self.variance()),
        ])
    }
}

fn check_index(observations: &Path, t_index: usize) -> Result<()> {
    if t_index == 0 {
        return Err(Error::Domain("the exact filter is defined for t > 0 only".into()));
    }
    if t_index > observations.grid().steps() {
        return Err(Error::Domain(format!(
            "grid index {t_index} beyond the {} steps of the observation path",
            observations.grid().steps()
        )));
    }
    Ok(())
}

/// Discretised `Ψ_t` at grid point `t_index`.
pub fn psi(observations: &Path, t_index: usize, params: &BenesParams) -> Result<f64> {
    check_index(observations, t_index)?;
    let grid = observations.grid();
    let k = params.h1 * params.sigma;
    let arg = k * grid.time(t_index);
    if arg.abs() >= SINH_ARGUMENT_LIMIT {
        return Err(Error::Range(format!("|h1·sigma·t| = {} exceeds {SINH_ARGUMENT_LIMIT}", arg.abs())));
    }
    let denom = arg.sinh();
    let y = observations.values();
    let sum: f64 = (0..t_index)
        .map(|j| (k * grid.time(j + 1)).sinh() * (y[j + 1] - y[j]))
        .sum();
    Ok(sum / denom)
}

/// Exact posterior at grid point `t_index`; the weights are normalised in
/// log space.
pub fn exact_posterior(observations: &Path, t_index: usize, params: &BenesParams) -> Result<BenesPosterior> {
    params.validate()?;
    let psi_t = psi(observations, t_index, params)?;
    let BenesParams { mu, sigma, h1, h2, x0, .. } = *params;
    let t = observations.grid().time(t_index);
    let arg = h1 * sigma * t;
    let coth = 1.0 / arg.tanh();
    let common = h1 * psi_t + (h1 * x0 + h2) / (sigma * arg.sinh()) - (h2 / sigma) * coth;
    let a_plus = mu / sigma + common;
    let a_minus = -mu / sigma + common;
    let b = h1 / (2.0 * sigma) * coth;
    if !(b > 0.0) {
        return Err(Error::Domain(format!("non-positive precision B = {b}")));
    }
    let lp = a_plus * a_plus / (4.0 * b);
    let lm = a_minus * a_minus / (4.0 * b);
    let shift = lp.max(lm);
    let (ep, em) = ((lp - shift).exp(), (lm - shift).exp());
    Ok(BenesPosterior {
        t,
        w_plus: ep / (ep + em),
        w_minus: em / (ep + em),
        a_plus,
        a_minus,
        b,
    })
}

/// `E[X^degree]` under the exact posterior, degree in 1..=3.
pub fn exact_moment(post: &BenesPosterior, degree: u32) -> Result<f64> {
    if !(1..=3).contains(&degree) {
        return Err(Error::UnsupportedDegree(degree));
    }
    post.mixture().expect_monomial(degree)
}

/// CSV `t,w_plus,mean_plus,mean_minus,variance,m1,m2,m3`, one row per posterior.
pub fn write_oracle_csv<W: Write>(posteriors: &[BenesPosterior], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "w_plus", "mean_plus", "mean_minus", "variance", "m1", "m2", "m3"])?;
    for p in posteriors {
        w.write_record([
            fmt_f64(p.t),
            fmt_f64(p.w_plus),
            fmt_f64(p.mean_plus()),
            fmt_f64(p.mean_minus()),
            fmt_f64(p.variance()),
            fmt_f64(exact_moment(p, 1)?),
            fmt_f64(exact_moment(p, 2)?),
            fmt_f64(exact_moment(p, 3)?),
        ])?;
    }
    w.flush()?;
    Ok(())
}

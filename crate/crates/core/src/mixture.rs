//! Weighted one-dimensional Gaussian mixtures.
//!
//! A component with zero variance is a Dirac mass; everything except
//! [`GaussianMixture::density_at`] accepts it.

use std::f64::consts::PI;
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::model::{fmt_f64, parse_f64};
use crate::quadrature::GaussHermite;

pub const DEFAULT_QUADRATURE_ORDER: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianComponent {
    pub weight: f64,
    pub mean: f64,
    pub variance: f64,
}

impl GaussianComponent {
    pub fn new(weight: f64, mean: f64, variance: f64) -> Self {
        Self { weight, mean, variance }
    }

    /// Raw moment `E[X^degree]` of `N(mean, variance)`, degree ≤ 3.
    pub fn raw_moment(&self, degree: u32) -> Result<f64> {
        let (v, w) = (self.mean, self.variance);
        Ok(match degree {
            0 => 1.0,
            1 => v,
            2 => v * v + w,
            3 => v * v * v + 3.0 * v * w,
            d => return Err(Error::UnsupportedDegree(d)),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GaussianMixture {
    components: Vec<GaussianComponent>,
}

impl GaussianMixture {
    pub fn new(components: Vec<GaussianComponent>) -> Self {
        Self { components }
    }

    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.components.iter().map(|c| c.weight).sum()
    }

    /// `Σ_j w_j E_j[X^degree]` in closed form.
    pub fn expect_monomial(&self, degree: u32) -> Result<f64> {
        self.components
            .iter()
            .try_fold(0.0, |acc, c| Ok(acc + c.weight * c.raw_moment(degree)?))
    }

    /// `Σ_j w_j E_j[φ(X)]` by Gauss–Hermite quadrature of the given order.
    /// Dirac components are evaluated directly at their mean.
    pub fn expect_function<F>(&self, mut phi: F, quadrature_order: usize) -> Result<f64>
    where
        F: FnMut(f64) -> f64,
    {
        let rule = GaussHermite::cached(quadrature_order)?;
        let mut acc = 0.0;
        for c in &self.components {
            let e = if c.variance == 0.0 {
                let y = phi(c.mean);
                if !y.is_finite() {
                    return Err(Error::NonFiniteEvaluation { x: c.mean });
                }
                y
            } else {
                rule.expect_normal(c.mean, c.variance, &mut phi)?
            };
            acc += c.weight * e;
        }
        Ok(acc)
    }

    /// Lebesgue density of the mixture at `x`.
    pub fn density_at(&self, x: f64) -> Result<f64> {
        let mut acc = 0.0;
        for (index, c) in self.components.iter().enumerate() {
            if c.variance <= 0.0 {
                return Err(Error::DegenerateDensity { index });
            }
            let d = x - c.mean;
            acc += c.weight * (-d * d / (2.0 * c.variance)).exp() / (2.0 * PI * c.variance).sqrt();
        }
        Ok(acc)
    }

    /// CSV with header `weight,mean,variance`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["weight", "mean", "variance"])?;
        for c in &self.components {
            w.write_record([fmt_f64(c.weight), fmt_f64(c.mean), fmt_f64(c.variance)])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let headers = r.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["weight", "mean", "variance"] {
            return Err(Error::Parse(format!("unexpected mixture header {headers:?}")));
        }
        let mut components = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            components.push(GaussianComponent::new(
                parse_f64(&rec[0])?,
                parse_f64(&rec[1])?,
                parse_f64(&rec[2])?,
            ));
        }
        Ok(Self { components })
    }
}

impl FromIterator<GaussianComponent> for GaussianMixture {
    fn from_iter<I: IntoIterator<Item = GaussianComponent>>(iter: I) -> Self {
        Self::new(iter.into_iter().collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn single(w: f64, v: f64, o: f64) -> GaussianMixture {
        GaussianMixture::new(vec![GaussianComponent::new(w, v, o)])
    }

    #[test]
    fn closed_form_moments() {
        let m = single(1.0, 2.0, 1.0);
        assert_eq!(m.expect_monomial(2).unwrap(), 5.0);
        assert_eq!(m.expect_monomial(3).unwrap(), 14.0);
        let sym = GaussianMixture::new(vec![
            GaussianComponent::new(0.5, -1.0, 0.0),
            GaussianComponent::new(0.5, 1.0, 0.0),
        ]);
        assert_eq!(sym.expect_monomial(1).unwrap(), 0.0);
        assert!(matches!(m.expect_monomial(4), Err(Error::UnsupportedDegree(4))));
    }

    #[test]
    fn quadrature_exact_for_quadratic() {
        let m = single(1.0, 2.0, 1.0);
        assert!((m.expect_function(|x| x * x, 2).unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn quadrature_matches_cubic_closed_form() {
        let m = GaussianMixture::new(vec![
            GaussianComponent::new(0.5, 0.0, 1.0),
            GaussianComponent::new(0.5, 1.0, 2.0),
        ]);
        let q = m.expect_function(|x| x.powi(3), 20).unwrap();
        assert!((q - m.expect_monomial(3).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn constant_function_gives_total_weight() {
        let m = GaussianMixture::new(vec![
            GaussianComponent::new(0.2, -3.0, 0.5),
            GaussianComponent::new(0.3, 0.0, 0.0),
            GaussianComponent::new(0.5, 4.0, 2.0),
        ]);
        assert!((m.expect_function(|_| 1.0, 20).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn standard_normal_density_at_zero() {
        let d = single(1.0, 0.0, 1.0).density_at(0.0).unwrap();
        assert!((d - 0.3989422804014327).abs() < 1e-12);
    }

    #[test]
    fn density_rejects_dirac_component() {
        let m = GaussianMixture::new(vec![
            GaussianComponent::new(0.5, 0.0, 1.0),
            GaussianComponent::new(0.5, 1.0, 0.0),
        ]);
        assert!(matches!(m.density_at(0.0), Err(Error::DegenerateDensity { index: 1 })));
    }

    #[test]
    fn density_integrates_to_one() {
        let m = GaussianMixture::new(vec![
            GaussianComponent::new(0.3, -2.0, 0.4),
            GaussianComponent::new(0.7, 1.5, 2.5),
        ]);
        let (a, b, k) = (-20.0, 20.0, 100_000usize);
        let h = (b - a) / k as f64;
        let mut s = 0.5 * (m.density_at(a).unwrap() + m.density_at(b).unwrap());
        for i in 1..k {
            s += m.density_at(a + i as f64 * h).unwrap();
        }
        assert!((s * h - 1.0).abs() < 1e-6);
    }

    #[test]
    fn non_finite_dirac_evaluation_errors() {
        let m = single(1.0, 0.0, 0.0);
        assert!(matches!(
            m.expect_function(|x| 1.0 / x, 20),
            Err(Error::NonFiniteEvaluation { x }) if x == 0.0
        ));
    }

    #[test]
    fn csv_round_trip() {
        let m = GaussianMixture::new(vec![
            GaussianComponent::new(0.25, -1.0 / 3.0, 0.1),
            GaussianComponent::new(0.75, 2.0, 0.0),
        ]);
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        assert!(buf.starts_with(b"weight,mean,variance\n"));
        assert_eq!(GaussianMixture::read_csv(buf.as_slice()).unwrap(), m);
    }

    fn mixture_strategy() -> impl Strategy<Value = GaussianMixture> {
        prop::collection::vec((0.01f64..1.0, -5.0f64..5.0, 0.01f64..4.0), 1..6).prop_map(|raw| {
            let total: f64 = raw.iter().map(|r| r.0).sum();
            raw.into_iter()
                .map(|(w, v, o)| GaussianComponent::new(w / total, v, o))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn quadrature_reproduces_monomials(m in mixture_strategy()) {
            for d in 0..=3u32 {
                let q = m.expect_function(|x| x.powi(d as i32), 2).unwrap();
                prop_assert!((q - m.expect_monomial(d).unwrap()).abs() < 1e-10);
            }
        }

        #[test]
        fn dirac_limit_is_exact(points in prop::collection::vec((0.0f64..1.0, -5.0f64..5.0), 1..6)) {
            let m: GaussianMixture = points.iter().map(|&(w, v)| GaussianComponent::new(w, v, 0.0)).collect();
            let phi = |x: f64| (x * 0.7).sin() + x * x;
            let direct: f64 = points.iter().map(|&(w, v)| w * phi(v)).sum();
            prop_assert_eq!(m.expect_function(phi, 20).unwrap(), direct);
        }

        #[test]
        fn expectation_is_linear(m in mixture_strategy(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let phi = |x: f64| x.cos();
            let psi = |x: f64| x * x;
            let lhs = m.expect_function(|x| a * phi(x) + b * psi(x), 20).unwrap();
            let rhs = a * m.expect_function(phi, 20).unwrap() + b * m.expect_function(psi, 20).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-12 * (1.0 + lhs.abs()));
        }

        #[test]
        fn symmetric_mixture_has_even_density(v in 0.0f64..4.0, o in 0.05f64..3.0, x in -6.0f64..6.0) {
            let m = GaussianMixture::new(vec![
                GaussianComponent::new(0.5, -v, o),
                GaussianComponent::new(0.5, v, o),
            ]);
            let (l, r) = (m.density_at(x).unwrap(), m.density_at(-x).unwrap());
            prop_assert!((l - r).abs() <= 1e-15 * l.max(1e-300) + 1e-300);
        }
    }
}

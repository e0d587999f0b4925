//! Gauss–Hermite quadrature: Golub–Welsch nodes polished by Newton iteration.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Gauss–Hermite rule normalised against the standard normal law:
/// `E[φ(Z)] ≈ Σ_q λ_q φ(√2·x_q)` with `Σ λ_q = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    /// Nodes `x_q` are the roots of the physicists' Hermite polynomial of
    /// degree `order`; the weights are divided by `√π`. Exact for
    /// polynomials of degree `≤ 2·order − 1`.
    pub fn new(order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::Config("quadrature order must be at least 1".into()));
        }
        // Jacobi matrix of the Hermite recurrence: zero diagonal, sqrt(k/2) off it.
        let mut jacobi = DMatrix::<f64>::zeros(order, order);
        for k in 1..order {
            let b = (k as f64 / 2.0).sqrt();
            jacobi[(k - 1, k)] = b;
            jacobi[(k, k - 1)] = b;
        }
        let eigen = SymmetricEigen::new(jacobi);
        // Eigenvalues seed Newton polishing; weights from the Christoffel function.
        let mut pairs: Vec<(f64, f64)> = (0..order)
            .map(|i| {
                let mut x = eigen.eigenvalues[i];
                for _ in 0..4 {
                    let (p, dp, _) = orthonormal_hermite(order, x);
                    if dp == 0.0 {
                        break;
                    }
                    x -= p / dp;
                }
                let (_, _, christoffel) = orthonormal_hermite(order, x);
                (x, 1.0 / christoffel)
            })
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));

        // The rule is symmetric about zero; enforce it exactly.
        let mut nodes: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let mut weights: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        for i in 0..order / 2 {
            let j = order - 1 - i;
            let x = 0.5 * (nodes[j] - nodes[i]);
            let w = 0.5 * (weights[i] + weights[j]);
            nodes[i] = -x;
            nodes[j] = x;
            weights[i] = w;
            weights[j] = w;
        }
        if order % 2 == 1 {
            nodes[order / 2] = 0.0;
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        Ok(Self { nodes, weights })
    }

    /// Shared rule for `order`, computed once per process.
    pub fn cached(order: usize) -> Result<Arc<Self>> {
        static CACHE: OnceLock<RwLock<HashMap<usize, Arc<GaussHermite>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(Default::default);
        if let Some(rule) = cache.read().expect("quadrature cache poisoned").get(&order) {
            return Ok(Arc::clone(rule));
        }
        let rule = Arc::new(Self::new(order)?);
        let mut map = cache.write().expect("quadrature cache poisoned");
        Ok(Arc::clone(map.entry(order).or_insert(rule)))
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Weights normalised to sum to one.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `E[φ(mean + √variance·Z)]` for `Z ~ N(0, 1)`.
    pub fn expect_normal<F>(&self, mean: f64, variance: f64, mut phi: F) -> Result<f64>
    where
        F: FnMut(f64) -> f64,
    {
        let scale = (2.0 * variance).sqrt();
        let mut acc = 0.0;
        for (&x, &w) in self.nodes.iter().zip(&self.weights) {
            let at = mean + scale * x;
            let y = phi(at);
            if !y.is_finite() {
                return Err(Error::NonFiniteEvaluation { x: at });
            }
            acc += w * y;
        }
        Ok(acc)
    }
}

/// Orthonormal Hermite recurrence at `x`: returns `(p_n, p_n', Σ_{k<n} p_k²)`.
fn orthonormal_hermite(n: usize, x: f64) -> (f64, f64, f64) {
    let mut prev = 0.0;
    let mut cur = std::f64::consts::PI.powf(-0.25);
    let mut sum_sq = 0.0;
    for k in 0..n {
        sum_sq += cur * cur;
        let kf = k as f64;
        let next = x * (2.0 / (kf + 1.0)).sqrt() * cur - (kf / (kf + 1.0)).sqrt() * prev;
        prev = cur;
        cur = next;
    }
    (cur, (2.0 * n as f64).sqrt() * prev, sum_sq)
}

//! Generalised particle filters with Gaussian mixtures.
//!
//! The crate approximates the conditional law of a one-dimensional diffusion
//! signal observed through a noisy integrated sensor by a mixture of `n`
//! Gaussian components whose weights, means and variances evolve between
//! periodic correction (branching) times. Setting the interpolation
//! parameter `α` to zero recovers the classic bootstrap particle filter.
//!
//! * [`model`]: signal/observation models and Euler–Maruyama simulation.
//! * [`mixture`]: Gaussian mixtures, closed-form moments and quadrature.
//! * [`filter`]: the particle system and the filtering recursion.
//! * [`branching`]: tree based and multinomial offspring allocation.
//! * [`benes`]: the exact Beneš filter used as ground truth.
//! * [`experiment`]: convergence experiments against the Beneš filter.
//!
//! A guide with worked examples lives in the `book/` directory of the
//! repository.

pub mod benes;
pub mod branching;
pub mod error;
pub mod experiment;
pub mod filter;
pub mod mixture;
pub mod model;
pub mod quadrature;
pub mod rng;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/models.md")]
    mod models {}
    #[doc = include_str!("../../../book/src/mixtures.md")]
    mod mixtures {}
    #[doc = include_str!("../../../book/src/particles.md")]
    mod particles {}
    #[doc = include_str!("../../../book/src/branching.md")]
    mod branching {}
    #[doc = include_str!("../../../book/src/benes.md")]
    mod benes {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}

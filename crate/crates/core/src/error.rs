use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("simulation diverged at step {step}")]
    SimulationDiverged { step: usize },

    #[error("dimension mismatch: expected {expected} values, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("unsupported moment degree {0} (supported: 0..=3)")]
    UnsupportedDegree(u32),

    #[error("test function is not finite at x = {x}")]
    NonFiniteEvaluation { x: f64 },

    #[error("density undefined: component {index} has zero variance")]
    DegenerateDensity { index: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("weight collapse: particle {particle} reached non-positive weight {weight}")]
    WeightCollapse { particle: usize, weight: f64 },

    #[error("particle {particle} diverged at t = {t}")]
    Divergence { particle: usize, t: f64 },

    #[error("all particle weights are zero")]
    DegenerateWeights,

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("range error: {0}")]
    Range(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("lattice side must be at least 2, got {0}")]
    LatticeTooSmall(usize),
    #[error("invalid couplings: {0}")]
    InvalidCouplings(String),
    #[error("expected {expected} angles for the lattice, got {actual}")]
    AngleCount { expected: usize, actual: usize },
    #[error("non-finite angle {value} at site {site}")]
    NonFiniteAngle { site: usize, value: f64 },
    #[error("non-finite {quantity} at site {site}")]
    NonFiniteDerivative { quantity: &'static str, site: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("configurations in one batch must share a lattice (side {expected} vs {actual})")]
    MixedLattices { expected: usize, actual: usize },
    #[error("invalid settings: {0}")]
    InvalidSettings(String),
    #[error("dataset {path}: {reason}")]
    Dataset { path: PathBuf, reason: String },
    #[error("HMC chain {chain} aborted at iteration {iteration}: non-finite gradient at site {site}")]
    ChainAborted { chain: usize, iteration: usize, site: usize },
    #[error("energy per site {energy_per_site} exceeds the guard {guard} at step {step}")]
    DivergentEnergy {
        step: usize,
        energy_per_site: f64,
        guard: f64,
        trace: crate::vmc::VmcTrace,
    },
    #[error("fit: {0}")]
    Fit(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = CoreError> = std::result::Result<T, E>;

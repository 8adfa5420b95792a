//! Magnetization and potential-energy density of sample batches.

use serde::{Deserialize, Serialize};

use crate::lattice::{CouplingParams, LatticeSpec, RotorConfiguration};
use crate::{CoreError, Result};

/// Batch averages of the two observables with their standard errors.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservableRecord {
    pub magnetization: f64,
    pub potential_energy_density: f64,
    pub sample_count: usize,
    pub magnetization_stderr: f64,
    pub potential_energy_stderr: f64,
}

/// `|sum_k n_k| / N` for one configuration.
pub fn config_magnetization(angles: &[f64]) -> f64 {
    let (c, s) = angles
        .iter()
        .fold((0.0, 0.0), |(c, s), a| (c + a.cos(), s + a.sin()));
    (c.hypot(s) / angles.len() as f64).min(1.0)
}

/// `-(J/N) sum_<kl> cos(theta_k - theta_l)` for one configuration.
pub fn config_potential_energy(lattice: &LatticeSpec, angles: &[f64], j: f64) -> f64 {
    let mut sum = 0.0;
    for s in 0..lattice.sites() {
        sum += (angles[s] - angles[lattice.right(s)]).cos();
        sum += (angles[s] - angles[lattice.down(s)]).cos();
    }
    -j * sum / lattice.sites() as f64
}

fn shared_lattice(batch: &[RotorConfiguration]) -> Result<LatticeSpec> {
    let first = batch.first().ok_or(CoreError::EmptyBatch)?.lattice();
    if let Some(other) = batch.iter().find(|c| c.lattice() != first) {
        return Err(CoreError::MixedLattices {
            expected: first.side(),
            actual: other.lattice().side(),
        });
    }
    Ok(first)
}

pub fn magnetization(batch: &[RotorConfiguration]) -> Result<f64> {
    shared_lattice(batch)?;
    Ok(batch.iter().map(|c| config_magnetization(c.angles())).sum::<f64>() / batch.len() as f64)
}

pub fn potential_energy_density(batch: &[RotorConfiguration], params: CouplingParams) -> Result<f64> {
    let lattice = shared_lattice(batch)?;
    let total: f64 = batch
        .iter()
        .map(|c| config_potential_energy(&lattice, c.angles(), params.j))
        .sum();
    Ok(total / batch.len() as f64)
}

/// Mean and standard error of the mean (zero for a single value).
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Both observables with per-sample standard errors.
pub fn measure(batch: &[RotorConfiguration], params: CouplingParams) -> Result<ObservableRecord> {
    let lattice = shared_lattice(batch)?;
    let m: Vec<f64> = batch.iter().map(|c| config_magnetization(c.angles())).collect();
    let e: Vec<f64> = batch
        .iter()
        .map(|c| config_potential_energy(&lattice, c.angles(), params.j))
        .collect();
    let (magnetization, magnetization_stderr) = mean_stderr(&m);
    let (potential_energy_density, potential_energy_stderr) = mean_stderr(&e);
    Ok(ObservableRecord {
        magnetization,
        potential_energy_density,
        sample_count: batch.len(),
        magnetization_stderr,
        potential_energy_stderr,
    })
}

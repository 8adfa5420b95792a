//! Two-dimensional quantum rotor model on periodic square lattices.
//!
//! The Hamiltonian is `H = (J g / 2) sum_i L_i^2 - J sum_<kl> cos(theta_k - theta_l)`.
//! This crate holds the domain types and observables, the `QRGS` dataset
//! format, variational Monte Carlo with Hamiltonian Monte Carlo sampling, and
//! the curve analysis that turns latent scans into critical couplings.

pub mod analysis;
pub mod ansatz;
pub mod dataset;
mod error;
pub mod hmc;
pub mod lattice;
pub mod observables;
pub mod par;
pub mod vmc;

pub use ansatz::{local_energy, Ansatz, AnsatzKind};
pub use dataset::{read_dataset, write_dataset, DatasetHeader, Producer};
pub use error::{CoreError, Result};
pub use hmc::{hmc_chain, HmcChain, HmcSettings};
pub use lattice::{wrap_angle, CouplingParams, LatticeSpec, RotorConfiguration};
pub use observables::{magnetization, measure, potential_energy_density, ObservableRecord};
pub use vmc::{generate_dataset, vmc_optimize, VmcSettings, VmcTrace};

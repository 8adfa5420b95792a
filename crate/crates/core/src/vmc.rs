//! Variational energy minimization with HMC sampling and Adam updates, and
//! dataset generation from the optimized wavefunction.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ansatz::{local_energy_from, Ansatz, AnsatzKind};
use crate::dataset::{write_dataset, DatasetHeader, Producer};
use crate::hmc::{burn_in_chains, mean_acceptance, sample_chains, HmcChain, HmcSettings};
use crate::lattice::{CouplingParams, LatticeSpec, RotorConfiguration};
use crate::{par, CoreError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VmcSettings {
    pub hmc: HmcSettings,
    pub opt_steps: usize,
    pub batch_per_step: usize,
    pub learning_rate: f64,
    /// Abort when `|E| / N` exceeds this multiple of `J`.
    pub energy_guard: f64,
    /// Multiplicative step-size correction toward the target acceptance between
    /// optimization steps (the step size is frozen within a step).
    pub retune_rate: f64,
    /// Fraction of the final steps whose parameters are averaged into the result.
    pub average_tail: f64,
}

impl Default for VmcSettings {
    fn default() -> Self {
        VmcSettings {
            hmc: HmcSettings::default(),
            opt_steps: 300,
            batch_per_step: 256,
            learning_rate: 0.05,
            energy_guard: 100.0,
            retune_rate: 1.0,
            average_tail: 0.2,
        }
    }
}

impl VmcSettings {
    pub fn validate(&self) -> Result<()> {
        self.hmc.validate()?;
        if self.opt_steps == 0 {
            return Err(CoreError::InvalidSettings("at least one optimization step is required".into()));
        }
        if self.batch_per_step < 2 {
            return Err(CoreError::InvalidSettings("batch per step must be at least 2".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(CoreError::InvalidSettings(format!("bad learning rate {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.average_tail) {
            return Err(CoreError::InvalidSettings(format!("average tail must lie in [0, 1), got {}", self.average_tail)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VmcTraceRow {
    pub step: usize,
    pub energy: f64,
    pub variance: f64,
    pub acceptance_rate: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VmcTrace {
    pub rows: Vec<VmcTraceRow>,
}

impl VmcTrace {
    pub fn energies(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.energy).collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Sample mean, variance and standard error of the local energy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyEstimate {
    pub mean: f64,
    pub variance: f64,
    pub stderr: f64,
    pub acceptance_rate: f64,
    pub samples: usize,
}

/// Local energies and `d ln Psi / d w` for a batch.
fn evaluate_batch(ansatz: &Ansatz, params: CouplingParams, batch: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let results = par::map_range(batch.len(), |i| -> Result<(f64, Vec<f64>)> {
        let d = ansatz.derivatives(&batch[i])?;
        let e = local_energy_from(ansatz, &batch[i], params, &d)?;
        Ok((e, ansatz.param_gradient(&batch[i])?))
    });
    let mut energies = Vec::with_capacity(batch.len());
    let mut grads = Vec::with_capacity(batch.len());
    for r in results {
        let (e, g) = r?;
        energies.push(e);
        grads.push(g);
    }
    Ok((energies, grads))
}

fn mean_var(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var)
}

/// `2 <(E_loc - <E_loc>) d ln Psi / d w>` over a batch.
pub fn covariance_gradient(energies: &[f64], log_grads: &[Vec<f64>]) -> Vec<f64> {
    let (mean, _) = mean_var(energies);
    let n = energies.len() as f64;
    let mut g = vec![0.0; log_grads.first().map_or(0, |v| v.len())];
    for (e, o) in energies.iter().zip(log_grads) {
        for (gi, oi) in g.iter_mut().zip(o) {
            *gi += 2.0 * (e - mean) * oi / n;
        }
    }
    g
}

/// Adam with bias correction over one flat parameter vector.
struct Adam {
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(lr: f64, n: usize) -> Self {
        Adam {
            lr,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        self.t += 1;
        let c1 = 1.0 - B1.powi(self.t);
        let c2 = 1.0 - B2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = B1 * self.m[i] + (1.0 - B1) * grad[i];
            self.v[i] = B2 * self.v[i] + (1.0 - B2) * grad[i] * grad[i];
            params[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + 1e-8);
        }
    }
}

/// Persistent chains plus the sampling bookkeeping shared by optimization and generation.
pub struct Sampler {
    chains: Vec<HmcChain>,
    settings: HmcSettings,
}

impl Sampler {
    /// Random starts, then burn-in with step-size adaptation.
    pub fn new(ansatz: &Ansatz, settings: &HmcSettings) -> Result<Self> {
        settings.validate()?;
        let mut chains = (0..settings.chains)
            .map(|c| HmcChain::random_start(settings, c, ansatz.sites()))
            .collect::<Result<Vec<_>>>()?;
        burn_in_chains(ansatz, &mut chains, settings)?;
        Ok(Sampler {
            chains,
            settings: settings.clone(),
        })
    }

    /// At least `n` samples (rounded up to a multiple of the chain count),
    /// truncated to exactly `n`, ordered by chain index then draw.
    pub fn draw(&mut self, ansatz: &Ansatz, n: usize) -> Result<Vec<Vec<f64>>> {
        let per_chain = n.div_ceil(self.chains.len());
        let mut samples = sample_chains(ansatz, &mut self.chains, per_chain)?;
        if samples.len() > n {
            // keep every chain represented: take round-robin by chain
            let k = self.chains.len();
            let mut picked = Vec::with_capacity(n);
            'outer: for d in 0..per_chain {
                for c in 0..k {
                    if picked.len() == n {
                        break 'outer;
                    }
                    picked.push(std::mem::take(&mut samples[c * per_chain + d]));
                }
            }
            samples = picked;
        }
        Ok(samples)
    }

    pub fn acceptance_rate(&self) -> f64 {
        mean_acceptance(&self.chains)
    }

    pub fn reset_counters(&mut self) {
        self.chains.iter_mut().for_each(|c| c.reset_counters());
    }

    /// Nudge each chain's step size toward the target acceptance.
    pub fn retune(&mut self, rate: f64) {
        let target = self.settings.target_acceptance;
        for c in &mut self.chains {
            let r = c.acceptance_rate();
            c.set_step_size(c.step_size() * (rate * (r - target)).exp());
        }
    }

    pub fn chains(&self) -> &[HmcChain] {
        &self.chains
    }
}

/// Minimize the variational energy. Each step samples a fresh batch from the
/// persistent chains, forms the covariance gradient and applies Adam.
pub fn vmc_optimize(init: Ansatz, params: CouplingParams, settings: &VmcSettings) -> Result<(Ansatz, VmcTrace)> {
    let (ansatz, trace, _) = optimize_with_sampler(init, params, settings)?;
    Ok((ansatz, trace))
}

fn optimize_with_sampler(
    mut ansatz: Ansatz,
    params: CouplingParams,
    settings: &VmcSettings,
) -> Result<(Ansatz, VmcTrace, Sampler)> {
    settings.validate()?;
    let mut sampler = Sampler::new(&ansatz, &settings.hmc)?;
    let mut adam = Adam::new(settings.learning_rate, ansatz.params().len());
    let mut trace = VmcTrace::default();
    let sites = ansatz.sites().max(1) as f64;
    let tail_start = settings.opt_steps - (settings.average_tail * settings.opt_steps as f64) as usize;
    let mut tail_sum = vec![0.0; ansatz.params().len()];
    for step in 0..settings.opt_steps {
        sampler.reset_counters();
        let batch = sampler.draw(&ansatz, settings.batch_per_step)?;
        let (energies, log_grads) = evaluate_batch(&ansatz, params, &batch)?;
        let (energy, variance) = mean_var(&energies);
        trace.rows.push(VmcTraceRow {
            step,
            energy,
            variance,
            acceptance_rate: sampler.acceptance_rate(),
        });
        let per_site = energy.abs() / sites;
        if !energy.is_finite() || per_site > settings.energy_guard * params.j {
            return Err(CoreError::DivergentEnergy {
                step,
                energy_per_site: per_site,
                guard: settings.energy_guard * params.j,
                trace,
            });
        }
        let grad = covariance_gradient(&energies, &log_grads);
        adam.step(ansatz.params_mut(), &grad);
        if step >= tail_start {
            for (s, p) in tail_sum.iter_mut().zip(ansatz.params()) {
                *s += p;
            }
        }
        if settings.retune_rate > 0.0 {
            sampler.retune(settings.retune_rate);
        }
    }
    let tail = settings.opt_steps - tail_start;
    if tail > 0 {
        let averaged = tail_sum.iter().map(|s| s / tail as f64).collect();
        ansatz = ansatz.with_params(averaged)?;
    }
    Ok((ansatz, trace, sampler))
}

/// Energy of a frozen ansatz from `n` fresh samples.
pub fn estimate_energy(ansatz: &Ansatz, params: CouplingParams, settings: &HmcSettings, n: usize) -> Result<EnergyEstimate> {
    let mut sampler = Sampler::new(ansatz, settings)?;
    let batch = sampler.draw(ansatz, n)?;
    let (energies, _) = evaluate_batch(ansatz, params, &batch)?;
    let (mean, variance) = mean_var(&energies);
    Ok(EnergyEstimate {
        mean,
        variance,
        stderr: (variance / energies.len() as f64).sqrt(),
        acceptance_rate: sampler.acceptance_rate(),
        samples: energies.len(),
    })
}

/// Output of [`generate_dataset`].
#[derive(Clone, Debug)]
pub struct GeneratedDataset {
    pub header: DatasetHeader,
    pub configurations: Vec<RotorConfiguration>,
    pub ansatz: Ansatz,
    pub trace: VmcTrace,
    pub optimize_seconds: f64,
    pub sample_seconds: f64,
}

/// Optimize, freeze the parameters, and draw `n_samples` configurations.
/// The file is written only when `path` is given.
pub fn generate_dataset(
    params: CouplingParams,
    lattice: LatticeSpec,
    n_samples: usize,
    kind: AnsatzKind,
    settings: &VmcSettings,
    path: Option<&Path>,
) -> Result<GeneratedDataset> {
    if n_samples == 0 {
        return Err(CoreError::InvalidSettings("n_samples must be at least 1".into()));
    }
    settings.validate()?;
    let mut init_rng = init_rng(settings.hmc.seed);
    let init = Ansatz::new(kind, lattice, &mut init_rng)?;
    let clock = Instant::now();
    let (ansatz, trace, mut sampler) = optimize_with_sampler(init, params, settings)?;
    let optimize_seconds = clock.elapsed().as_secs_f64();
    let clock = Instant::now();
    let samples = sampler.draw(&ansatz, n_samples)?;
    let sample_seconds = clock.elapsed().as_secs_f64();
    let configurations = samples
        .into_iter()
        .map(|a| RotorConfiguration::new(lattice, a))
        .collect::<Result<Vec<_>>>()?;
    let header = DatasetHeader {
        g: params.g,
        j: params.j,
        l: lattice.side(),
        count: n_samples,
        seed: settings.hmc.seed,
        producer: Producer::VmcHmc,
    };
    if let Some(path) = path {
        write_dataset(path, &header, &configurations)?;
    }
    Ok(GeneratedDataset {
        header,
        configurations,
        ansatz,
        trace,
        optimize_seconds,
        sample_seconds,
    })
}

/// Stream reserved for ansatz initialization, disjoint from chain streams.
fn init_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX);
    rng
}

//! Hamiltonian Monte Carlo on `|Psi|^2 = exp(2 ln Psi)` with unit-mass
//! Gaussian momenta and a leapfrog integrator.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::ansatz::Ansatz;
use crate::lattice::{canonicalize_angles, RotorConfiguration};
use crate::{par, CoreError, Result};

const MIN_STEP: f64 = 1e-6;
// Angles live on a 2 pi circle; larger leapfrog steps are never useful.
const MAX_STEP: f64 = 1.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HmcSettings {
    pub step_size: f64,
    pub leapfrog_steps: usize,
    pub burn_in: usize,
    pub thinning: usize,
    pub chains: usize,
    pub seed: u64,
    /// Dual-averaging target during burn-in.
    pub target_acceptance: f64,
    pub adapt_step_size: bool,
    /// Relative half-width of a uniform per-trajectory jitter of the step size.
    pub step_jitter: f64,
}

impl Default for HmcSettings {
    fn default() -> Self {
        HmcSettings {
            step_size: 0.2,
            leapfrog_steps: 10,
            burn_in: 300,
            thinning: 4,
            chains: 4,
            seed: 0,
            target_acceptance: 0.7,
            adapt_step_size: true,
            step_jitter: 0.1,
        }
    }
}

impl HmcSettings {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CoreError::InvalidSettings(m));
        if !(self.step_size.is_finite() && self.step_size > 0.0) {
            return bad(format!("step size must be positive, got {}", self.step_size));
        }
        if self.thinning == 0 {
            return bad("thinning must be at least 1".into());
        }
        if self.chains == 0 {
            return bad("at least one chain is required".into());
        }
        if !(self.target_acceptance > 0.0 && self.target_acceptance < 1.0) {
            return bad(format!("target acceptance must lie in (0, 1), got {}", self.target_acceptance));
        }
        if !(0.0..1.0).contains(&self.step_jitter) {
            return bad(format!("step jitter must lie in [0, 1), got {}", self.step_jitter));
        }
        Ok(())
    }
}

/// `-2 ln Psi + |p|^2 / 2`.
pub fn fictitious_hamiltonian(ansatz: &Ansatz, theta: &[f64], momenta: &[f64]) -> Result<f64> {
    let kinetic: f64 = momenta.iter().map(|p| 0.5 * p * p).sum();
    Ok(kinetic - 2.0 * ansatz.log_psi(theta)?)
}

fn check_gradient(grad: &[f64]) -> std::result::Result<(), usize> {
    match grad.iter().position(|g| !g.is_finite()) {
        Some(site) => Err(site),
        None => Ok(()),
    }
}

/// `steps` leapfrog steps of size `eps`; `grad` holds `d ln Psi / d theta`
/// at the starting point on entry and at the end point on exit. Returns the
/// final `ln Psi`, or the offending site when a gradient is non-finite.
pub fn leapfrog(
    ansatz: &Ansatz,
    theta: &mut [f64],
    momenta: &mut [f64],
    grad: &mut [f64],
    eps: f64,
    steps: usize,
) -> std::result::Result<f64, usize> {
    // force = -dU/dtheta = 2 d ln Psi / d theta
    if steps == 0 {
        return Ok(ansatz.log_psi(theta).expect("length checked by caller"));
    }
    let mut log_psi = 0.0;
    for _ in 0..steps {
        for (p, g) in momenta.iter_mut().zip(grad.iter()) {
            *p += eps * g;
        }
        for (t, p) in theta.iter_mut().zip(momenta.iter()) {
            *t += eps * p;
        }
        log_psi = ansatz.log_psi_gradient(theta, grad).expect("length checked by caller");
        check_gradient(grad)?;
        for (p, g) in momenta.iter_mut().zip(grad.iter()) {
            *p += eps * g;
        }
    }
    Ok(log_psi)
}

/// Nesterov dual averaging of `log eps` toward a target acceptance.
#[derive(Clone, Debug)]
struct DualAveraging {
    mu: f64,
    h_bar: f64,
    log_eps_bar: f64,
    t: f64,
}

impl DualAveraging {
    const GAMMA: f64 = 0.05;
    const T0: f64 = 10.0;
    const KAPPA: f64 = 0.75;

    fn new(eps: f64) -> Self {
        DualAveraging {
            mu: (10.0 * eps).ln(),
            h_bar: 0.0,
            log_eps_bar: eps.ln(),
            t: 0.0,
        }
    }

    fn update(&mut self, accept_prob: f64, target: f64) -> f64 {
        self.t += 1.0;
        let w = 1.0 / (self.t + Self::T0);
        self.h_bar = (1.0 - w) * self.h_bar + w * (target - accept_prob);
        let log_eps = (self.mu - self.t.sqrt() / Self::GAMMA * self.h_bar).clamp(MIN_STEP.ln(), MAX_STEP.ln());
        let eta = self.t.powf(-Self::KAPPA);
        self.log_eps_bar = eta * log_eps + (1.0 - eta) * self.log_eps_bar;
        log_eps.exp()
    }

    fn final_step(&self) -> f64 {
        self.log_eps_bar.exp().clamp(MIN_STEP, MAX_STEP)
    }
}

/// State of one Markov chain. The ansatz is passed to every call so that a
/// chain can persist across parameter updates.
#[derive(Clone, Debug)]
pub struct HmcChain {
    index: usize,
    rng: ChaCha8Rng,
    theta: Vec<f64>,
    eps: f64,
    leapfrog_steps: usize,
    thinning: usize,
    jitter: f64,
    proposed: u64,
    accepted: u64,
    iteration: usize,
}

impl HmcChain {
    /// Chain `index` with its own stream of the settings' seed.
    pub fn new(settings: &HmcSettings, index: usize, start: Vec<f64>) -> Result<Self> {
        settings.validate()?;
        let mut theta = start;
        canonicalize_angles(&mut theta)?;
        let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
        rng.set_stream(index as u64);
        Ok(HmcChain {
            index,
            rng,
            theta,
            eps: settings.step_size,
            leapfrog_steps: settings.leapfrog_steps,
            thinning: settings.thinning,
            jitter: settings.step_jitter,
            proposed: 0,
            accepted: 0,
            iteration: 0,
        })
    }

    /// Chain `index` started from uniformly random angles drawn from its own stream.
    pub fn random_start(settings: &HmcSettings, index: usize, sites: usize) -> Result<Self> {
        let mut chain = HmcChain::new(settings, index, vec![0.0; sites])?;
        for t in chain.theta.iter_mut() {
            *t = chain.rng.random_range(-PI..PI);
        }
        Ok(chain)
    }

    pub fn state(&self) -> &[f64] {
        &self.theta
    }

    pub fn step_size(&self) -> f64 {
        self.eps
    }

    pub fn set_step_size(&mut self, eps: f64) {
        self.eps = eps.clamp(MIN_STEP, MAX_STEP);
    }

    /// Accepted / proposed since the last reset.
    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }

    pub fn reset_counters(&mut self) {
        self.proposed = 0;
        self.accepted = 0;
    }

    /// One HMC transition; returns the Metropolis acceptance probability.
    pub fn transition(&mut self, ansatz: &Ansatz) -> Result<f64> {
        let n = self.theta.len();
        let momenta: Vec<f64> = (0..n).map(|_| self.rng.sample(StandardNormal)).collect();
        let eps = if self.jitter > 0.0 {
            self.eps * (1.0 + self.jitter * self.rng.random_range(-1.0..1.0))
        } else {
            self.eps
        };
        let mut grad = vec![0.0; n];
        let log_psi0 = ansatz.log_psi_gradient(&self.theta, &mut grad)?;
        let abort = |site| CoreError::ChainAborted {
            chain: self.index,
            iteration: self.iteration,
            site,
        };
        check_gradient(&grad).map_err(abort)?;
        let h0 = momenta.iter().map(|p| 0.5 * p * p).sum::<f64>() - 2.0 * log_psi0;
        let mut theta = self.theta.clone();
        let mut p = momenta;
        let log_psi1 = leapfrog(ansatz, &mut theta, &mut p, &mut grad, eps, self.leapfrog_steps).map_err(abort)?;
        let h1 = p.iter().map(|p| 0.5 * p * p).sum::<f64>() - 2.0 * log_psi1;
        let log_ratio = h0 - h1;
        let accept_prob = if log_ratio.is_nan() { 0.0 } else { log_ratio.min(0.0).exp() };
        let u: f64 = self.rng.random();
        self.proposed += 1;
        self.iteration += 1;
        if u < accept_prob {
            canonicalize_angles(&mut theta)?;
            self.theta = theta;
            self.accepted += 1;
        }
        Ok(accept_prob)
    }

    /// `steps` transitions with dual-averaging adaptation, then freeze the step size.
    pub fn burn_in(&mut self, ansatz: &Ansatz, steps: usize, target: f64, adapt: bool) -> Result<()> {
        let mut da = DualAveraging::new(self.eps);
        for _ in 0..steps {
            let a = self.transition(ansatz)?;
            if adapt {
                self.eps = da.update(a, target);
            }
        }
        if adapt && steps > 0 {
            self.eps = da.final_step();
        }
        self.reset_counters();
        Ok(())
    }

    /// Advance `thinning` transitions and return the resulting state.
    pub fn next_sample(&mut self, ansatz: &Ansatz) -> Result<Vec<f64>> {
        for _ in 0..self.thinning {
            self.transition(ansatz)?;
        }
        Ok(self.theta.clone())
    }
}

/// Iterator over thinned post-burn-in configurations of a single chain.
pub struct HmcStream<'a> {
    ansatz: &'a Ansatz,
    chain: HmcChain,
    start: RotorConfiguration,
    failed: bool,
}

impl HmcStream<'_> {
    pub fn chain(&self) -> &HmcChain {
        &self.chain
    }
}

impl Iterator for HmcStream<'_> {
    type Item = Result<RotorConfiguration>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        let lattice = self.start.lattice();
        match self.chain.next_sample(self.ansatz) {
            Ok(angles) => Some(RotorConfiguration::new(lattice, angles)),
            Err(e) => {
                self.failed = true;
                Some(Err(e))
            }
        }
    }
}

/// Burn in chain 0 of `settings` from `start`, then stream thinned samples.
pub fn hmc_chain<'a>(ansatz: &'a Ansatz, settings: &HmcSettings, start: RotorConfiguration) -> Result<HmcStream<'a>> {
    let mut chain = HmcChain::new(settings, 0, start.angles().to_vec())?;
    chain.burn_in(ansatz, settings.burn_in, settings.target_acceptance, settings.adapt_step_size)?;
    Ok(HmcStream {
        ansatz,
        chain,
        start,
        failed: false,
    })
}

/// Draw `per_chain` samples from every chain; output is ordered by chain index.
pub fn sample_chains(ansatz: &Ansatz, chains: &mut [HmcChain], per_chain: usize) -> Result<Vec<Vec<f64>>> {
    let results = par::map_mut(chains, |_, chain| {
        (0..per_chain).map(|_| chain.next_sample(ansatz)).collect::<Result<Vec<_>>>()
    });
    let mut out = Vec::with_capacity(per_chain * chains.len());
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}

/// Burn in every chain in parallel.
pub fn burn_in_chains(ansatz: &Ansatz, chains: &mut [HmcChain], settings: &HmcSettings) -> Result<()> {
    par::map_mut(chains, |_, c| {
        c.burn_in(ansatz, settings.burn_in, settings.target_acceptance, settings.adapt_step_size)
    })
    .into_iter()
    .collect()
}

/// Mean acceptance rate over chains since their last counter reset.
pub fn mean_acceptance(chains: &[HmcChain]) -> f64 {
    chains.iter().map(|c| c.acceptance_rate()).sum::<f64>() / chains.len().max(1) as f64
}

//! Unconditional DCGAN that learns from `L x L` samples and emits `2L x 2L`
//! fields. The discriminator compares real samples with the four quadrants
//! of each generated field; the generator loss adds weighted squared
//! differences of the bond-cosine moments.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use qrm_core::observables::{config_magnetization, config_potential_energy};
use qrm_core::{measure, par, CouplingParams, LatticeSpec, ObservableRecord, Producer, RotorConfiguration};
use qrm_nn::checkpoint::{read_checkpoint, write_checkpoint};
use qrm_nn::loss::moments;
use qrm_nn::{batch_moments, bce_loss, AdamState, Graph, LayerSpec, Mode, Network, Tensor, Var};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::cgan::check_side;
use crate::encode::{encode_graph, encode_input, quadrants, CHANNELS};
use crate::{GanError, Result};

const LEAK: f64 = 0.2;
const TERM_FLOOR: f64 = 1e-8;
/// Samples per generation shard; each shard draws from its own stream.
pub const SHARD_SIZE: usize = 1000;

/// Weights of the generator loss `w1 BCE + w2 dmu^2 + w3 dsigma^2 + w4 dSk^2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    pub w4: f64,
    pub momentum: f64,
    pub ceiling: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            w1: 1.0,
            w2: 1.0,
            w3: 1.0,
            w4: 1.0,
            momentum: 0.9,
            ceiling: 10.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(GanError::InvalidSettings(m));
        if self.w1 != 1.0 {
            return bad(format!("w1 is fixed at 1, got {}", self.w1));
        }
        if !(self.ceiling >= 0.0 && self.ceiling.is_finite()) {
            return bad(format!("ceiling must be finite and non-negative, got {}", self.ceiling));
        }
        if !(0.0..=1.0).contains(&self.momentum) {
            return bad(format!("momentum must lie in [0, 1], got {}", self.momentum));
        }
        for w in [self.w2, self.w3, self.w4] {
            if !(0.0..=self.ceiling).contains(&w) {
                return bad(format!("statistic weight {w} outside [0, {}]", self.ceiling));
            }
        }
        Ok(())
    }
}

/// Squared differences of the bond-cosine mean, standard deviation and
/// skewness between a generated and a real batch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StatisticTerms {
    pub mu: f64,
    pub sigma: f64,
    pub skew: f64,
}

/// `cos(theta_k - theta_l)` over the right and down bond of every site of
/// every sample.
pub fn bond_field(batch: &[RotorConfiguration]) -> Vec<f64> {
    let mut out = Vec::new();
    for c in batch {
        let lat = c.lattice();
        let a = c.angles();
        for s in 0..lat.sites() {
            out.push((a[lat.right(s)] - a[s]).cos());
            out.push((a[lat.down(s)] - a[s]).cos());
        }
    }
    out
}

pub fn statistic_terms(generated: &[RotorConfiguration], real: &[RotorConfiguration]) -> Result<StatisticTerms> {
    if generated.is_empty() || real.is_empty() {
        return Err(qrm_core::CoreError::EmptyBatch.into());
    }
    let (gm, gs, gk) = moments(&bond_field(generated))?;
    let (rm, rs, rk) = moments(&bond_field(real))?;
    Ok(StatisticTerms {
        mu: (gm - rm).powi(2),
        sigma: (gs - rs).powi(2),
        skew: (gk - rk).powi(2),
    })
}

/// `w1 BCE(predictions, targets) + w2 mu + w3 sigma + w4 skew`.
pub fn dcgan_loss(predictions: &[f64], targets: &[f64], terms: &StatisticTerms, weights: &LossWeights) -> Result<f64> {
    weights.validate()?;
    let bce = bce_loss(predictions, targets)?;
    let loss = weights.w1 * bce + weights.w2 * terms.mu + weights.w3 * terms.sigma + weights.w4 * terms.skew;
    if !loss.is_finite() {
        return Err(GanError::NonFiniteLoss { epoch: 0, which: "dcgan" });
    }
    Ok(loss)
}

/// Running magnitudes of the adversarial BCE and the three statistic terms.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RunningMagnitudes {
    pub bce: f64,
    pub mu: f64,
    pub sigma: f64,
    pub skew: f64,
}

/// Pulls each statistic weight toward `BCE / term`, capped at the ceiling,
/// so that every weighted term sits on the scale of the adversarial loss.
pub fn update_weights(weights: &LossWeights, running: &RunningMagnitudes) -> LossWeights {
    let m = weights.momentum;
    let pull = |w: f64, term: f64| {
        let target = (running.bce / (term + TERM_FLOOR)).min(weights.ceiling);
        let target = if target.is_nan() { weights.ceiling } else { target.max(0.0) };
        (m * w + (1.0 - m) * target).clamp(0.0, weights.ceiling)
    };
    LossWeights {
        w1: 1.0,
        w2: pull(weights.w2, running.mu),
        w3: pull(weights.w3, running.sigma),
        w4: pull(weights.w4, running.skew),
        ..*weights
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DcganSettings {
    pub epochs: usize,
    pub batch_size: usize,
    pub noise_dim: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub weights: LossWeights,
    /// Include the statistic terms in the generator loss.
    pub statistics: bool,
    pub probe_size: usize,
    pub collapse_sigma: f64,
    pub collapse_patience: usize,
    pub seed: u64,
}

impl Default for DcganSettings {
    fn default() -> Self {
        Self {
            epochs: 300,
            batch_size: 64,
            noise_dim: 32,
            learning_rate: 2e-4,
            beta1: 0.5,
            weights: LossWeights::default(),
            statistics: true,
            probe_size: 256,
            collapse_sigma: 1e-6,
            collapse_patience: 20,
            seed: 0,
        }
    }
}

impl DcganSettings {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(GanError::InvalidSettings(m.to_string()));
        if self.batch_size < 2 {
            return bad("batch_size must be at least 2");
        }
        if self.noise_dim == 0 {
            return bad("noise_dim must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) {
            return bad("beta1 must lie in [0, 1)");
        }
        if self.probe_size < 1 {
            return bad("probe_size must be positive");
        }
        if self.collapse_patience == 0 {
            return bad("collapse_patience must be positive");
        }
        self.weights.validate()
    }
}

/// Generator of `2L x 2L` angle fields and discriminator of `L x L` patches.
#[derive(Clone, Debug, PartialEq)]
pub struct DcganModel {
    side: usize,
    noise_dim: usize,
    params: CouplingParams,
    generator: Network,
    discriminator: Network,
}

impl DcganModel {
    /// Fresh model for training side `side` (output side `2 * side`).
    pub fn new(side: usize, noise_dim: usize, params: CouplingParams, seed: u64) -> Result<Self> {
        check_side(side)?;
        if noise_dim == 0 {
            return Err(GanError::InvalidSettings("noise_dim must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        let h = side / 2;
        let generator = Network::new(
            vec![
                LayerSpec::dense(noise_dim, 32 * h * h),
                LayerSpec::batch_norm(32 * h * h),
                LayerSpec::leaky(LEAK),
                LayerSpec::Reshape { shape: vec![32, h, h] },
                LayerSpec::conv_t(32, 16, 4, 2, 1),
                LayerSpec::batch_norm(16),
                LayerSpec::leaky(LEAK),
                LayerSpec::conv_t(16, 8, 4, 2, 1),
                LayerSpec::batch_norm(8),
                LayerSpec::leaky(LEAK),
                LayerSpec::conv_t(8, 1, 3, 1, 1),
                LayerSpec::Tanh,
            ],
            &mut rng,
        )?;
        let mut s = side;
        for _ in 0..3 {
            s = s.div_ceil(2);
        }
        let discriminator = Network::new(
            vec![
                LayerSpec::conv(CHANNELS, 16, 3, 2, 1),
                LayerSpec::leaky(LEAK),
                LayerSpec::conv(16, 32, 3, 2, 1),
                LayerSpec::batch_norm(32),
                LayerSpec::leaky(LEAK),
                LayerSpec::conv(32, 64, 3, 2, 1),
                LayerSpec::batch_norm(64),
                LayerSpec::leaky(LEAK),
                LayerSpec::Flatten,
                LayerSpec::dense(64 * s * s, 1),
                LayerSpec::Sigmoid,
            ],
            &mut rng,
        )?;
        Ok(Self {
            side,
            noise_dim,
            params,
            generator,
            discriminator,
        })
    }

    /// Side of the training samples.
    pub fn side(&self) -> usize {
        self.side
    }

    pub fn output_side(&self) -> usize {
        2 * self.side
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    pub fn params(&self) -> CouplingParams {
        self.params
    }

    pub fn generator(&self) -> &Network {
        &self.generator
    }

    pub fn discriminator(&self) -> &Network {
        &self.discriminator
    }

    /// Angle fields `(batch, 1, 2L, 2L)` in `(-pi, pi)`.
    fn angles(generator: &mut Network, graph: &mut Graph, trainable: bool, z: Tensor, mode: Mode) -> Result<(Var, qrm_nn::BoundParams)> {
        let bound = generator.bind(graph, trainable);
        let z = graph.constant(z);
        let raw = generator.forward(graph, &bound, z, None, mode)?;
        Ok((graph.scale(raw, PI), bound))
    }

    fn noise(&self, rng: &mut ChaCha8Rng, n: usize) -> Tensor {
        let data = (0..n * self.noise_dim).map(|_| rng.sample(StandardNormal)).collect();
        Tensor::new(vec![n, self.noise_dim], data).expect("noise shape")
    }

    /// Inference-mode generation from explicit noise rows.
    pub fn generate_from_noise(&self, z: Tensor) -> Result<Vec<RotorConfiguration>> {
        let n = z.shape()[0];
        let mut generator = self.generator.clone();
        let mut graph = Graph::new();
        let (angles, _) = Self::angles(&mut generator, &mut graph, false, z, Mode::Eval)?;
        let lattice = LatticeSpec::new(self.output_side())?;
        let plane = lattice.sites();
        let data = graph.value(angles).data();
        (0..n)
            .map(|i| Ok(RotorConfiguration::new(lattice, data[i * plane..(i + 1) * plane].to_vec())?.canonicalize()?))
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let meta = serde_json::json!({
            "model": "dcgan",
            "side": self.side,
            "noise_dim": self.noise_dim,
            "g": self.params.g,
            "J": self.params.j,
        });
        Ok(write_checkpoint(
            path,
            &[("generator", &self.generator), ("discriminator", &self.discriminator)],
            &meta,
        )?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut ck = read_checkpoint(path)?;
        let meta = &ck.metadata;
        if meta.get("model").and_then(|m| m.as_str()) != Some("dcgan") {
            return Err(GanError::Metadata("not a dcgan checkpoint".into()));
        }
        let uint = |k: &str| {
            meta.get(k)
                .and_then(|v| v.as_u64())
                .ok_or_else(|| GanError::Metadata(format!("missing {k}")))
        };
        let float = |k: &str| {
            meta.get(k)
                .and_then(|v| v.as_f64())
                .ok_or_else(|| GanError::Metadata(format!("missing {k}")))
        };
        let side = uint("side")? as usize;
        let noise_dim = uint("noise_dim")? as usize;
        let params = CouplingParams::new(float("J")?, float("g")?)?;
        check_side(side)?;
        Ok(Self {
            side,
            noise_dim,
            params,
            generator: ck.take("generator")?,
            discriminator: ck.take("discriminator")?,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DcganTraceRow {
    pub epoch: usize,
    pub d_loss: f64,
    pub g_loss: f64,
    pub w2: f64,
    pub w3: f64,
    pub w4: f64,
    #[serde(rename = "probe_M")]
    pub probe_m: f64,
    pub probe_eps_p: f64,
    /// Standard deviation of the probe batch's bond field.
    #[serde(skip)]
    pub probe_bond_std: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DcganTrace {
    pub rows: Vec<DcganTraceRow>,
}

impl DcganTrace {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

struct Probe {
    m: f64,
    eps_p: f64,
    bond_std: f64,
}

fn probe(model: &DcganModel, z: &Tensor) -> Result<Probe> {
    let batch = model.generate_from_noise(z.clone())?;
    let lattice = batch[0].lattice();
    let n = batch.len() as f64;
    let m = batch.iter().map(|c| config_magnetization(c.angles())).sum::<f64>() / n;
    let eps_p = batch
        .iter()
        .map(|c| config_potential_energy(&lattice, c.angles(), model.params.j))
        .sum::<f64>()
        / n;
    let (_, bond_std, _) = moments(&bond_field(&batch))?;
    Ok(Probe { m, eps_p, bond_std })
}

/// Trains one model on samples at a single coupling.
pub fn train_dcgan(
    train: &[RotorConfiguration],
    params: CouplingParams,
    settings: &DcganSettings,
) -> Result<(DcganModel, DcganTrace)> {
    settings.validate()?;
    let side = train.first().ok_or(GanError::EmptyTrainingSet)?.lattice().side();
    let real_all = encode_input(train)?;
    let mut model = DcganModel::new(side, settings.noise_dim, params, settings.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    rng.set_stream(2);
    let mut probe_rng = ChaCha8Rng::seed_from_u64(settings.seed);
    probe_rng.set_stream(3);
    let probe_z = model.noise(&mut probe_rng, settings.probe_size);

    let adam = |net: &Network| {
        AdamState::with_betas(settings.learning_rate, settings.beta1, 0.999, 1e-8, &net.parameter_shapes())
    };
    let mut gen_opt = adam(&model.generator);
    let mut disc_opt = adam(&model.discriminator);
    let mut weights = settings.weights;
    let per = CHANNELS * side * side;
    let plane = side * side;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut trace = DcganTrace::default();
    let mut collapsed = 0usize;

    for epoch in 1..=settings.epochs {
        order.shuffle(&mut rng);
        let (mut d_sum, mut g_sum, mut batches) = (0.0, 0.0, 0usize);
        let mut running = RunningMagnitudes::default();
        for chunk in order.chunks(settings.batch_size) {
            let b = chunk.len();
            if b < 2 {
                continue;
            }
            let mut real = Vec::with_capacity(b * per);
            for &i in chunk {
                real.extend_from_slice(&real_all.data()[i * per..(i + 1) * per]);
            }
            let real = Tensor::new(vec![b, CHANNELS, side, side], real)?;
            let z = model.noise(&mut rng, b);

            let mut gg = Graph::new();
            let (angles, gen_bound) = DcganModel::angles(&mut model.generator, &mut gg, true, z, Mode::Train)?;
            let encoded = encode_graph(&mut gg, angles, b, 2 * side)?;
            let patches = quadrants(&mut gg, encoded, b, CHANNELS, 2 * side)?;

            // discriminator: real samples against generated quadrants
            let mut dg = Graph::new();
            let db = model.discriminator.bind(&mut dg, true);
            let real_v = dg.constant(real.clone());
            let pr = model.discriminator.forward(&mut dg, &db, real_v, None, Mode::Train)?;
            let fake_v = dg.constant(gg.value(patches).clone());
            let mut shadow = model.discriminator.clone();
            let pf = shadow.forward(&mut dg, &db, fake_v, None, Mode::Train)?;
            let lr = dg.bce(pr, &vec![1.0; b])?;
            let lf = dg.bce(pf, &vec![0.0; 4 * b])?;
            let d_loss = dg.add(lr, lf)?;
            let d_value = dg.value(d_loss).item();
            if !d_value.is_finite() {
                return Err(GanError::NonFiniteLoss { epoch, which: "discriminator" });
            }
            let grads = dg.backward(d_loss)?;
            let dgrads = model.discriminator.gradients(&db, &grads);
            disc_opt.step(&mut model.discriminator.parameters_mut(), &dgrads)?;

            // generator: fool the updated discriminator and match bond moments
            let db = model.discriminator.bind(&mut gg, false);
            let mut shadow = model.discriminator.clone();
            let p = shadow.forward(&mut gg, &db, patches, None, Mode::Train)?;
            let adv = gg.bce(p, &vec![1.0; 4 * b])?;
            running.bce += gg.value(adv).item();
            let mut g_loss = adv;
            if settings.statistics {
                let cos_idx: Vec<usize> = (0..b)
                    .flat_map(|s| {
                        let base = s * CHANNELS * 4 * plane;
                        base..base + 2 * 4 * plane
                    })
                    .collect();
                let len = cos_idx.len();
                let field = gg.gather(encoded, cos_idx, &[len])?;
                let gen_m = batch_moments(&mut gg, field)?;
                let real_cos: Vec<f64> = real
                    .data()
                    .chunks(per)
                    .flat_map(|s| s[..2 * plane].iter().copied())
                    .collect();
                let (rm, rs, rk) = moments(&real_cos)?;
                let terms = [(gen_m.mean, rm, weights.w2), (gen_m.std, rs, weights.w3), (gen_m.skew, rk, weights.w4)];
                let mut values = [0.0; 3];
                for (k, (v, reference, w)) in terms.into_iter().enumerate() {
                    let shifted = gg.affine(v, 1.0, -reference);
                    let sq = gg.square(shifted);
                    values[k] = gg.value(sq).item();
                    let weighted = gg.scale(sq, w);
                    g_loss = gg.add(g_loss, weighted)?;
                }
                running.mu += values[0];
                running.sigma += values[1];
                running.skew += values[2];
            }
            let g_value = gg.value(g_loss).item();
            if !g_value.is_finite() {
                return Err(GanError::NonFiniteLoss { epoch, which: "generator" });
            }
            let grads = gg.backward(g_loss)?;
            let ggrads = model.generator.gradients(&gen_bound, &grads);
            gen_opt.step(&mut model.generator.parameters_mut(), &ggrads)?;
            d_sum += d_value;
            g_sum += g_value;
            batches += 1;
        }
        let n = batches.max(1) as f64;
        if settings.statistics && batches > 0 {
            let mean = RunningMagnitudes {
                bce: running.bce / n,
                mu: running.mu / n,
                sigma: running.sigma / n,
                skew: running.skew / n,
            };
            weights = update_weights(&weights, &mean);
        }
        let pr = probe(&model, &probe_z)?;
        collapsed = if pr.bond_std < settings.collapse_sigma { collapsed + 1 } else { 0 };
        trace.rows.push(DcganTraceRow {
            epoch,
            d_loss: d_sum / n,
            g_loss: g_sum / n,
            w2: weights.w2,
            w3: weights.w3,
            w4: weights.w4,
            probe_m: pr.m,
            probe_eps_p: pr.eps_p,
            probe_bond_std: pr.bond_std,
        });
        if collapsed >= settings.collapse_patience {
            return Err(GanError::ModeCollapse {
                epoch,
                epochs: collapsed,
                sigma: pr.bond_std,
            });
        }
    }
    Ok((model, trace))
}

/// Wall time and observables of one batch from one producer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationBenchmark {
    pub producer: Producer,
    pub g: f64,
    pub side: usize,
    pub sample_count: usize,
    pub wall_seconds: f64,
    pub workers: usize,
    pub observables: ObservableRecord,
}

/// `n` independent draws at side `2L`. Noise is drawn per shard of
/// [`SHARD_SIZE`] samples from stream `shard` of `seed`, so the batch does
/// not depend on the worker count. Observables are measured after the clock
/// stops.
pub fn generate_batch(
    model: &DcganModel,
    n: usize,
    seed: u64,
) -> Result<(Vec<RotorConfiguration>, GenerationBenchmark)> {
    if n == 0 {
        return Err(GanError::InvalidSettings("sample count must be at least 1".into()));
    }
    let clock = Instant::now();
    let shards = n.div_ceil(SHARD_SIZE);
    let parts = par::map_range(shards, |k| {
        let count = SHARD_SIZE.min(n - k * SHARD_SIZE);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k as u64);
        let z = model.noise(&mut rng, count);
        model.generate_from_noise(z)
    });
    let mut batch = Vec::with_capacity(n);
    for p in parts {
        batch.extend(p?);
    }
    let wall_seconds = clock.elapsed().as_secs_f64().max(f64::MIN_POSITIVE);
    let observables = measure(&batch, model.params)?;
    let bench = GenerationBenchmark {
        producer: Producer::Dcgan,
        g: model.params.g,
        side: model.output_side(),
        sample_count: n,
        wall_seconds,
        workers: par::workers(),
        observables,
    };
    Ok((batch, bench))
}

/// Timing ratio and observable differences (`dcgan - vmc`) with pooled
/// standard errors `sqrt(se_a^2 + se_b^2)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProducerComparison {
    pub time_ratio: f64,
    pub delta_m: f64,
    pub delta_eps_p: f64,
    pub m_pooled_stderr: f64,
    pub eps_p_pooled_stderr: f64,
}

pub fn compare_producers(dcgan: &GenerationBenchmark, vmc: &GenerationBenchmark) -> Result<ProducerComparison> {
    if dcgan.sample_count == 0 || vmc.sample_count == 0 {
        return Err(GanError::Incomparable("zero-sample benchmark".into()));
    }
    if dcgan.side != vmc.side {
        return Err(GanError::Incomparable(format!("sides {} and {}", dcgan.side, vmc.side)));
    }
    if (dcgan.g - vmc.g).abs() > 1e-9 {
        return Err(GanError::Incomparable(format!("couplings g = {} and {}", dcgan.g, vmc.g)));
    }
    if dcgan.sample_count != vmc.sample_count {
        return Err(GanError::Incomparable(format!(
            "sample counts {} and {}",
            dcgan.sample_count, vmc.sample_count
        )));
    }
    if !(dcgan.wall_seconds > 0.0 && vmc.wall_seconds > 0.0) {
        return Err(GanError::Incomparable("wall times must be positive".into()));
    }
    let (a, b) = (&dcgan.observables, &vmc.observables);
    Ok(ProducerComparison {
        time_ratio: dcgan.wall_seconds / vmc.wall_seconds,
        delta_m: a.magnetization - b.magnetization,
        delta_eps_p: a.potential_energy_density - b.potential_energy_density,
        m_pooled_stderr: a.magnetization_stderr.hypot(b.magnetization_stderr),
        eps_p_pooled_stderr: a.potential_energy_stderr.hypot(b.potential_energy_stderr),
    })
}

/// One row of `benchmark.csv`. Observable columns are empty for training
/// rows and for generation rows without a verified reference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub producer: String,
    /// `train` (VMC optimization or DCGAN training) or `generate`.
    pub stage: String,
    pub g: f64,
    #[serde(rename = "L")]
    pub l: usize,
    pub count: usize,
    pub wall_seconds: f64,
    pub workers: usize,
    #[serde(rename = "M")]
    pub m: Option<f64>,
    pub eps_p: Option<f64>,
    #[serde(rename = "M_stderr")]
    pub m_stderr: Option<f64>,
    pub eps_p_stderr: Option<f64>,
    /// False when the DCGAN was saved at initialization (zero epochs).
    pub trained: bool,
    pub verified: bool,
}

impl BenchmarkRow {
    pub fn generation(bench: &GenerationBenchmark, trained: bool, verified: bool) -> Self {
        let o = &bench.observables;
        Self {
            producer: bench.producer.as_str().to_string(),
            stage: "generate".into(),
            g: bench.g,
            l: bench.side,
            count: bench.sample_count,
            wall_seconds: bench.wall_seconds,
            workers: bench.workers,
            m: Some(o.magnetization),
            eps_p: Some(o.potential_energy_density),
            m_stderr: Some(o.magnetization_stderr),
            eps_p_stderr: Some(o.potential_energy_stderr),
            trained,
            verified,
        }
    }

    pub fn training(producer: Producer, g: f64, side: usize, count: usize, wall_seconds: f64, trained: bool) -> Self {
        Self {
            producer: producer.as_str().to_string(),
            stage: "train".into(),
            g,
            l: side,
            count,
            wall_seconds,
            workers: 1,
            m: None,
            eps_p: None,
            m_stderr: None,
            eps_p_stderr: None,
            trained,
            verified: false,
        }
    }
}

pub fn write_benchmarks<W: Write>(out: W, rows: &[BenchmarkRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_validation() {
        assert!(LossWeights::default().validate().is_ok());
        let w = LossWeights { w1: 2.0, ..LossWeights::default() };
        assert!(w.validate().is_err());
        let w = LossWeights { w3: 11.0, ..LossWeights::default() };
        assert!(w.validate().is_err());
    }

    #[test]
    fn generator_lands_on_double_side() {
        let p = CouplingParams::new(1.0, 4.0).unwrap();
        for side in [4, 6, 8] {
            let m = DcganModel::new(side, 32, p, 0).unwrap();
            assert_eq!(m.generator().output_shape(&[2, 32]).unwrap(), vec![2, 1, 2 * side, 2 * side]);
            assert_eq!(m.discriminator().output_shape(&[3, 4, side, side]).unwrap(), vec![3, 1]);
        }
    }
}

//! Semi-supervised conditional GAN. The generator is an encoder-decoder over
//! noisy real samples whose bottleneck exposes a two-dimensional tap and a
//! one-dimensional tap; the decoder consumes both. The discriminator has a
//! label-conditioned validity head and an unconditioned class head.

use std::io::Write;
use std::path::Path;

use qrm_core::analysis::LatentScanRow;
use qrm_core::observables::mean_stderr;
use qrm_core::{par, RotorConfiguration};
use qrm_nn::checkpoint::{read_checkpoint, write_checkpoint};
use qrm_nn::{AdamState, BoundParams, Graph, LayerSpec, Mode, Network, Tensor, Var};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::encode::{encode_input, encode_rows, CHANNELS};
use crate::{GanError, Result};

/// Condition index used for samples outside both label bands.
pub const UNLABELED: usize = 2;
const CONDITIONS: usize = 3;
const LEAK: f64 = 0.2;
const BAND_TOLERANCE: f64 = 1e-9;

/// Two disjoint closed g-intervals whose samples get class 0 and class 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelRule {
    pub zero_band: [f64; 2],
    pub one_band: [f64; 2],
}

impl Default for LabelRule {
    fn default() -> Self {
        Self {
            zero_band: [3.50, 3.60],
            one_band: [4.40, 4.50],
        }
    }
}

impl LabelRule {
    pub fn new(zero_band: [f64; 2], one_band: [f64; 2]) -> Result<Self> {
        let rule = Self { zero_band, one_band };
        rule.validate()?;
        Ok(rule)
    }

    pub fn validate(&self) -> Result<()> {
        for band in [self.zero_band, self.one_band] {
            if !(band[0].is_finite() && band[1].is_finite() && band[0] <= band[1]) {
                return Err(GanError::LabelRule(format!("band {band:?} must be finite with lo <= hi")));
            }
        }
        let (z, o) = (self.zero_band, self.one_band);
        if !(z[1] < o[0] || o[1] < z[0]) {
            return Err(GanError::LabelRule(format!("bands {z:?} and {o:?} overlap")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Label {
    Zero,
    One,
    Unlabeled,
}

impl Label {
    /// Row of the conditional batch-norm tables.
    pub fn condition(self) -> usize {
        match self {
            Label::Zero => 0,
            Label::One => 1,
            Label::Unlabeled => UNLABELED,
        }
    }

    pub fn class(self) -> Option<u8> {
        match self {
            Label::Zero => Some(0),
            Label::One => Some(1),
            Label::Unlabeled => None,
        }
    }
}

/// Band membership with endpoints included (up to floating-point noise in
/// grid values such as `3.5 + 2 * 0.05`).
pub fn assign_labels(g: f64, rule: &LabelRule) -> Label {
    let inside = |b: [f64; 2]| g >= b[0] - BAND_TOLERANCE && g <= b[1] + BAND_TOLERANCE;
    if inside(rule.zero_band) {
        Label::Zero
    } else if inside(rule.one_band) {
        Label::One
    } else {
        Label::Unlabeled
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CganSettings {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    /// Standard deviation (radians) of the angle noise added to generator inputs.
    pub noise_std: f64,
    pub reconstruction_weight: f64,
    pub class_weight: f64,
    /// Weight of the label term on the one-dimensional tap of labeled samples.
    pub latent_weight: f64,
    pub seed: u64,
}

impl Default for CganSettings {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 64,
            learning_rate: 2e-4,
            beta1: 0.5,
            noise_std: 0.1,
            reconstruction_weight: 1.0,
            class_weight: 1.0,
            latent_weight: 1.0,
            seed: 0,
        }
    }
}

impl CganSettings {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(GanError::InvalidSettings(m.to_string()));
        if self.batch_size < 2 {
            return bad("batch_size must be at least 2");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) {
            return bad("beta1 must lie in [0, 1)");
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return bad("noise_std must be non-negative");
        }
        if !(self.reconstruction_weight >= 0.0 && self.class_weight >= 0.0 && self.latent_weight >= 0.0) {
            return bad("loss weights must be non-negative");
        }
        Ok(())
    }
}

/// Generator and discriminator of the conditional GAN.
#[derive(Clone, Debug, PartialEq)]
pub struct CganModel {
    side: usize,
    encoder: Network,
    tap2: Network,
    tap1: Network,
    decoder: Network,
    trunk: Network,
    validity: Network,
    class_head: Network,
}

struct GeneratorBound {
    encoder: BoundParams,
    tap2: BoundParams,
    tap1: BoundParams,
    decoder: BoundParams,
}

struct DiscriminatorBound {
    trunk: BoundParams,
    validity: BoundParams,
    class_head: BoundParams,
}

const NAMES: [&str; 7] = ["encoder", "tap2", "tap1", "decoder", "trunk", "validity", "class"];

/// Both models need an even side of at least 4.
pub fn check_side(side: usize) -> Result<()> {
    if side < 4 || !side.is_multiple_of(2) {
        return Err(GanError::UnsupportedSide(side));
    }
    Ok(())
}

impl CganModel {
    /// Fresh model for `side x side` lattices, initialized from `seed`.
    pub fn new(side: usize, seed: u64) -> Result<Self> {
        check_side(side)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        let h = side / 2;
        let flat = 32 * h * h;
        let mut net = |layers| Network::new(layers, &mut rng);
        Ok(Self {
            side,
            encoder: net(vec![
                LayerSpec::conv(CHANNELS, 16, 3, 1, 1),
                LayerSpec::batch_norm(16),
                LayerSpec::leaky(LEAK),
                LayerSpec::conv(16, 32, 3, 2, 1),
                LayerSpec::batch_norm(32),
                LayerSpec::leaky(LEAK),
                LayerSpec::Flatten,
            ])?,
            tap2: net(vec![LayerSpec::dense(flat, 2)])?,
            tap1: net(vec![LayerSpec::dense(2, 1)])?,
            decoder: net(vec![
                LayerSpec::dense(3, flat),
                LayerSpec::cond_batch_norm(flat, CONDITIONS),
                LayerSpec::leaky(LEAK),
                LayerSpec::Reshape { shape: vec![32, h, h] },
                LayerSpec::conv_t(32, 16, 4, 2, 1),
                LayerSpec::cond_batch_norm(16, CONDITIONS),
                LayerSpec::leaky(LEAK),
                LayerSpec::conv_t(16, CHANNELS, 3, 1, 1),
                LayerSpec::Tanh,
            ])?,
            trunk: net(vec![
                LayerSpec::conv(CHANNELS, 16, 3, 2, 1),
                LayerSpec::leaky(LEAK),
                LayerSpec::conv(16, 32, 3, 1, 1),
                LayerSpec::batch_norm(32),
                LayerSpec::leaky(LEAK),
                LayerSpec::Flatten,
            ])?,
            validity: net(vec![
                LayerSpec::dense(flat + CONDITIONS, 32),
                LayerSpec::leaky(LEAK),
                LayerSpec::dense(32, 1),
                LayerSpec::Sigmoid,
            ])?,
            class_head: net(vec![
                LayerSpec::dense(flat, 32),
                LayerSpec::leaky(LEAK),
                LayerSpec::dense(32, 1),
                LayerSpec::Sigmoid,
            ])?,
        })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    fn networks(&self) -> [&Network; 7] {
        [
            &self.encoder,
            &self.tap2,
            &self.tap1,
            &self.decoder,
            &self.trunk,
            &self.validity,
            &self.class_head,
        ]
    }

    fn bind_generator(&self, graph: &mut Graph, trainable: bool) -> GeneratorBound {
        GeneratorBound {
            encoder: self.encoder.bind(graph, trainable),
            tap2: self.tap2.bind(graph, trainable),
            tap1: self.tap1.bind(graph, trainable),
            decoder: self.decoder.bind(graph, trainable),
        }
    }

    fn bind_discriminator(&self, graph: &mut Graph, trainable: bool) -> DiscriminatorBound {
        DiscriminatorBound {
            trunk: self.trunk.bind(graph, trainable),
            validity: self.validity.bind(graph, trainable),
            class_head: self.class_head.bind(graph, trainable),
        }
    }

    /// The encoder never sees the label, so the taps carry only what the
    /// sample itself holds.
    fn encode(&mut self, graph: &mut Graph, bound: &GeneratorBound, x: Var, mode: Mode) -> Result<(Var, Var)> {
        let features = self.encoder.forward(graph, &bound.encoder, x, None, mode)?;
        let tap2 = self.tap2.forward(graph, &bound.tap2, features, None, mode)?;
        let tap1 = self.tap1.forward(graph, &bound.tap1, tap2, None, mode)?;
        Ok((tap2, tap1))
    }

    fn generate(
        &mut self,
        graph: &mut Graph,
        bound: &GeneratorBound,
        x: Var,
        cond: &[usize],
        mode: Mode,
    ) -> Result<(Var, Var)> {
        let (tap2, tap1) = self.encode(graph, bound, x, mode)?;
        let code = graph.concat(&[tap2, tap1])?;
        let out = self.decoder.forward(graph, &bound.decoder, code, Some(cond), mode)?;
        Ok((out, tap1))
    }

    fn features(
        trunk: &mut Network,
        graph: &mut Graph,
        bound: &DiscriminatorBound,
        x: Var,
        mode: Mode,
    ) -> Result<Var> {
        Ok(trunk.forward(graph, &bound.trunk, x, None, mode)?)
    }

    fn validity_of(&mut self, graph: &mut Graph, bound: &DiscriminatorBound, features: Var, cond: &[usize]) -> Result<Var> {
        let mut onehot = vec![0.0; cond.len() * CONDITIONS];
        for (i, &c) in cond.iter().enumerate() {
            onehot[i * CONDITIONS + c] = 1.0;
        }
        let onehot = graph.constant(Tensor::new(vec![cond.len(), CONDITIONS], onehot)?);
        let joined = graph.concat(&[features, onehot])?;
        Ok(self.validity.forward(graph, &bound.validity, joined, None, Mode::Train)?)
    }

    fn class_of(&mut self, graph: &mut Graph, bound: &DiscriminatorBound, features: Var) -> Result<Var> {
        Ok(self.class_head.forward(graph, &bound.class_head, features, None, Mode::Train)?)
    }

    fn check_batch(&self, batch: &[RotorConfiguration]) -> Result<()> {
        match batch.iter().find(|c| c.lattice().side() != self.side) {
            Some(c) => Err(GanError::SideMismatch {
                expected: self.side,
                actual: c.lattice().side(),
            }),
            None => Ok(()),
        }
    }

    /// Two-dimensional and one-dimensional taps of every sample, with the
    /// encoder in inference mode.
    pub fn latents(&self, batch: &[RotorConfiguration]) -> Result<(Vec<[f64; 2]>, Vec<f64>)> {
        self.check_batch(batch)?;
        let mut scratch = self.clone();
        let mut graph = Graph::new();
        let bound = scratch.bind_generator(&mut graph, false);
        let x = graph.constant(encode_input(batch)?);
        let (tap2, tap1) = scratch.encode(&mut graph, &bound, x, Mode::Eval)?;
        let z2 = graph.value(tap2).data().chunks(2).map(|p| [p[0], p[1]]).collect();
        Ok((z2, graph.value(tap1).data().to_vec()))
    }

    /// Generator output in inference mode (unlabeled condition).
    pub fn reconstruct(&self, batch: &[RotorConfiguration]) -> Result<Tensor> {
        self.check_batch(batch)?;
        let mut scratch = self.clone();
        let mut graph = Graph::new();
        let bound = scratch.bind_generator(&mut graph, false);
        let x = graph.constant(encode_input(batch)?);
        let cond = vec![UNLABELED; batch.len()];
        let (out, _) = scratch.generate(&mut graph, &bound, x, &cond, Mode::Eval)?;
        Ok(graph.value(out).clone())
    }

    /// Decoder output for explicit taps (inference mode, unlabeled condition).
    pub fn decode(&self, tap2: &[[f64; 2]], tap1: &[f64]) -> Result<Tensor> {
        if tap2.len() != tap1.len() || tap2.is_empty() {
            return Err(GanError::InvalidSettings(format!(
                "need matching non-empty taps, got {} and {}",
                tap2.len(),
                tap1.len()
            )));
        }
        let code: Vec<f64> = tap2.iter().zip(tap1).flat_map(|(z, &v)| [z[0], z[1], v]).collect();
        let mut decoder = self.decoder.clone();
        let mut graph = Graph::new();
        let bound = decoder.bind(&mut graph, false);
        let x = graph.constant(Tensor::new(vec![tap1.len(), 3], code)?);
        let cond = vec![UNLABELED; tap1.len()];
        let out = decoder.forward(&mut graph, &bound, x, Some(&cond), Mode::Eval)?;
        Ok(graph.value(out).clone())
    }

    /// Class-head probability of class 1 for real samples (inference mode).
    pub fn class_probabilities(&self, batch: &[RotorConfiguration]) -> Result<Vec<f64>> {
        self.check_batch(batch)?;
        let mut scratch = self.clone();
        let mut graph = Graph::new();
        let bound = scratch.bind_discriminator(&mut graph, false);
        let x = graph.constant(encode_input(batch)?);
        let f = Self::features(&mut scratch.trunk, &mut graph, &bound, x, Mode::Eval)?;
        let p = scratch.class_of(&mut graph, &bound, f)?;
        Ok(graph.value(p).data().to_vec())
    }

    pub fn predict_classes(&self, batch: &[RotorConfiguration]) -> Result<Vec<u8>> {
        Ok(self.class_probabilities(batch)?.iter().map(|&p| u8::from(p > 0.5)).collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let nets: Vec<(&str, &Network)> = NAMES.iter().copied().zip(self.networks()).collect();
        let meta = serde_json::json!({ "model": "cgan", "side": self.side });
        Ok(write_checkpoint(path, &nets, &meta)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut ck = read_checkpoint(path)?;
        if ck.metadata.get("model").and_then(|m| m.as_str()) != Some("cgan") {
            return Err(GanError::Metadata("not a cgan checkpoint".into()));
        }
        let side = ck
            .metadata
            .get("side")
            .and_then(|s| s.as_u64())
            .ok_or_else(|| GanError::Metadata("missing side".into()))? as usize;
        check_side(side)?;
        Ok(Self {
            side,
            encoder: ck.take("encoder")?,
            tap2: ck.take("tap2")?,
            tap1: ck.take("tap1")?,
            decoder: ck.take("decoder")?,
            trunk: ck.take("trunk")?,
            validity: ck.take("validity")?,
            class_head: ck.take("class")?,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CganTraceRow {
    pub epoch: usize,
    pub d_loss: f64,
    pub g_loss: f64,
    pub reconstruction: f64,
    /// Class-head accuracy on the labeled real samples seen this epoch.
    pub labeled_accuracy: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CganTrace {
    pub rows: Vec<CganTraceRow>,
}

impl CganTrace {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

struct Example<'a> {
    angles: &'a [f64],
    label: Label,
}

/// Trains on per-g sample sets. Samples whose g lies in a label band drive
/// the class head and pull the one-dimensional tap toward their label; every
/// sample joins the adversarial and reconstruction terms.
pub fn train_cgan(
    train: &[(f64, Vec<RotorConfiguration>)],
    rule: &LabelRule,
    settings: &CganSettings,
) -> Result<(CganModel, CganTrace)> {
    rule.validate()?;
    settings.validate()?;
    let side = train
        .iter()
        .flat_map(|(_, s)| s.first())
        .map(|c| c.lattice().side())
        .next()
        .ok_or(GanError::EmptyTrainingSet)?;
    let mut examples = Vec::new();
    for (g, set) in train {
        let label = assign_labels(*g, rule);
        for c in set {
            if c.lattice().side() != side {
                return Err(GanError::SideMismatch {
                    expected: side,
                    actual: c.lattice().side(),
                });
            }
            examples.push(Example {
                angles: c.angles(),
                label,
            });
        }
    }
    for (band, label) in [(0u8, Label::Zero), (1, Label::One)] {
        if !examples.iter().any(|e| e.label == label) {
            return Err(GanError::NoLabeledData { band });
        }
    }
    let mut model = CganModel::new(side, settings.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    rng.set_stream(2);
    let gen_sizes: Vec<usize> = [&model.encoder, &model.tap2, &model.tap1, &model.decoder]
        .iter()
        .flat_map(|n| n.parameter_shapes())
        .collect();
    let disc_sizes: Vec<usize> = [&model.trunk, &model.validity, &model.class_head]
        .iter()
        .flat_map(|n| n.parameter_shapes())
        .collect();
    let adam = |sizes: &[usize]| AdamState::with_betas(settings.learning_rate, settings.beta1, 0.999, 1e-8, sizes);
    let mut gen_opt = adam(&gen_sizes);
    let mut disc_opt = adam(&disc_sizes);

    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut trace = CganTrace::default();
    for epoch in 1..=settings.epochs {
        order.shuffle(&mut rng);
        let mut sums = [0.0; 3];
        let (mut correct, mut labeled) = (0usize, 0usize);
        let mut batches = 0usize;
        for chunk in order.chunks(settings.batch_size) {
            if chunk.len() < 2 {
                continue;
            }
            let step = train_step(&mut model, &examples, chunk, settings, &mut rng, &mut gen_opt, &mut disc_opt)?;
            if !step.d_loss.is_finite() {
                return Err(GanError::NonFiniteLoss { epoch, which: "discriminator" });
            }
            if !step.g_loss.is_finite() {
                return Err(GanError::NonFiniteLoss { epoch, which: "generator" });
            }
            sums[0] += step.d_loss;
            sums[1] += step.g_loss;
            sums[2] += step.reconstruction;
            correct += step.correct;
            labeled += step.labeled;
            batches += 1;
        }
        let n = batches.max(1) as f64;
        trace.rows.push(CganTraceRow {
            epoch,
            d_loss: sums[0] / n,
            g_loss: sums[1] / n,
            reconstruction: sums[2] / n,
            labeled_accuracy: if labeled > 0 { correct as f64 / labeled as f64 } else { f64::NAN },
        });
    }
    Ok((model, trace))
}

struct StepStats {
    d_loss: f64,
    g_loss: f64,
    reconstruction: f64,
    correct: usize,
    labeled: usize,
}

fn train_step(
    model: &mut CganModel,
    examples: &[Example],
    chunk: &[usize],
    settings: &CganSettings,
    rng: &mut ChaCha8Rng,
    gen_opt: &mut AdamState,
    disc_opt: &mut AdamState,
) -> Result<StepStats> {
    let side = model.side;
    let b = chunk.len();
    let clean_rows: Vec<&[f64]> = chunk.iter().map(|&i| examples[i].angles).collect();
    let noisy: Vec<Vec<f64>> = clean_rows
        .iter()
        .map(|row| {
            row.iter()
                .map(|&t| t + settings.noise_std * rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect();
    let noisy_rows: Vec<&[f64]> = noisy.iter().map(Vec::as_slice).collect();
    let clean = encode_rows(&clean_rows, side);
    let noisy = encode_rows(&noisy_rows, side);
    let cond: Vec<usize> = chunk.iter().map(|&i| examples[i].label.condition()).collect();
    let labeled: Vec<(usize, f64)> = chunk
        .iter()
        .enumerate()
        .filter_map(|(k, &i)| examples[i].label.class().map(|c| (k, f64::from(c))))
        .collect();

    // generator forward, kept open until the discriminator has been updated
    let mut gg = Graph::new();
    let gen_bound = model.bind_generator(&mut gg, true);
    let x = gg.constant(noisy);
    let (out, lv) = model.generate(&mut gg, &gen_bound, x, &cond, Mode::Train)?;
    let fake = gg.value(out).clone();

    // discriminator step
    let mut dg = Graph::new();
    let db = model.bind_discriminator(&mut dg, true);
    let real = dg.constant(clean.clone());
    let real_f = CganModel::features(&mut model.trunk, &mut dg, &db, real, Mode::Train)?;
    let real_v = model.validity_of(&mut dg, &db, real_f, &cond)?;
    let mut shadow = model.trunk.clone();
    let fake_c = dg.constant(fake);
    let fake_f = CganModel::features(&mut shadow, &mut dg, &db, fake_c, Mode::Train)?;
    let fake_v = model.validity_of(&mut dg, &db, fake_f, &cond)?;
    let l_real = dg.bce(real_v, &vec![1.0; b])?;
    let l_fake = dg.bce(fake_v, &vec![0.0; b])?;
    let mut d_loss = dg.add(l_real, l_fake)?;
    let mut correct = 0;
    if !labeled.is_empty() {
        let flat = dg.shape(real_f)[1];
        let idx: Vec<usize> = labeled.iter().flat_map(|&(k, _)| k * flat..(k + 1) * flat).collect();
        let sub = dg.gather(real_f, idx, &[labeled.len(), flat])?;
        let p = model.class_of(&mut dg, &db, sub)?;
        let targets: Vec<f64> = labeled.iter().map(|&(_, t)| t).collect();
        correct = dg
            .value(p)
            .data()
            .iter()
            .zip(&targets)
            .filter(|(&p, &t)| (p > 0.5) == (t > 0.5))
            .count();
        let l_class = dg.bce(p, &targets)?;
        let l_class = dg.scale(l_class, settings.class_weight);
        d_loss = dg.add(d_loss, l_class)?;
    }
    let d_value = dg.value(d_loss).item();
    let grads = dg.backward(d_loss)?;
    let disc_grads: Vec<Vec<f64>> = [
        model.trunk.gradients(&db.trunk, &grads),
        model.validity.gradients(&db.validity, &grads),
        model.class_head.gradients(&db.class_head, &grads),
    ]
    .concat();
    if d_value.is_finite() {
        let mut params: Vec<&mut [f64]> = model.trunk.parameters_mut();
        params.extend(model.validity.parameters_mut());
        params.extend(model.class_head.parameters_mut());
        disc_opt.step(&mut params, &disc_grads)?;
    }

    // generator step against the updated discriminator
    let db = model.bind_discriminator(&mut gg, false);
    let mut shadow = model.trunk.clone();
    let f = CganModel::features(&mut shadow, &mut gg, &db, out, Mode::Train)?;
    let v = model.validity_of(&mut gg, &db, f, &cond)?;
    let adv = gg.bce(v, &vec![1.0; b])?;
    let target = gg.constant(clean);
    let diff = gg.sub(out, target)?;
    let sq = gg.square(diff);
    let recon = gg.mean(sq);
    let weighted = gg.scale(recon, settings.reconstruction_weight);
    let mut g_loss = gg.add(adv, weighted)?;
    if !labeled.is_empty() && settings.latent_weight > 0.0 {
        let idx: Vec<usize> = labeled.iter().map(|&(k, _)| k).collect();
        let sub = gg.gather(lv, idx, &[labeled.len(), 1])?;
        let p = gg.sigmoid(sub);
        let targets: Vec<f64> = labeled.iter().map(|&(_, t)| t).collect();
        let l_latent = gg.bce(p, &targets)?;
        let l_latent = gg.scale(l_latent, settings.latent_weight);
        g_loss = gg.add(g_loss, l_latent)?;
    }
    let g_value = gg.value(g_loss).item();
    let recon_value = gg.value(recon).item();
    let grads = gg.backward(g_loss)?;
    let gen_grads: Vec<Vec<f64>> = [
        model.encoder.gradients(&gen_bound.encoder, &grads),
        model.tap2.gradients(&gen_bound.tap2, &grads),
        model.tap1.gradients(&gen_bound.tap1, &grads),
        model.decoder.gradients(&gen_bound.decoder, &grads),
    ]
    .concat();
    if g_value.is_finite() {
        let mut params: Vec<&mut [f64]> = model.encoder.parameters_mut();
        params.extend(model.tap2.parameters_mut());
        params.extend(model.tap1.parameters_mut());
        params.extend(model.decoder.parameters_mut());
        gen_opt.step(&mut params, &gen_grads)?;
    }
    Ok(StepStats {
        d_loss: d_value,
        g_loss: g_value,
        reconstruction: recon_value,
        correct,
        labeled: labeled.len(),
    })
}

/// One g value of a latent scan.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentScanPoint {
    pub g: f64,
    /// Mean of the one-dimensional tap.
    pub lv_mean: f64,
    pub lv_stderr: f64,
    /// Two-dimensional tap of every test sample with the predicted class.
    pub points: Vec<([f64; 2], u8)>,
}

impl LatentScanPoint {
    pub fn n_test(&self) -> usize {
        self.points.len()
    }

    pub fn row(&self) -> LatentScanRow {
        LatentScanRow {
            g: self.g,
            lv_mean: self.lv_mean,
            lv_stderr: self.lv_stderr,
            n_test: self.n_test(),
        }
    }
}

/// Runs the encoder over every test set. Sets are processed in parallel;
/// output order follows the input.
pub fn extract_latents(model: &CganModel, test: &[(f64, Vec<RotorConfiguration>)]) -> Result<Vec<LatentScanPoint>> {
    for (g, set) in test {
        if set.is_empty() {
            return Err(GanError::EmptyTestSet(*g));
        }
        model.check_batch(set)?;
    }
    par::map_range(test.len(), |i| {
        let (g, set) = &test[i];
        let (z2, z1) = model.latents(set)?;
        let classes = model.predict_classes(set)?;
        let (lv_mean, lv_stderr) = mean_stderr(&z1);
        Ok(LatentScanPoint {
            g: *g,
            lv_mean,
            lv_stderr,
            points: z2.into_iter().zip(classes).collect(),
        })
    })
    .into_iter()
    .collect()
}

/// Fraction of samples from labeled-band sets whose predicted class matches
/// the band. `None` when no set falls in a band.
pub fn labeled_accuracy(model: &CganModel, sets: &[(f64, Vec<RotorConfiguration>)], rule: &LabelRule) -> Result<Option<f64>> {
    let (mut correct, mut total) = (0usize, 0usize);
    for (g, set) in sets {
        let Some(class) = assign_labels(*g, rule).class() else {
            continue;
        };
        let predicted = model.predict_classes(set)?;
        correct += predicted.iter().filter(|&&p| p == class).count();
        total += predicted.len();
    }
    Ok((total > 0).then(|| correct as f64 / total as f64))
}

pub fn write_latent_scan<W: Write>(out: W, points: &[LatentScanPoint]) -> Result<()> {
    let rows: Vec<LatentScanRow> = points.iter().map(LatentScanPoint::row).collect();
    Ok(qrm_core::analysis::write_latent_scan(out, &rows)?)
}

#[derive(Serialize)]
struct Latent2dRow {
    g: f64,
    z1: f64,
    z2: f64,
    predicted_class: u8,
}

pub fn write_latent2d<W: Write>(out: W, points: &[LatentScanPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in points {
        for &(z, class) in &p.points {
            w.serialize(Latent2dRow {
                g: p.g,
                z1: z[0],
                z2: z[1],
                predicted_class: class,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

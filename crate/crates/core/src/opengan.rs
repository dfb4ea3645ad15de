//! Adversarial training in feature space: a generator learns to imitate the
//! classifier's outputs on known classes while a discriminator learns to tell
//! real outputs from generated ones. The discriminator snapshot with the best
//! validation AUC becomes the open-set gate, thresholded at the ROC point
//! nearest the top-left corner.

use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::classifier::{FeatureSource, FeatureVector};
use crate::error::{Error, Result};
use crate::metrics::{auc, optimal_cutoff, roc_curve, Cutoff, RocPoint};
use crate::nn::loss::{objective, EPSILON};
use crate::nn::{
    derive_seed, sample_gaussian, seeded_rng, Algorithm, GradSeed, Gradients, LayerSpec, ModelFile, Network, Optimizer,
    Scalar, StreamRng, Target, Tensor,
};

pub const LEAKY_SLOPE: f32 = 0.2;
const HIDDEN: usize = 128;
const D_HIDDEN: [usize; 2] = [128, 64];
const CONV_FILTERS: usize = 8;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneratorKind {
    #[default]
    Dense,
    /// A 3-tap convolution over the noise vector before the dense layers.
    Conv,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorLoss {
    /// Minimize `mean log(1 − D(G(z)))`.
    #[default]
    Saturating,
    /// Minimize `−mean log D(G(z))`.
    NonSaturating,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionMode {
    /// Validation AUC of held-out real features against fresh fakes.
    #[default]
    FakeOnly,
    /// Validation AUC against held-out unknown-class features.
    PaperFaithful,
}

macro_rules! text_enum {
    ($ty:ty, $what:literal, $($variant:path => $name:literal),+) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($variant => $name),+ })
            }
        }

        impl std::str::FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok($variant),)+
                    other => Err(Error::config(format!(concat!("unknown ", $what, " `{}`"), other))),
                }
            }
        }
    };
}

text_enum!(GeneratorKind, "generator kind", GeneratorKind::Dense => "dense", GeneratorKind::Conv => "conv");
text_enum!(GeneratorLoss, "generator loss", GeneratorLoss::Saturating => "saturating", GeneratorLoss::NonSaturating => "non-saturating");
text_enum!(SelectionMode, "selection mode", SelectionMode::FakeOnly => "fake-only", SelectionMode::PaperFaithful => "paper-faithful");

#[derive(Clone, Debug, PartialEq)]
pub struct GanConfig {
    pub n_known: usize,
    pub n_hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_g: f64,
    pub lr_d: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub generator: GeneratorKind,
    pub generator_loss: GeneratorLoss,
    pub selection_mode: SelectionMode,
    pub seed: u64,
}

/// `max(2, ⌊k/2⌋)`, kept below `k`.
pub fn default_hidden(n_known: usize) -> usize {
    (n_known / 2).max(2).min(n_known.saturating_sub(1)).max(1)
}

impl GanConfig {
    pub fn new(n_known: usize, seed: u64) -> Self {
        GanConfig {
            n_known,
            n_hidden: default_hidden(n_known),
            epochs: 200,
            batch_size: 32,
            lr_g: 2e-4,
            lr_d: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            generator: GeneratorKind::Dense,
            generator_loss: GeneratorLoss::Saturating,
            selection_mode: SelectionMode::FakeOnly,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_known < 2 {
            return Err(Error::config("the feature length must be at least 2"));
        }
        if self.n_hidden == 0 || self.n_hidden >= self.n_known {
            return Err(Error::config(format!(
                "noise length {} must lie in 1..{}",
                self.n_hidden, self.n_known
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be at least 1"));
        }
        if !(self.lr_g >= 0.0 && self.lr_d >= 0.0) {
            return Err(Error::config("learning rates must be non-negative"));
        }
        Ok(())
    }

    pub fn generator_input(&self) -> Vec<usize> {
        match self.generator {
            GeneratorKind::Dense => vec![self.n_hidden],
            GeneratorKind::Conv => vec![1, 1, self.n_hidden],
        }
    }

    pub fn generator_layers(&self) -> Vec<LayerSpec> {
        let mut layers = Vec::new();
        let mut width = self.n_hidden;
        if self.generator == GeneratorKind::Conv {
            layers.push(LayerSpec::Conv2d {
                in_channels: 1,
                kernels: CONV_FILTERS,
            });
            layers.push(LayerSpec::LeakyRelu { slope: LEAKY_SLOPE });
            layers.push(LayerSpec::Flatten);
            width *= CONV_FILTERS;
        }
        layers.extend([
            LayerSpec::Dense { inputs: width, outputs: HIDDEN },
            LayerSpec::LeakyRelu { slope: LEAKY_SLOPE },
            LayerSpec::Dense { inputs: HIDDEN, outputs: self.n_known },
            LayerSpec::Softmax,
        ]);
        layers
    }

    pub fn discriminator_layers(&self) -> Vec<LayerSpec> {
        let [h1, h2] = D_HIDDEN;
        vec![
            LayerSpec::Dense { inputs: self.n_known, outputs: h1 },
            LayerSpec::LeakyRelu { slope: LEAKY_SLOPE },
            LayerSpec::Dense { inputs: h1, outputs: h2 },
            LayerSpec::LeakyRelu { slope: LEAKY_SLOPE },
            LayerSpec::Dense { inputs: h2, outputs: 1 },
            LayerSpec::Sigmoid,
        ]
    }

    pub fn build<F: Scalar>(&self) -> Result<(Network<F>, Network<F>)> {
        self.validate()?;
        let g = Network::new(&self.generator_input(), self.generator_layers(), derive_seed(self.seed, &[1]))?;
        let d = Network::new(&[self.n_known], self.discriminator_layers(), derive_seed(self.seed, &[2]))?;
        Ok((g, d))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochSnapshot {
    /// 1-based.
    pub epoch: usize,
    pub auc: f64,
    pub v_d: f64,
    pub v_g: f64,
    pub discriminator: Network<f32>,
}

/// Generator, discriminator, their optimizers and the per-epoch history.
#[derive(Clone, Debug)]
pub struct GanPair {
    pub config: GanConfig,
    pub generator: Network<f32>,
    pub discriminator: Network<f32>,
    pub history: Vec<EpochSnapshot>,
    opt_g: Optimizer<f32>,
    opt_d: Optimizer<f32>,
}

impl GanPair {
    pub fn new(config: &GanConfig) -> Result<Self> {
        let (generator, discriminator) = config.build()?;
        let adam = Algorithm::adam(config.beta1, config.beta2);
        Ok(GanPair {
            config: config.clone(),
            generator,
            discriminator,
            history: Vec::new(),
            opt_g: Optimizer::new(adam, config.lr_g),
            opt_d: Optimizer::new(adam, config.lr_d),
        })
    }

    /// `m` standard-normal noise vectors shaped for the generator.
    pub fn noise(&self, m: usize, rng: &mut StreamRng) -> Result<Tensor<f32>> {
        let mut shape = vec![m];
        shape.extend(self.config.generator_input());
        sample_gaussian::<f32>(m * self.config.n_hidden, rng).reshape(&shape)
    }

    pub fn generate(&self, noise: &Tensor<f32>) -> Result<Tensor<f32>> {
        self.generator.forward(noise)
    }

    pub fn history_csv(&self) -> String {
        let mut s = String::from("epoch,auc,v_d,v_g\n");
        for h in &self.history {
            s.push_str(&format!("{},{},{},{}\n", h.epoch, h.auc, h.v_d, h.v_g));
        }
        s
    }

    /// Writes `<stem>.generator.*`, `<stem>.discriminator.*` and `<stem>.history.csv`.
    pub fn save(&self, stem: &Path) -> Result<()> {
        let with = |suffix: &str| {
            let mut s = stem.as_os_str().to_owned();
            s.push(suffix);
            std::path::PathBuf::from(s)
        };
        let c = &self.config;
        ModelFile::new(self.generator.clone())
            .with_meta("kind", "generator")
            .with_meta("generator_loss", c.generator_loss)
            .with_meta("epochs", c.epochs)
            .save(&with(".generator"))?;
        ModelFile::new(self.discriminator.clone())
            .with_meta("kind", "discriminator-final")
            .save(&with(".discriminator"))?;
        let path = with(".history.csv");
        std::fs::write(&path, self.history_csv()).map_err(|e| Error::file(path, e))
    }
}

fn clamped_ln(p: f64) -> f64 {
    p.clamp(EPSILON, 1.0 - EPSILON).ln()
}

/// `mean log D(x) + mean log(1 − D(G(z)))` from discriminator scores.
pub fn v_d(real_scores: &[f64], fake_scores: &[f64]) -> f64 {
    let real = real_scores.iter().map(|&p| clamped_ln(p)).sum::<f64>() / real_scores.len() as f64;
    real + v_g(fake_scores)
}

/// `mean log(1 − D(G(z)))`.
pub fn v_g(fake_scores: &[f64]) -> f64 {
    fake_scores.iter().map(|&p| clamped_ln(1.0 - p)).sum::<f64>() / fake_scores.len() as f64
}

fn concat<F: Scalar>(a: &Tensor<F>, b: &Tensor<F>) -> Result<Tensor<F>> {
    if a.shape()[1..] != b.shape()[1..] {
        return Err(Error::shape(a.shape(), b.shape()));
    }
    let mut shape = a.shape().to_vec();
    shape[0] += b.shape()[0];
    let mut data = a.data().to_vec();
    data.extend_from_slice(b.data());
    Tensor::new(&shape, data)
}

/// Gradient of `−V_D` with respect to the discriminator weights.
pub fn discriminator_gradients<F: Scalar>(d: &Network<F>, real: &Tensor<F>, fake: &Tensor<F>) -> Result<Gradients<F>> {
    let m = real.shape()[0];
    let batch = concat(real, fake)?;
    let targets: Vec<F> = (0..batch.shape()[0])
        .map(|i| if i < m { F::one() } else { F::zero() })
        .collect();
    let mut session = d.session();
    let output = session.forward(&batch)?.clone();
    let obj = objective(d.head(), &output, Target::Binary(&targets))?;
    // mean over 2m samples → sum of two m-sample means
    let grad = obj.grad.map(|g| g * F::from_f64(2.0));
    session.backward(&grad, obj.seed)
}

/// Generator loss on `noise` and its gradient with respect to the generator
/// weights, backpropagated through the (fixed) discriminator.
pub fn generator_objective<F: Scalar>(
    g: &Network<F>,
    d: &Network<F>,
    noise: &Tensor<F>,
    loss: GeneratorLoss,
) -> Result<(f64, Gradients<F>)> {
    let m = noise.shape()[0];
    let mut gs = g.session();
    let fake = gs.forward(noise)?.clone();
    let mut ds = d.session();
    let scores = ds.forward(&fake)?.clone();
    let inv_m = 1.0 / m as f64;
    let mut value = 0.0;
    let logit_grad = scores.map(|p| {
        let p = p.as_f64();
        F::from_f64(match loss {
            GeneratorLoss::Saturating => -p * inv_m,
            GeneratorLoss::NonSaturating => -(1.0 - p) * inv_m,
        })
    });
    for p in scores.data() {
        let p = p.as_f64();
        value += match loss {
            GeneratorLoss::Saturating => clamped_ln(1.0 - p),
            GeneratorLoss::NonSaturating => -clamped_ln(p),
        } * inv_m;
    }
    let through_d = ds.backward(&logit_grad, GradSeed::Logits)?;
    let grads = gs.backward(&through_d.input, GradSeed::Output)?;
    Ok((value, grads))
}

fn scores_of(d: &Network<f32>, batch: &Tensor<f32>) -> Result<Vec<f64>> {
    Ok(d.forward(batch)?.data().iter().map(|v| v.as_f64()).collect())
}

/// One discriminator update followed by one generator update on a fresh
/// forward pass. Returns `(V_D, V_G)` evaluated after both updates.
pub fn gan_step(pair: &mut GanPair, real: &Tensor<f32>, noise: &Tensor<f32>) -> Result<(f64, f64)> {
    let m = real.shape().first().copied().unwrap_or(0);
    if m == 0 || real.is_empty() {
        return Err(Error::argument("gan_step needs a non-empty batch"));
    }
    if noise.shape()[0] != m {
        return Err(Error::Argument(format!(
            "real batch has {m} rows but the noise batch has {}",
            noise.shape()[0]
        )));
    }
    let fake = pair.generator.forward(noise)?;
    let gd = discriminator_gradients(&pair.discriminator, real, &fake)?;
    pair.opt_d.step(&mut pair.discriminator, &gd)?;
    let (_, gg) = generator_objective(&pair.generator, &pair.discriminator, noise, pair.config.generator_loss)?;
    pair.opt_g.step(&mut pair.generator, &gg)?;

    let fake = pair.generator.forward(noise)?;
    let real_scores = scores_of(&pair.discriminator, real)?;
    let fake_scores = scores_of(&pair.discriminator, &fake)?;
    Ok((v_d(&real_scores, &fake_scores), v_g(&fake_scores)))
}

/// Stacks feature vectors into a `[n, k]` batch.
pub fn features_tensor(features: &[FeatureVector]) -> Result<Tensor<f32>> {
    let k = features
        .first()
        .map(|f| f.values.len())
        .ok_or_else(|| Error::argument("no feature vectors"))?;
    let mut data = Vec::with_capacity(features.len() * k);
    for f in features {
        if f.values.len() != k {
            return Err(Error::shape(&[k], &[f.values.len()]));
        }
        data.extend_from_slice(&f.values);
    }
    Tensor::new(&[features.len(), k], data)
}

/// Discriminator scores of feature vectors.
pub fn score_features(d: &Network<f32>, features: &[FeatureVector]) -> Result<Vec<f64>> {
    if features.is_empty() {
        return Ok(Vec::new());
    }
    scores_of(d, &features_tensor(features)?)
}

/// Generated feature vectors, for inspection and calibration.
pub fn generate_features(pair: &GanPair, count: usize, rng: &mut StreamRng) -> Result<Vec<FeatureVector>> {
    if count == 0 {
        return Ok(Vec::new());
    }
    let out = pair.generate(&pair.noise(count, rng)?)?;
    Ok((0..count)
        .map(|i| FeatureVector {
            values: out.row(i).to_vec(),
            source: FeatureSource::Synthetic,
            class_label: None,
        })
        .collect())
}

/// Negative validation scores for selection: fresh fakes in fake-only mode,
/// `unknown_val` otherwise.
fn negatives(
    pair: &GanPair,
    positives: usize,
    unknown_val: &[FeatureVector],
    rng: &mut StreamRng,
) -> Result<Vec<f64>> {
    match pair.config.selection_mode {
        SelectionMode::FakeOnly => scores_of(&pair.discriminator, &pair.generate(&pair.noise(positives, rng)?)?),
        SelectionMode::PaperFaithful => score_features(&pair.discriminator, unknown_val),
    }
}

fn labeled(pos: &[f64], neg: &[f64]) -> Vec<(f64, bool)> {
    pos.iter().map(|&s| (s, true)).chain(neg.iter().map(|&s| (s, false))).collect()
}

/// Alternating adversarial training; after every epoch the discriminator's
/// validation AUC is recorded along with a snapshot of its weights.
pub fn train_gan(
    real: &[FeatureVector],
    gan_val: &[FeatureVector],
    unknown_val: &[FeatureVector],
    config: &GanConfig,
) -> Result<GanPair> {
    config.validate()?;
    if real.len() < config.batch_size {
        return Err(Error::config(format!(
            "{} real feature vectors cannot fill a batch of {}",
            real.len(),
            config.batch_size
        )));
    }
    if gan_val.is_empty() {
        return Err(Error::config("the GAN validation set is empty"));
    }
    if config.selection_mode == SelectionMode::PaperFaithful && unknown_val.is_empty() {
        return Err(Error::config("paper-faithful selection needs unknown-class validation features"));
    }
    if let Some(f) = real.iter().chain(gan_val).find(|f| f.values.len() != config.n_known) {
        return Err(Error::shape(&[config.n_known], &[f.values.len()]));
    }
    if real.iter().chain(gan_val).any(|f| f.source != FeatureSource::Real) {
        return Err(Error::Data("GAN training needs real feature vectors".into()));
    }
    let real_all = features_tensor(real)?;
    let val = features_tensor(gan_val)?;
    let k = config.n_known;
    let mut pair = GanPair::new(config)?;
    let mut order_rng = seeded_rng(config.seed, 1);
    let mut noise_rng = seeded_rng(config.seed, 2);
    let mut eval_rng = seeded_rng(config.seed, 3);
    let mut order: Vec<usize> = (0..real.len()).collect();
    let m = config.batch_size;
    for epoch in 1..=config.epochs {
        order.shuffle(&mut order_rng);
        let (mut sum_d, mut sum_g, mut steps) = (0.0, 0.0, 0usize);
        for chunk in order.chunks_exact(m) {
            let mut data = Vec::with_capacity(m * k);
            for &i in chunk {
                data.extend_from_slice(real_all.row(i));
            }
            let batch = Tensor::new(&[m, k], data)?;
            let noise = pair.noise(m, &mut noise_rng)?;
            let (vd, vg) = gan_step(&mut pair, &batch, &noise)?;
            sum_d += vd;
            sum_g += vg;
            steps += 1;
        }
        let pos = scores_of(&pair.discriminator, &val)?;
        let neg = negatives(&pair, gan_val.len(), unknown_val, &mut eval_rng)?;
        let a = auc(&labeled(&pos, &neg))?;
        log::debug!("gan epoch {epoch}: auc {a:.4}");
        pair.history.push(EpochSnapshot {
            epoch,
            auc: a,
            v_d: sum_d / steps as f64,
            v_g: sum_g / steps as f64,
            discriminator: pair.discriminator.clone(),
        });
    }
    Ok(pair)
}

/// History entry with the highest AUC, later epoch on ties.
pub fn select_discriminator(pair: &GanPair) -> Result<&EpochSnapshot> {
    let mut best: Option<&EpochSnapshot> = None;
    for s in &pair.history {
        if best.is_none_or(|b| s.auc >= b.auc) {
            best = Some(s);
        }
    }
    best.ok_or_else(|| Error::State("the GAN history is empty".into()))
}

/// A discriminator fixed as the open-set gate.
#[derive(Clone, Debug, PartialEq)]
pub struct SelectedDiscriminator {
    pub network: Network<f32>,
    pub epoch: usize,
    pub selection_auc: f64,
    pub selection_mode: SelectionMode,
    pub threshold: f64,
    pub cutoff: Cutoff,
    pub roc: Vec<RocPoint>,
}

impl SelectedDiscriminator {
    pub fn score(&self, features: &[FeatureVector]) -> Result<Vec<f64>> {
        score_features(&self.network, features)
    }

    pub fn n_known(&self) -> usize {
        self.network.input_shape()[0]
    }

    pub fn save(&self, stem: &Path) -> Result<()> {
        ModelFile::new(self.network.clone())
            .with_meta("kind", "discriminator")
            .with_meta("epoch", self.epoch)
            .with_meta("selection_auc", self.selection_auc)
            .with_meta("selection_mode", self.selection_mode)
            .with_meta("threshold", self.threshold)
            .with_meta("cutoff_tpr", self.cutoff.tpr)
            .with_meta("cutoff_fpr", self.cutoff.fpr)
            .with_meta("cutoff_distance", self.cutoff.distance)
            .with_meta("cutoff_degenerate", self.cutoff.degenerate)
            .save(stem)
    }

    /// Loads the weights and scalars; the calibration curve is not stored.
    pub fn load(stem: &Path) -> Result<Self> {
        let file = ModelFile::load(stem)?;
        let kind = file.meta("kind")?;
        if kind != "discriminator" {
            return Err(Error::Schema {
                expected: "discriminator".into(),
                found: kind.into(),
            });
        }
        fn num<T: std::str::FromStr>(file: &ModelFile, key: &str) -> Result<T> {
            file.meta(key)?
                .parse()
                .map_err(|_| Error::Config(format!("model entry `meta.{key}` is malformed")))
        }
        let threshold = num(&file, "threshold")?;
        Ok(SelectedDiscriminator {
            epoch: num(&file, "epoch")?,
            selection_auc: num(&file, "selection_auc")?,
            selection_mode: file.meta("selection_mode")?.parse()?,
            threshold,
            cutoff: Cutoff {
                threshold,
                distance: num(&file, "cutoff_distance")?,
                tpr: num(&file, "cutoff_tpr")?,
                fpr: num(&file, "cutoff_fpr")?,
                degenerate: num(&file, "cutoff_degenerate")?,
            },
            roc: Vec::new(),
            network: file.network,
        })
    }
}

/// Thresholds `snapshot` at the ROC point of `positives` (known, real) against
/// `negatives` (fake or unknown) nearest the top-left corner.
pub fn calibrate_threshold(
    snapshot: &EpochSnapshot,
    selection_mode: SelectionMode,
    positives: &[f64],
    negatives: &[f64],
) -> Result<SelectedDiscriminator> {
    let roc = roc_curve(&labeled(positives, negatives))?;
    let cutoff = optimal_cutoff(&roc)?;
    Ok(SelectedDiscriminator {
        network: snapshot.discriminator.clone(),
        epoch: snapshot.epoch,
        selection_auc: snapshot.auc,
        selection_mode,
        threshold: cutoff.threshold,
        cutoff,
        roc,
    })
}

/// Selection plus calibration on the validation data used during training.
pub fn select_and_calibrate(
    pair: &GanPair,
    gan_val: &[FeatureVector],
    unknown_val: &[FeatureVector],
) -> Result<SelectedDiscriminator> {
    let best = select_discriminator(pair)?;
    let pos = score_features(&best.discriminator, gan_val)?;
    let neg = match pair.config.selection_mode {
        SelectionMode::FakeOnly => {
            let mut rng = seeded_rng(pair.config.seed, 4);
            let fakes = generate_features(pair, gan_val.len(), &mut rng)?;
            score_features(&best.discriminator, &fakes)?
        }
        SelectionMode::PaperFaithful => score_features(&best.discriminator, unknown_val)?,
    };
    calibrate_threshold(best, pair.config.selection_mode, &pos, &neg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::compare_with_differences;
    use crate::nn::{gradient_check, Coverage};
    use proptest::prelude::*;

    fn one_hot_features(k: usize, n: usize, seed: u64) -> Vec<FeatureVector> {
        let mut rng = seeded_rng(seed, 9);
        let noise: Tensor<f32> = sample_gaussian(n * k, &mut rng);
        (0..n)
            .map(|i| {
                let logits: Vec<f32> =
                    (0..k).map(|j| 0.3 * noise.data()[i * k + j] + if j == i % k { 6.0 } else { 0.0 }).collect();
                let p = crate::nn::softmax(&Tensor::from_vec(logits)).unwrap();
                FeatureVector {
                    values: p.into_data(),
                    source: FeatureSource::Real,
                    class_label: Some((i % k) as u32 + 1),
                }
            })
            .collect()
    }

    #[test]
    fn analytic_values() {
        assert!((v_d(&[0.5; 4], &[0.5; 4]) + 1.386294).abs() < 1e-6);
        assert!(v_d(&[1.0 - 1e-9; 3], &[1e-9; 3]).abs() < 1e-6);
        assert!((v_g(&[0.5; 5]) + 0.693147).abs() < 1e-6);
    }

    #[test]
    fn frozen_pair_step() {
        let cfg = GanConfig { lr_g: 0.0, lr_d: 0.0, ..GanConfig::new(6, 1) };
        let mut pair = GanPair::new(&cfg).unwrap();
        for t in &mut pair.discriminator.params_mut()[4] {
            t.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let real = features_tensor(&one_hot_features(6, 8, 1)).unwrap();
        let mut rng = seeded_rng(0, 0);
        let noise = pair.noise(8, &mut rng).unwrap();
        let before = pair.generator.clone();
        let (vd, vg) = gan_step(&mut pair, &real, &noise).unwrap();
        assert!((vd + 1.386294).abs() < 1e-5, "{vd}");
        assert!((vg + 0.693147).abs() < 1e-5, "{vg}");
        assert_eq!(pair.generator, before);
        let empty = Tensor::zeros(&[0, 6]);
        assert!(gan_step(&mut pair, &empty, &noise).is_err());
    }

    #[test]
    fn outputs_stay_in_range() {
        let cfg = GanConfig::new(5, 3);
        let (g, d) = cfg.build::<f32>().unwrap();
        let mut rng = seeded_rng(1, 1);
        let z = sample_gaussian::<f32>(20 * 2, &mut rng).reshape(&[20, 2]).unwrap();
        let fake = g.forward(&z).unwrap();
        for i in 0..20 {
            assert!((fake.row(i).iter().sum::<f32>() - 1.0).abs() < 1e-6);
        }
        for v in [1e4f32, -1e4, 0.0] {
            let s = d.forward(&Tensor::filled(&[1, 5], v)).unwrap().data()[0];
            assert!(s > 0.0 && s < 1.0);
        }
        assert_eq!(default_hidden(2), 1);
        assert_eq!(default_hidden(3), 2);
        assert_eq!(default_hidden(10), 5);
        assert!(GanConfig { n_hidden: 5, ..GanConfig::new(5, 0) }.validate().is_err());
    }

    #[test]
    fn gradients_match_differences() {
        for kind in [GeneratorKind::Dense, GeneratorKind::Conv] {
            for loss in [GeneratorLoss::Saturating, GeneratorLoss::NonSaturating] {
                let cfg = GanConfig { generator: kind, generator_loss: loss, ..GanConfig::new(6, 5) };
                let (g, d) = cfg.build::<f64>().unwrap();
                let mut rng = seeded_rng(2, 2);
                let mut shape = vec![3];
                shape.extend(cfg.generator_input());
                let z = sample_gaussian::<f64>(3 * cfg.n_hidden, &mut rng).reshape(&shape).unwrap();
                let (_, analytic) = generator_objective(&g, &d, &z, loss).unwrap();
                let cov = Coverage::PerTensor { limit: 30, seed: 1 };
                let report = compare_with_differences(&g, &analytic, 1e-3, cov, |gn| {
                    let (fake, mut signs) = gn.forward_with_signs(&z)?;
                    signs.extend(d.forward_with_signs(&fake)?.1);
                    Ok((generator_objective(gn, &d, &z, loss)?.0, signs))
                })
                .unwrap();
                assert!(report.max_relative_error < 1e-4, "{kind:?} {loss:?} {report:?}");
            }
        }
        let cfg = GanConfig::new(6, 8);
        let (g, d) = cfg.build::<f64>().unwrap();
        let mut rng = seeded_rng(3, 3);
        let z = sample_gaussian::<f64>(4 * cfg.n_hidden, &mut rng).reshape(&[4, cfg.n_hidden]).unwrap();
        let fake = g.forward(&z).unwrap();
        let real = features_tensor(&one_hot_features(6, 4, 2)).unwrap().cast::<f64>();
        let analytic = discriminator_gradients(&d, &real, &fake).unwrap();
        let report = compare_with_differences(&d, &analytic, 1e-3, Coverage::All, |dn| {
            let (r, mut signs) = dn.forward_with_signs(&real)?;
            let (f, fake_signs) = dn.forward_with_signs(&fake)?;
            signs.extend(fake_signs);
            Ok((-v_d(r.data(), f.data()), signs))
        })
        .unwrap();
        assert!(report.max_relative_error < 1e-4, "{report:?}");
        let both = concat(&real, &fake).unwrap();
        let labels = [1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0];
        let check = gradient_check(&d, &both, Target::Binary(&labels), 1e-3, Coverage::All).unwrap();
        assert!(check.max_relative_error < 1e-4);
    }

    #[test]
    fn v_g_is_the_fake_half_of_v_d() {
        let cfg = GanConfig::new(4, 2);
        let pair = GanPair::new(&cfg).unwrap();
        let real = features_tensor(&one_hot_features(4, 10, 3)).unwrap();
        let mut rng = seeded_rng(1, 0);
        let fake = pair.generate(&pair.noise(10, &mut rng).unwrap()).unwrap();
        let r = scores_of(&pair.discriminator, &real).unwrap();
        let f = scores_of(&pair.discriminator, &fake).unwrap();
        let real_half = r.iter().map(|&p| p.ln()).sum::<f64>() / 10.0;
        assert!((v_d(&r, &f) - (real_half + v_g(&f))).abs() < 1e-6);
    }

    #[test]
    fn training_history_and_determinism() {
        let k = 4;
        let real = one_hot_features(k, 200, 4);
        let val = one_hot_features(k, 60, 5);
        let cfg = GanConfig { epochs: 12, ..GanConfig::new(k, 7) };
        let pair = train_gan(&real, &val, &[], &cfg).unwrap();
        assert_eq!(pair.history.len(), 12);
        assert!(pair.history.iter().all(|h| (0.0..=1.0).contains(&h.auc)));
        let best = select_discriminator(&pair).unwrap();
        assert!(best.auc >= 0.9, "{}", pair.history_csv());
        let again = train_gan(&real, &val, &[], &cfg).unwrap();
        assert_eq!(pair.history, again.history);

        let selected = select_and_calibrate(&pair, &val, &[]).unwrap();
        assert_eq!(selected.selection_auc, best.auc);
        assert!(selected.roc.iter().any(|p| p.threshold == selected.threshold));
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("disc");
        selected.save(&stem).unwrap();
        let loaded = SelectedDiscriminator::load(&stem).unwrap();
        assert_eq!(loaded.network, selected.network);
        assert_eq!(loaded.threshold, selected.threshold);
        pair.save(&dir.path().join("gan")).unwrap();
        assert!(dir.path().join("gan.history.csv").exists());
    }

    #[test]
    fn training_errors() {
        let real = one_hot_features(4, 10, 1);
        let cfg = GanConfig::new(4, 0);
        assert!(matches!(train_gan(&real, &real, &[], &cfg), Err(Error::Config(_))));
        let faithful = GanConfig { batch_size: 4, selection_mode: SelectionMode::PaperFaithful, ..cfg };
        assert!(train_gan(&real, &real, &[], &faithful).is_err());
    }

    fn pair_with_aucs(aucs: &[f64]) -> GanPair {
        let mut pair = GanPair::new(&GanConfig::new(3, 0)).unwrap();
        pair.history = aucs
            .iter()
            .enumerate()
            .map(|(i, &auc)| EpochSnapshot {
                epoch: i + 1,
                auc,
                v_d: 0.0,
                v_g: 0.0,
                discriminator: pair.discriminator.clone(),
            })
            .collect();
        pair
    }

    #[test]
    fn selection_examples() {
        assert_eq!(select_discriminator(&pair_with_aucs(&[0.6, 0.9, 0.7])).unwrap().epoch, 2);
        assert_eq!(select_discriminator(&pair_with_aucs(&[0.8, 0.8])).unwrap().epoch, 2);
        assert_eq!(select_discriminator(&pair_with_aucs(&[0.3])).unwrap().epoch, 1);
        assert!(matches!(select_discriminator(&pair_with_aucs(&[])), Err(Error::State(_))));
    }

    #[test]
    fn calibration_examples() {
        let pair = pair_with_aucs(&[0.5]);
        let snap = &pair.history[0];
        let s = calibrate_threshold(snap, SelectionMode::FakeOnly, &[0.9, 0.8], &[0.2, 0.1]).unwrap();
        assert_eq!((s.threshold, s.cutoff.distance), (0.8, 0.0));
        let s = calibrate_threshold(snap, SelectionMode::FakeOnly, &[1.0], &[0.0]).unwrap();
        assert_eq!((s.threshold, s.cutoff.distance), (1.0, 0.0));
        let s = calibrate_threshold(snap, SelectionMode::FakeOnly, &[0.4; 3], &[0.4; 3]).unwrap();
        assert!(s.cutoff.degenerate);
        assert_eq!(s.threshold, 0.4);
    }

    proptest! {
        #[test]
        fn selection_is_the_history_max(aucs in proptest::collection::vec(0u8..10, 1..30)) {
            let aucs: Vec<f64> = aucs.into_iter().map(|a| a as f64 / 10.0).collect();
            let pair = pair_with_aucs(&aucs);
            let chosen = select_discriminator(&pair).unwrap();
            let mut want = 0;
            for (i, &a) in aucs.iter().enumerate() {
                if a >= aucs[want] { want = i; }
            }
            prop_assert_eq!(chosen.epoch, want + 1);
            prop_assert_eq!(chosen.auc, aucs.iter().copied().fold(0.0, f64::max));
        }
    }
}

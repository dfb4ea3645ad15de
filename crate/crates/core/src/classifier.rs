//! The window classifier: two 3×3 conv layers, a wide hidden dense layer and
//! a softmax over the known classes. Its probability outputs are the feature
//! vectors the discriminator operates on.

use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{LabeledWindow, NormStats, SplitPlan};
use crate::error::{Error, Result};
use crate::nn::{loss_and_gradients, seeded_rng, Algorithm, LayerSpec, ModelFile, Network, Optimizer, Target, Tensor};

/// What [`extract_features`] emits.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureMode {
    #[default]
    Probabilities,
    Logits,
}

impl fmt::Display for FeatureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureMode::Probabilities => "probabilities",
            FeatureMode::Logits => "logits",
        })
    }
}

impl std::str::FromStr for FeatureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "probabilities" => Ok(FeatureMode::Probabilities),
            "logits" => Ok(FeatureMode::Logits),
            other => Err(Error::config(format!("unknown feature mode `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CnnConfig {
    pub n_channel: usize,
    pub n_sample_points: usize,
    pub n_known: usize,
    pub conv_kernels: usize,
    pub fc1_width: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub feature_mode: FeatureMode,
    pub seed: u64,
}

impl CnnConfig {
    pub fn new(n_channel: usize, n_sample_points: usize, n_known: usize, seed: u64) -> Self {
        CnnConfig {
            n_channel,
            n_sample_points,
            n_known,
            conv_kernels: 32,
            fc1_width: 128,
            epochs: 50,
            batch_size: 32,
            learning_rate: 1e-3,
            feature_mode: FeatureMode::Probabilities,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_known < 2 {
            return Err(Error::config(format!("need at least 2 known classes, got {}", self.n_known)));
        }
        if self.fc1_width <= self.n_known {
            return Err(Error::config(format!(
                "hidden width {} must exceed the number of known classes {}",
                self.fc1_width, self.n_known
            )));
        }
        if self.n_channel == 0 || self.n_sample_points == 0 || self.conv_kernels == 0 {
            return Err(Error::config("input dimensions and kernel count must be positive"));
        }
        if self.batch_size == 0 || !(self.learning_rate > 0.0) {
            return Err(Error::config("batch size and learning rate must be positive"));
        }
        Ok(())
    }

    pub fn input_shape(&self) -> [usize; 3] {
        [1, self.n_channel, self.n_sample_points]
    }

    pub fn layers(&self) -> Vec<LayerSpec> {
        let k = self.conv_kernels;
        vec![
            LayerSpec::Conv2d { in_channels: 1, kernels: k },
            LayerSpec::Relu,
            LayerSpec::Conv2d { in_channels: k, kernels: k },
            LayerSpec::Relu,
            LayerSpec::Flatten,
            LayerSpec::Dense {
                inputs: k * self.n_channel * self.n_sample_points,
                outputs: self.fc1_width,
            },
            LayerSpec::Relu,
            LayerSpec::Dense {
                inputs: self.fc1_width,
                outputs: self.n_known,
            },
            LayerSpec::Softmax,
        ]
    }

    pub fn build<F: crate::nn::Scalar>(&self) -> Result<Network<F>> {
        self.validate()?;
        Network::new(&self.input_shape(), self.layers(), self.seed)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeatureSource {
    Real,
    Synthetic,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f32>,
    pub source: FeatureSource,
    pub class_label: Option<u32>,
}

impl FeatureVector {
    /// Index of the largest value, ties toward the lowest index.
    pub fn argmax(&self) -> usize {
        argmax(&self.values)
    }

    pub fn max(&self) -> f32 {
        self.values.iter().copied().fold(f32::NEG_INFINITY, f32::max)
    }
}

pub(crate) fn argmax(values: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// A trained classifier with its normalization and class map.
#[derive(Clone, Debug, PartialEq)]
pub struct CnnModel {
    pub config: CnnConfig,
    pub network: Network<f32>,
    pub stats: NormStats,
    /// Original gesture id of each output index.
    pub classes: Vec<u32>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingHistory {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch of the returned snapshot.
    pub best_epoch: usize,
}

impl TrainingHistory {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_accuracy\n");
        for e in &self.epochs {
            s.push_str(&format!("{},{},{}\n", e.epoch, e.train_loss, e.val_accuracy));
        }
        s
    }
}

const INFER_BATCH: usize = 64;

impl CnnModel {
    pub fn n_known(&self) -> usize {
        self.classes.len()
    }

    pub fn class_index(&self, class: u32) -> Option<usize> {
        self.classes.iter().position(|&c| c == class)
    }

    fn check_window(&self, w: &LabeledWindow) -> Result<()> {
        let expected = [self.config.n_channel, self.config.n_sample_points];
        if w.matrix.shape() != expected {
            return Err(Error::Argument(format!(
                "window shape {:?} does not match the classifier input {:?}",
                w.matrix.shape(),
                expected
            )));
        }
        Ok(())
    }

    /// Normalized batch `[B, 1, C, S]`.
    fn batch(&self, windows: &[&LabeledWindow]) -> Result<Tensor<f32>> {
        let mut data = Vec::with_capacity(windows.len() * self.config.n_channel * self.config.n_sample_points);
        for w in windows {
            self.check_window(w)?;
            data.extend_from_slice(self.stats.apply(&w.matrix)?.data());
        }
        let [one, c, s] = self.config.input_shape();
        Tensor::new(&[windows.len(), one, c, s], data)
    }

    /// Output rows for `windows` in `mode`.
    fn outputs(&self, windows: &[&LabeledWindow], mode: FeatureMode) -> Result<Vec<Vec<f32>>> {
        let logits_net;
        let net = match mode {
            FeatureMode::Probabilities => &self.network,
            FeatureMode::Logits => {
                let n = self.network.layers().len() - 1;
                logits_net = Network::from_parts(
                    self.network.input_shape(),
                    self.network.layers()[..n].to_vec(),
                    self.network.params()[..n].to_vec(),
                    self.network.seed(),
                )?;
                &logits_net
            }
        };
        let mut rows = Vec::with_capacity(windows.len());
        for chunk in windows.chunks(INFER_BATCH) {
            let out = net.forward(&self.batch(chunk)?)?;
            for i in 0..chunk.len() {
                rows.push(out.row(i).to_vec());
            }
        }
        Ok(rows)
    }

    pub fn save(&self, stem: &Path) -> Result<()> {
        let c = &self.config;
        let classes: Vec<String> = self.classes.iter().map(u32::to_string).collect();
        ModelFile::new(self.network.clone())
            .with_meta("kind", "cnn")
            .with_meta("classes", classes.join(","))
            .with_meta("norm", self.stats.to_text())
            .with_meta("epochs", c.epochs)
            .with_meta("batch_size", c.batch_size)
            .with_meta("learning_rate", c.learning_rate)
            .with_meta("feature_mode", c.feature_mode)
            .save(stem)
    }

    pub fn load(stem: &Path) -> Result<Self> {
        let file = ModelFile::load(stem)?;
        if file.meta("kind")? != "cnn" {
            return Err(Error::Schema {
                expected: "cnn".into(),
                found: file.meta("kind")?.into(),
            });
        }
        let bad = |k: &str| Error::Config(format!("model entry `meta.{k}` is malformed"));
        let classes: Vec<u32> = file
            .meta("classes")?
            .split(',')
            .map(|c| c.parse().map_err(|_| bad("classes")))
            .collect::<Result<_>>()?;
        let stats = NormStats::from_text(file.meta("norm")?)?;
        let net = file.network.clone();
        let shape = net.input_shape().to_vec();
        let fc1_width = net
            .layers()
            .iter()
            .find_map(|l| match l {
                LayerSpec::Dense { outputs, .. } => Some(*outputs),
                _ => None,
            })
            .ok_or_else(|| bad("layers"))?;
        let conv_kernels = match net.layers().first() {
            Some(LayerSpec::Conv2d { kernels, .. }) => *kernels,
            _ => return Err(bad("layers")),
        };
        if shape.len() != 3 {
            return Err(bad("input_shape"));
        }
        let config = CnnConfig {
            n_channel: shape[1],
            n_sample_points: shape[2],
            n_known: classes.len(),
            conv_kernels,
            fc1_width,
            epochs: file.meta("epochs")?.parse().map_err(|_| bad("epochs"))?,
            batch_size: file.meta("batch_size")?.parse().map_err(|_| bad("batch_size"))?,
            learning_rate: file.meta("learning_rate")?.parse().map_err(|_| bad("learning_rate"))?,
            feature_mode: file.meta("feature_mode")?.parse()?,
            seed: net.seed(),
        };
        if config.layers() != net.layers() {
            return Err(Error::Config("stored layers are not a classifier network".into()));
        }
        Ok(CnnModel {
            config,
            network: net,
            stats,
            classes,
        })
    }
}

fn known_labels(windows: &[&LabeledWindow], classes: &[u32]) -> Result<Vec<usize>> {
    windows
        .iter()
        .map(|w| {
            classes.iter().position(|&c| c == w.class_label).ok_or_else(|| {
                Error::Data(format!("window of class {} is not among the known classes", w.class_label))
            })
        })
        .collect()
}

fn accuracy(model: &CnnModel, windows: &[&LabeledWindow]) -> Result<f64> {
    let labels = known_labels(windows, &model.classes)?;
    let rows = model.outputs(windows, FeatureMode::Probabilities)?;
    let correct = rows.iter().zip(&labels).filter(|(r, &l)| argmax(r) == l).count();
    Ok(correct as f64 / windows.len() as f64)
}

/// Trains on `cnn_train`, selecting the epoch with the best `cnn_val`
/// accuracy (later epoch on ties). Normalization statistics are fitted on
/// `cnn_train`.
pub fn train_cnn(windows: &[LabeledWindow], plan: &SplitPlan, config: &CnnConfig) -> Result<(CnnModel, TrainingHistory)> {
    config.validate()?;
    if plan.known_classes.len() != config.n_known {
        return Err(Error::config(format!(
            "{} known classes in the split but n_known = {}",
            plan.known_classes.len(),
            config.n_known
        )));
    }
    if plan.cnn_train.is_empty() {
        return Err(Error::config("cnn_train is empty"));
    }
    let train = SplitPlan::select(&plan.cnn_train, windows);
    let val = SplitPlan::select(&plan.cnn_val, windows);
    let labels = known_labels(&train, &plan.known_classes)?;
    known_labels(&val, &plan.known_classes)?;
    let (stats, _) = NormStats::fit(train.iter().copied())?;
    let mut model = CnnModel {
        config: config.clone(),
        network: config.build()?,
        stats,
        classes: plan.known_classes.clone(),
    };
    let inputs: Vec<Tensor<f32>> = train
        .iter()
        .map(|w| model.batch(&[w]))
        .collect::<Result<_>>()?;
    let mut optimizer = Optimizer::new(Algorithm::adam(0.9, 0.999), config.learning_rate);
    let mut rng = seeded_rng(config.seed, 1);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = TrainingHistory::default();
    let mut best: Option<(f64, Network<f32>)> = None;
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let parts: Vec<Tensor<f32>> = chunk.iter().map(|&i| inputs[i].clone()).collect();
            let [one, c, s] = config.input_shape();
            let batch = Tensor::stack(&parts)?.reshape(&[chunk.len(), one, c, s])?;
            let targets: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let (loss, grads) = loss_and_gradients(&model.network, &batch, Target::Classes(&targets))?;
            optimizer.step(&mut model.network, &grads)?;
            loss_sum += loss * chunk.len() as f64;
        }
        let val_accuracy = if val.is_empty() {
            accuracy(&model, &train)?
        } else {
            accuracy(&model, &val)?
        };
        let train_loss = loss_sum / train.len() as f64;
        log::debug!("cnn epoch {epoch}: loss {train_loss:.4}, val accuracy {val_accuracy:.4}");
        history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_accuracy,
        });
        if best.as_ref().is_none_or(|(a, _)| val_accuracy >= *a) {
            best = Some((val_accuracy, model.network.clone()));
            history.best_epoch = epoch;
        }
    }
    if let Some((_, net)) = best {
        model.network = net;
    }
    Ok((model, history))
}

/// Feature vector and predicted class index of one window.
pub fn classify(model: &CnnModel, window: &LabeledWindow) -> Result<(FeatureVector, usize)> {
    let mut f = extract_features(model, std::slice::from_ref(window))?;
    let fv = f.pop().expect("one window");
    let class = fv.argmax();
    Ok((fv, class))
}

/// One real feature vector per window, order preserved.
pub fn extract_features(model: &CnnModel, windows: &[LabeledWindow]) -> Result<Vec<FeatureVector>> {
    let refs: Vec<&LabeledWindow> = windows.iter().collect();
    let rows = model.outputs(&refs, model.config.feature_mode)?;
    Ok(rows
        .into_iter()
        .zip(windows)
        .map(|(values, w)| FeatureVector {
            values,
            source: FeatureSource::Real,
            class_label: Some(w.class_label),
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClosedEval {
    pub accuracy: f64,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

/// Closed-set accuracy over known-class windows.
pub fn eval_closed(model: &CnnModel, windows: &[LabeledWindow]) -> Result<ClosedEval> {
    if windows.is_empty() {
        return Err(Error::argument("closed-set evaluation needs at least one window"));
    }
    let refs: Vec<&LabeledWindow> = windows.iter().collect();
    let labels = known_labels(&refs, &model.classes)?;
    let rows = model.outputs(&refs, FeatureMode::Probabilities)?;
    Ok(confusion_from(rows.iter().map(|r| argmax(r)), &labels, model.n_known()))
}

pub(crate) fn confusion_from(predicted: impl Iterator<Item = usize>, labels: &[usize], n: usize) -> ClosedEval {
    let mut confusion = vec![vec![0; n]; n];
    let mut correct = 0;
    for (p, &t) in predicted.zip(labels) {
        confusion[t][p] += 1;
        correct += usize::from(p == t);
    }
    ClosedEval {
        accuracy: correct as f64 / labels.len() as f64,
        confusion,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_split, synth_family, synth_generate, SplitConfig, SynthConfig};
    use crate::nn::Scalar;

    fn synth(n_classes: usize, per_class: usize, seed: u64) -> Vec<LabeledWindow> {
        let specs = synth_family(n_classes, 4, 100.0, seed);
        let cfg = SynthConfig {
            windows_per_class: per_class,
            channels: 4,
            sample_rate: 100.0,
            window_samples: 8,
            subject_id: 1,
            seed,
        };
        synth_generate(&specs, &cfg).unwrap()
    }

    fn small(n_known: usize, seed: u64) -> CnnConfig {
        CnnConfig {
            conv_kernels: 4,
            fc1_width: 16,
            epochs: 8,
            batch_size: 16,
            ..CnnConfig::new(4, 8, n_known, seed)
        }
    }

    #[test]
    fn db1_shapes() {
        let cfg = CnnConfig::new(10, 20, 10, 0);
        let net: Network<f32> = cfg.build().unwrap();
        let mut shape = net.input_shape().to_vec();
        let mut shapes = Vec::new();
        for l in net.layers() {
            shape = l.output_shape(&shape).unwrap();
            shapes.push(shape.clone());
        }
        assert_eq!(shapes[0], vec![32, 10, 20]);
        assert_eq!(shapes[2], vec![32, 10, 20]);
        assert_eq!(shapes[4], vec![6400]);
        assert_eq!(net.output_shape(), vec![10]);
        assert!(CnnConfig { fc1_width: 10, ..cfg.clone() }.validate().is_err());
        assert!(CnnConfig::new(10, 20, 1, 0).validate().is_err());
    }

    fn untrained(n_known: usize) -> CnnModel {
        let config = small(n_known, 3);
        let mut network: Network<f32> = config.build().unwrap();
        for t in &mut network.params_mut()[7] {
            t.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        CnnModel {
            config,
            network,
            stats: NormStats { mean: vec![0.0; 4], std: vec![1.0; 4] },
            classes: (1..=n_known as u32).collect(),
        }
    }

    #[test]
    fn zero_head_gives_uniform_output() {
        let model = untrained(4);
        let ws = synth(4, 3, 1);
        let (fv, class) = classify(&model, &ws[5]).unwrap();
        assert!(fv.values.iter().all(|&v| (v - 0.25).abs() < 1e-7));
        assert_eq!(class, 0);
        let wrong = LabeledWindow { matrix: Tensor::zeros(&[4, 9]), ..ws[0].clone() };
        assert!(matches!(classify(&model, &wrong), Err(Error::Argument(_))));
    }

    #[test]
    fn features_preserve_order_and_sum_to_one() {
        let mut model = untrained(3);
        model.network = small(3, 9).build().unwrap();
        let ws = synth(3, 30, 2);
        let fs = extract_features(&model, &ws).unwrap();
        assert_eq!(fs.len(), ws.len());
        for (f, w) in fs.iter().zip(&ws) {
            assert_eq!(f.class_label, Some(w.class_label));
            assert!((f.values.iter().sum::<f32>() - 1.0).abs() < 1e-6);
            let (single, _) = classify(&model, w).unwrap();
            for (a, b) in single.values.iter().zip(&f.values) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn temperature_scaling_keeps_argmax() {
        let mut model = untrained(5);
        model.network = small(5, 4).build().unwrap();
        let ws = synth(5, 10, 4);
        let before: Vec<usize> = extract_features(&model, &ws).unwrap().iter().map(FeatureVector::argmax).collect();
        for t in [0.1f32, 3.0] {
            let mut scaled = model.clone();
            for p in &mut scaled.network.params_mut()[7] {
                p.data_mut().iter_mut().for_each(|v| *v *= t);
            }
            let after: Vec<usize> = extract_features(&scaled, &ws).unwrap().iter().map(FeatureVector::argmax).collect();
            assert_eq!(before, after);
        }
    }

    #[test]
    fn trains_on_separable_data_deterministically() {
        let ws = synth(3, 80, 5);
        let plan = make_split(&ws, &[1, 2, 3], &[], &SplitConfig::new(1)).unwrap();
        let cfg = CnnConfig { epochs: 40, ..small(3, 7) };
        let (model, history) = train_cnn(&ws, &plan, &cfg).unwrap();
        assert_eq!(history.epochs.len(), 40);
        let best = history.epochs.iter().map(|e| e.val_accuracy).fold(0.0, f64::max);
        assert_eq!(history.epochs[history.best_epoch - 1].val_accuracy, best);
        assert!(best >= 0.95, "{history:?}");
        let train: Vec<LabeledWindow> = plan.cnn_train.iter().map(|&i| ws[i].clone()).collect();
        assert!(eval_closed(&model, &train).unwrap().accuracy >= 0.99);

        let (again, h2) = train_cnn(&ws, &plan, &cfg).unwrap();
        assert_eq!(history, h2);
        assert_eq!(model, again);
    }

    #[test]
    fn indistinguishable_classes_stay_near_chance() {
        let mut ws = synth(2, 200, 6);
        // relabel half of class 1 as class 2 and drop the real class 2
        ws.retain(|w| w.class_label == 1);
        for (i, w) in ws.iter_mut().enumerate() {
            w.class_label = 1 + (i % 2) as u32;
        }
        let plan = make_split(&ws, &[1, 2], &[], &SplitConfig::new(2)).unwrap();
        let cfg = CnnConfig { epochs: 3, ..small(2, 1) };
        let (model, _) = train_cnn(&ws, &plan, &cfg).unwrap();
        let val: Vec<LabeledWindow> = plan.cnn_test.iter().map(|&i| ws[i].clone()).collect();
        let acc = eval_closed(&model, &val).unwrap().accuracy;
        assert!((acc - 0.5).abs() <= 0.15, "{acc}");
    }

    #[test]
    fn training_errors() {
        let ws = synth(3, 20, 1);
        let plan = make_split(&ws, &[1, 2], &[3], &SplitConfig::new(1)).unwrap();
        assert!(train_cnn(&ws, &plan, &small(3, 0)).is_err());
        let mut bad = plan.clone();
        bad.cnn_train.push(ws.iter().position(|w| w.class_label == 3).unwrap());
        assert!(matches!(train_cnn(&ws, &bad, &small(2, 0)), Err(Error::Data(_))));
        let empty = SplitPlan { cnn_train: vec![], ..plan };
        assert!(matches!(train_cnn(&ws, &empty, &small(2, 0)), Err(Error::Config(_))));
    }

    #[test]
    fn confusion_counts() {
        // hand-labeled fixture: 10 windows, 7 correct
        let labels = [0, 0, 0, 1, 1, 1, 2, 2, 2, 2];
        let predicted = [0, 0, 1, 1, 1, 0, 2, 2, 2, 1];
        let eval = confusion_from(predicted.into_iter(), &labels, 3);
        assert_eq!(eval.accuracy, 0.7);
        assert_eq!(eval.confusion, vec![vec![2, 1, 0], vec![1, 2, 0], vec![0, 1, 3]]);
        for (row, n) in eval.confusion.iter().zip([3, 3, 4]) {
            assert_eq!(row.iter().sum::<usize>(), n);
        }
    }

    #[test]
    fn persistence_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut model = untrained(3);
        model.config = small(3, 2);
        model.network = model.config.build().unwrap();
        model.classes = vec![4, 9, 11];
        model.stats = NormStats { mean: vec![0.5, -1.0, 2.0, 0.0], std: vec![1.5, 2.0, 1e-8, 0.3] };
        let stem = dir.path().join("cnn");
        model.save(&stem).unwrap();
        assert_eq!(CnnModel::load(&stem).unwrap(), model);
    }

    #[test]
    fn logits_mode_skips_softmax() {
        let mut model = untrained(3);
        model.network = small(3, 2).build().unwrap();
        model.config.feature_mode = FeatureMode::Logits;
        let ws = synth(3, 2, 3);
        let logits = extract_features(&model, &ws).unwrap();
        model.config.feature_mode = FeatureMode::Probabilities;
        let probs = extract_features(&model, &ws).unwrap();
        let soft = crate::nn::softmax(&Tensor::from_vec(logits[0].values.clone())).unwrap();
        for (a, b) in soft.data().iter().zip(&probs[0].values) {
            assert!((a.as_f64() - b.as_f64()).abs() < 1e-6);
        }
    }
}

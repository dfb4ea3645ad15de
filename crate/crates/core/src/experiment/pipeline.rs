use std::collections::BTreeSet;

use super::config::{ExperimentConfig, SourceConfig};
use crate::classifier::{eval_closed, extract_features, train_cnn, ClosedEval, CnnModel, FeatureVector, TrainingHistory};
use crate::data::{
    load_canonical, make_split, perturb_specs, segment_windows, synth_family, synth_generate, synth_recording, LabeledWindow,
    Recording, SplitPlan, SynthConfig, WindowConfig,
};
use crate::error::{Error, Result};
use crate::gate::gate;
use crate::metrics::{compute_report, Decision, MetricsReport, Mode, Outcome};
use crate::nn::derive_seed;
use crate::opengan::{select_and_calibrate, train_gan, GanPair, SelectedDiscriminator, SelectionMode};

/// Windows of one subject.
#[derive(Clone, Debug)]
pub struct SubjectData {
    pub subject: u32,
    pub windows: Vec<LabeledWindow>,
    /// Distinct class ids, ascending.
    pub classes: Vec<u32>,
}

impl SubjectData {
    pub fn new(subject: u32, windows: Vec<LabeledWindow>) -> Self {
        let classes: BTreeSet<u32> = windows.iter().map(|w| w.class_label).collect();
        SubjectData {
            subject,
            windows,
            classes: classes.into_iter().collect(),
        }
    }

    pub fn shape(&self) -> Result<(usize, usize)> {
        let w = self
            .windows
            .first()
            .ok_or_else(|| Error::Data(format!("subject {} has no windows", self.subject)))?;
        Ok((w.channels(), w.samples()))
    }
}

pub fn window_config(config: &ExperimentConfig) -> WindowConfig {
    let w = &config.window;
    WindowConfig {
        window_ms: w.window_ms,
        stride_ms: w.stride_ms.unwrap_or(w.window_ms),
        label_rule: w.label_rule,
    }
}

/// Continuous synthetic recording of `subject`: ten repetitions per class,
/// each preceded by a rest window.
pub fn synth_subject_recording(config: &ExperimentConfig, subject: u32, seed: u64) -> Result<Recording> {
    let SourceConfig::Synth(s) = &config.source else {
        return Err(Error::config("the source is not synthetic"));
    };
    let family = synth_family(s.classes, s.channels, s.sample_rate, s.family_seed);
    let specs = perturb_specs(&family, s.subject_variation, derive_seed(s.family_seed, &[subject as u64]));
    let cfg = SynthConfig {
        windows_per_class: s.windows_per_class,
        channels: s.channels,
        sample_rate: s.sample_rate,
        window_samples: window_config(config).samples_at(s.sample_rate),
        subject_id: subject,
        seed: derive_seed(seed, &[0xDA7A]),
    };
    synth_recording(&specs, 10, s.windows_per_class.div_ceil(10), &cfg)
}

/// Loads (or synthesizes) the windows of `subject`. Synthetic data depends
/// on `seed`; canonical data does not.
pub fn load_subject(config: &ExperimentConfig, subject: u32, seed: u64) -> Result<SubjectData> {
    let wc = window_config(config);
    match &config.source {
        SourceConfig::Synth(s) => {
            let family = synth_family(s.classes, s.channels, s.sample_rate, s.family_seed);
            let specs = perturb_specs(&family, s.subject_variation, derive_seed(s.family_seed, &[subject as u64]));
            let window_samples = wc.samples_at(s.sample_rate);
            if window_samples == 0 {
                return Err(Error::config("window holds no samples at the synthetic rate"));
            }
            let cfg = SynthConfig {
                windows_per_class: s.windows_per_class,
                channels: s.channels,
                sample_rate: s.sample_rate,
                window_samples,
                subject_id: subject,
                seed: derive_seed(seed, &[0xDA7A]),
            };
            Ok(SubjectData::new(subject, synth_generate(&specs, &cfg)?))
        }
        SourceConfig::Canonical { files } => {
            let mut windows = Vec::new();
            let mut found = false;
            for path in files {
                let rec = load_canonical(path)?;
                if rec.subject_id != subject {
                    continue;
                }
                found = true;
                let seg = segment_windows(&rec, &wc)?;
                windows.extend(seg.windows);
            }
            if !found {
                return Err(Error::Config(format!("no recording for subject {subject}")));
            }
            Ok(SubjectData::new(subject, windows))
        }
    }
}

/// Known classes: the configured list, or the lowest `count` class ids.
pub fn known_classes(config: &ExperimentConfig, data: &SubjectData, count: usize) -> Result<Vec<u32>> {
    if !config.known_classes.is_empty() {
        return Ok(config.known_classes.clone());
    }
    if data.classes.len() < count {
        return Err(Error::Config(format!(
            "subject {} has {} classes, {count} known classes requested",
            data.subject,
            data.classes.len()
        )));
    }
    Ok(data.classes[..count].to_vec())
}

/// The first `count` classes not in `known`, ascending.
pub fn unknown_classes(data: &SubjectData, known: &[u32], count: usize) -> Result<Vec<u32>> {
    let rest: Vec<u32> = data.classes.iter().copied().filter(|c| !known.contains(c)).collect();
    if rest.len() < count {
        return Err(Error::Config(format!(
            "{count} unknown classes requested but only {} classes remain besides the {} known",
            rest.len(),
            known.len()
        )));
    }
    Ok(rest[..count].to_vec())
}

pub fn split(config: &ExperimentConfig, data: &SubjectData, known: &[u32], unknown: &[u32], seed: u64) -> Result<SplitPlan> {
    let cfg = config.split.config(config.gan.selection_mode, derive_seed(seed, &[0x5917]));
    make_split(&data.windows, known, unknown, &cfg)
}

/// Indices of `set` whose window class is known or among `unknown`.
pub fn restrict(set: &[usize], windows: &[LabeledWindow], plan: &SplitPlan, unknown: &[u32]) -> Vec<usize> {
    set.iter()
        .copied()
        .filter(|&i| {
            let c = windows[i].class_label;
            plan.known_index(c).is_some() || unknown.contains(&c)
        })
        .collect()
}

/// Closed-set classifier plus its features for every window of the subject.
#[derive(Clone, Debug)]
pub struct ClassifierRun {
    pub model: CnnModel,
    pub history: TrainingHistory,
    pub features: Vec<FeatureVector>,
}

pub fn fit_classifier(config: &ExperimentConfig, data: &SubjectData, plan: &SplitPlan, seed: u64) -> Result<ClassifierRun> {
    let (c, s) = data.shape()?;
    let cnn = config
        .cnn
        .config(c, s, plan.known_classes.len(), derive_seed(seed, &[0xC22]));
    let (model, history) = train_cnn(&data.windows, plan, &cnn)?;
    let features = extract_features(&model, &data.windows)?;
    Ok(ClassifierRun {
        model,
        history,
        features,
    })
}

fn pick(features: &[FeatureVector], idx: &[usize]) -> Vec<FeatureVector> {
    idx.iter().map(|&i| features[i].clone()).collect()
}

/// Adversarial training on the training-set features and calibration on
/// `gan_val` (and `unknown_val` in paper-faithful mode).
pub fn fit_gate(
    config: &ExperimentConfig,
    features: &[FeatureVector],
    plan: &SplitPlan,
    unknown_val: &[usize],
    seed: u64,
) -> Result<(GanPair, SelectedDiscriminator)> {
    let gan = config.gan.config(plan.known_classes.len(), derive_seed(seed, &[0x6A2]));
    let real = pick(features, &plan.cnn_train);
    let val = pick(features, &plan.gan_val);
    let unknown = match gan.selection_mode {
        SelectionMode::FakeOnly => Vec::new(),
        SelectionMode::PaperFaithful => pick(features, unknown_val),
    };
    let pair = train_gan(&real, &val, &unknown, &gan)?;
    let selected = select_and_calibrate(&pair, &val, &unknown)?;
    Ok((pair, selected))
}

/// Metrics of the requested modes. `test_known` indexes the known-class test
/// windows (Close), `eval` the open-set evaluation windows (Open, OpenGAN).
/// ARR is relative to the Close accuracy of the same classifier and data.
pub fn evaluate(
    model: &CnnModel,
    windows: &[LabeledWindow],
    features: &[FeatureVector],
    test_known: &[usize],
    eval: &[usize],
    gate_model: Option<&SelectedDiscriminator>,
    modes: &[Mode],
) -> Result<(ClosedEval, Vec<MetricsReport>)> {
    let known: Vec<LabeledWindow> = test_known.iter().map(|&i| windows[i].clone()).collect();
    let closed = eval_closed(model, &known)?;
    if !(closed.accuracy > 0.0) {
        return Err(Error::Data("closed-set accuracy is zero; ARR is undefined".into()));
    }
    let mut reports = Vec::new();
    for &mode in modes {
        let outcome = |i: usize, decision: Decision, score: Option<f64>| Outcome {
            true_class: windows[i].class_label,
            true_index: model.class_index(windows[i].class_label),
            decision,
            score,
        };
        let outcomes: Vec<Outcome> = match mode {
            Mode::Close => test_known
                .iter()
                .map(|&i| outcome(i, Decision::Accept(features[i].argmax()), None))
                .collect(),
            Mode::Open => eval
                .iter()
                .map(|&i| outcome(i, Decision::Accept(features[i].argmax()), None))
                .collect(),
            Mode::OpenGan => {
                let d = gate_model.ok_or_else(|| Error::config("OpenGAN mode needs a trained discriminator"))?;
                let scores = d.score(&pick(features, eval))?;
                eval.iter()
                    .zip(scores)
                    .map(|(&i, s)| outcome(i, gate(features[i].argmax(), s, d.threshold), Some(s)))
                    .collect()
            }
        };
        reports.push(compute_report(&outcomes, closed.accuracy, mode)?);
    }
    Ok((closed, reports))
}

use log::info;

use super::config::ExperimentConfig;
use super::pipeline::{
    evaluate, fit_classifier, fit_gate, known_classes, load_subject, restrict, split, unknown_classes, ClassifierRun,
    SubjectData,
};
use super::report::{Cell, CellKey, ExperimentReport, SweepKind};
use crate::classifier::{extract_features, FeatureVector};
use crate::data::SplitPlan;
use crate::error::{Error, Result};
use crate::metrics::Mode;
use crate::opengan::SelectedDiscriminator;

/// One subject with its split and trained classifier; the split holds the
/// largest unknown-class set and smaller settings use its prefixes.
pub struct Prepared {
    pub data: SubjectData,
    pub plan: SplitPlan,
    pub unknown: Vec<u32>,
    pub classifier: ClassifierRun,
}

impl Prepared {
    pub fn new(config: &ExperimentConfig, subject: u32, n_known: usize, max_unknown: usize, seed: u64) -> Result<Self> {
        let data = load_subject(config, subject, seed)?;
        Self::from_data(config, data, n_known, max_unknown, seed)
    }

    pub fn from_data(
        config: &ExperimentConfig,
        data: SubjectData,
        n_known: usize,
        max_unknown: usize,
        seed: u64,
    ) -> Result<Self> {
        let known = known_classes(config, &data, n_known)?;
        let unknown = unknown_classes(&data, &known, max_unknown)?;
        let plan = split(config, &data, &known, &unknown, seed)?;
        let classifier = fit_classifier(config, &data, &plan, seed)?;
        info!(
            "subject {} seed {seed}: {} known, classifier best epoch {}",
            data.subject,
            known.len(),
            classifier.history.best_epoch
        );
        Ok(Prepared {
            data,
            plan,
            unknown,
            classifier,
        })
    }

    pub fn n_known(&self) -> usize {
        self.plan.known_classes.len()
    }

    /// Open-set evaluation indices with the first `n` unknown classes.
    pub fn eval(&self, n: usize) -> Vec<usize> {
        restrict(&self.plan.openset_eval, &self.data.windows, &self.plan, &self.unknown[..n])
    }

    /// Held-back unknown windows of the first `n` unknown classes.
    pub fn unknown_val(&self, n: usize) -> Vec<usize> {
        restrict(&self.plan.unknown_val, &self.data.windows, &self.plan, &self.unknown[..n])
    }

    pub fn gate(&self, config: &ExperimentConfig, gate_unknown: usize, seed: u64) -> Result<SelectedDiscriminator> {
        let (_, selected) = fit_gate(config, &self.classifier.features, &self.plan, &self.unknown_val(gate_unknown), seed)?;
        Ok(selected)
    }
}

struct Target<'a> {
    prepared: &'a Prepared,
    features: &'a [FeatureVector],
}

#[allow(clippy::too_many_arguments)]
fn cells_for(
    config: &ExperimentConfig,
    source: &Prepared,
    target: &Target<'_>,
    gate: &SelectedDiscriminator,
    gate_unknown: usize,
    n_unknown: usize,
    seed: u64,
    hash: &str,
) -> Result<Vec<Cell>> {
    let t = target.prepared;
    let (closed, reports) = evaluate(
        &source.classifier.model,
        &t.data.windows,
        target.features,
        &t.plan.cnn_test,
        &t.eval(n_unknown),
        Some(gate),
        &config.modes,
    )?;
    Ok(reports
        .into_iter()
        .map(|metrics| {
            let gated = metrics.mode == Mode::OpenGan;
            Cell {
                key: CellKey {
                    train_subject: source.data.subject,
                    test_subject: t.data.subject,
                    n_known: source.n_known(),
                    gate_unknown,
                    n_unknown,
                    mode: metrics.mode,
                    seed,
                },
                metrics,
                closed_accuracy: closed.accuracy,
                selection_auc: gated.then_some(gate.selection_auc),
                selection_epoch: gated.then_some(gate.epoch),
                threshold: gated.then_some(gate.threshold),
                config_hash: hash.to_string(),
            }
        })
        .collect())
}

fn max_of(counts: &[usize]) -> Result<usize> {
    counts
        .iter()
        .copied()
        .max()
        .ok_or_else(|| Error::config("the unknown-count list is empty"))
}

fn within(config: &ExperimentConfig, p: &Prepared, gate_unknown: usize, eval: &[usize], seed: u64) -> Result<Vec<Cell>> {
    let gate = p.gate(config, gate_unknown, seed)?;
    let target = Target {
        prepared: p,
        features: &p.classifier.features,
    };
    let mut cells = Vec::new();
    for &n in eval {
        cells.extend(cells_for(config, p, &target, &gate, gate_unknown, n, seed, &config.hash())?);
    }
    Ok(cells)
}

/// Single train/evaluate run per subject and seed at `unknown_counts[0]`.
pub fn run_evaluate(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let u = *config
        .unknown_counts
        .first()
        .ok_or_else(|| Error::config("the unknown-count list is empty"))?;
    let mut cells = Vec::new();
    for &seed in &config.seeds {
        for &subject in &config.subjects {
            let p = Prepared::new(config, subject, config.known_count, u, seed)?;
            cells.extend(within(config, &p, u, &[u], seed)?);
        }
    }
    let expected = config.seeds.len() * config.subjects.len() * config.modes.len();
    ExperimentReport::build(SweepKind::Evaluate, config, cells, expected)
}

/// Fixed known classes; one gate per unknown-class count, evaluated at that count.
pub fn run_ratio_sweep(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let max_u = max_of(&config.unknown_counts)?;
    let mut cells = Vec::new();
    for &seed in &config.seeds {
        for &subject in &config.subjects {
            let p = Prepared::new(config, subject, config.known_count, max_u, seed)?;
            for &u in &config.unknown_counts {
                cells.extend(within(config, &p, u, &[u], seed)?);
            }
        }
    }
    let expected = config.seeds.len() * config.subjects.len() * config.unknown_counts.len() * config.modes.len();
    ExperimentReport::build(SweepKind::Ratio, config, cells, expected)
}

/// Known-class counts crossed with unknown-class counts.
pub fn run_known_sweep(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    if config.known_counts.is_empty() {
        return Err(Error::config("the known-count list is empty"));
    }
    if !config.known_classes.is_empty() {
        return Err(Error::config("the known sweep chooses known classes by count; clear known_classes"));
    }
    let max_u = max_of(&config.unknown_counts)?;
    let mut cells = Vec::new();
    for &seed in &config.seeds {
        for &subject in &config.subjects {
            let data = load_subject(config, subject, seed)?;
            for &k in &config.known_counts {
                let p = Prepared::from_data(config, data.clone(), k, max_u, seed)?;
                for &u in &config.unknown_counts {
                    cells.extend(within(config, &p, u, &[u], seed)?);
                }
            }
        }
    }
    let expected = config.seeds.len()
        * config.subjects.len()
        * config.known_counts.len()
        * config.unknown_counts.len()
        * config.modes.len();
    ExperimentReport::build(SweepKind::Known, config, cells, expected)
}

/// Gate calibrated with `r` unknown classes, evaluated with `c` unknown classes,
/// for every pair of configured counts.
pub fn run_cross_matrix(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let max_u = max_of(&config.unknown_counts)?;
    let mut cells = Vec::new();
    for &seed in &config.seeds {
        for &subject in &config.subjects {
            let p = Prepared::new(config, subject, config.known_count, max_u, seed)?;
            for &r in &config.unknown_counts {
                cells.extend(within(config, &p, r, &config.unknown_counts, seed)?);
            }
        }
    }
    let n_u = config.unknown_counts.len();
    let expected = config.seeds.len() * config.subjects.len() * n_u * n_u * config.modes.len();
    ExperimentReport::build(SweepKind::CrossMatrix, config, cells, expected)
}

/// Classifier and gate trained on one subject, evaluated on every subject.
pub fn run_cross_domain(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let max_u = max_of(&config.unknown_counts)?;
    let hash = config.hash();
    let mut cells = Vec::new();
    for &seed in &config.seeds {
        let prepared = config
            .subjects
            .iter()
            .map(|&s| Prepared::new(config, s, config.known_count, max_u, seed))
            .collect::<Result<Vec<_>>>()?;
        for source in &prepared {
            for &u in &config.unknown_counts {
                let gate = source.gate(config, u, seed)?;
                for target in &prepared {
                    if target.plan.known_classes != source.plan.known_classes {
                        return Err(Error::Config(format!(
                            "subjects {} and {} have different known classes",
                            source.data.subject, target.data.subject
                        )));
                    }
                    let foreign;
                    let features = if std::ptr::eq(source, target) {
                        &source.classifier.features
                    } else {
                        foreign = extract_features(&source.classifier.model, &target.data.windows)?;
                        &foreign
                    };
                    let t = Target {
                        prepared: target,
                        features,
                    };
                    cells.extend(cells_for(config, source, &t, &gate, u, u, seed, &hash)?);
                }
            }
        }
    }
    let n_s = config.subjects.len();
    let expected = config.seeds.len() * n_s * n_s * config.unknown_counts.len() * config.modes.len();
    ExperimentReport::build(SweepKind::CrossDomain, config, cells, expected)
}

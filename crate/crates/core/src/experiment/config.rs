use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::classifier::{CnnConfig, FeatureMode};
use crate::data::{LabelRule, SplitConfig, SplitFractions, SplitRule};
use crate::error::{Error, Result};
use crate::gate::HoldPolicy;
use crate::metrics::Mode;
use crate::nn::derive_seed;
use crate::opengan::{default_hidden, GanConfig, GeneratorKind, GeneratorLoss, SelectionMode};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CnnSettings {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub conv_kernels: usize,
    pub fc1_width: usize,
    pub feature_mode: FeatureMode,
}

impl Default for CnnSettings {
    fn default() -> Self {
        CnnSettings {
            epochs: 50,
            batch_size: 32,
            learning_rate: 1e-3,
            conv_kernels: 32,
            fc1_width: 128,
            feature_mode: FeatureMode::Probabilities,
        }
    }
}

impl CnnSettings {
    pub fn config(&self, n_channel: usize, n_sample_points: usize, n_known: usize, seed: u64) -> CnnConfig {
        CnnConfig {
            conv_kernels: self.conv_kernels,
            fc1_width: self.fc1_width,
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            feature_mode: self.feature_mode,
            ..CnnConfig::new(n_channel, n_sample_points, n_known, seed)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GanSettings {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_g: f64,
    pub lr_d: f64,
    /// Noise length; `max(2, ⌊k/2⌋)` when absent.
    pub n_hidden: Option<usize>,
    pub generator: GeneratorKind,
    pub generator_loss: GeneratorLoss,
    pub selection_mode: SelectionMode,
}

impl Default for GanSettings {
    fn default() -> Self {
        GanSettings {
            epochs: 200,
            batch_size: 32,
            lr_g: 2e-4,
            lr_d: 2e-4,
            n_hidden: None,
            generator: GeneratorKind::Dense,
            generator_loss: GeneratorLoss::Saturating,
            selection_mode: SelectionMode::FakeOnly,
        }
    }
}

impl GanSettings {
    pub fn config(&self, n_known: usize, seed: u64) -> GanConfig {
        GanConfig {
            n_hidden: self.n_hidden.unwrap_or_else(|| default_hidden(n_known)),
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr_g: self.lr_g,
            lr_d: self.lr_d,
            generator: self.generator,
            generator_loss: self.generator_loss,
            selection_mode: self.selection_mode,
            ..GanConfig::new(n_known, seed)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSettings {
    pub fractions: SplitFractions,
    /// Repetitions routed to the test set; random partition when empty.
    pub held_out_repetitions: Vec<u32>,
    /// Share of each unknown class held back for paper-faithful selection.
    pub unknown_val_fraction: f64,
}

impl Default for SplitSettings {
    fn default() -> Self {
        SplitSettings {
            fractions: SplitFractions::default(),
            held_out_repetitions: Vec::new(),
            unknown_val_fraction: 0.2,
        }
    }
}

impl SplitSettings {
    pub fn config(&self, selection: SelectionMode, seed: u64) -> SplitConfig {
        SplitConfig {
            fractions: self.fractions,
            rule: if self.held_out_repetitions.is_empty() {
                SplitRule::Random
            } else {
                SplitRule::HeldOutRepetitions(self.held_out_repetitions.clone())
            },
            unknown_val_fraction: match selection {
                SelectionMode::FakeOnly => 0.0,
                SelectionMode::PaperFaithful => self.unknown_val_fraction,
            },
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSettings {
    pub classes: usize,
    pub channels: usize,
    pub sample_rate: f64,
    pub windows_per_class: usize,
    /// Seed of the class family (shared by every subject).
    pub family_seed: u64,
    /// Log-normal envelope perturbation applied per subject.
    pub subject_variation: f64,
}

impl Default for SynthSettings {
    fn default() -> Self {
        SynthSettings {
            classes: 52,
            channels: 10,
            sample_rate: 100.0,
            windows_per_class: 200,
            family_seed: 1,
            subject_variation: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SourceConfig {
    Synth(SynthSettings),
    /// Canonical CSV recordings; one subject per file.
    Canonical {
        files: Vec<PathBuf>,
    },
}

impl Default for SourceConfig {
    fn default() -> Self {
        SourceConfig::Synth(SynthSettings::default())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowSettings {
    pub window_ms: f64,
    /// Defaults to the window length.
    pub stride_ms: Option<f64>,
    pub label_rule: LabelRule,
}

impl Default for WindowSettings {
    fn default() -> Self {
        WindowSettings {
            window_ms: 200.0,
            stride_ms: None,
            label_rule: LabelRule::Uniform,
        }
    }
}

/// One experiment: data, class layout, seeds and model settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub source: SourceConfig,
    pub window: WindowSettings,
    pub subjects: Vec<u32>,
    /// Explicit known classes; otherwise the lowest `known_count` class ids.
    pub known_classes: Vec<u32>,
    pub known_count: usize,
    pub unknown_counts: Vec<usize>,
    /// Known-class counts for the known sweep.
    pub known_counts: Vec<usize>,
    pub seeds: Vec<u64>,
    pub modes: Vec<Mode>,
    pub output: PathBuf,
    /// Effect of a rejected window on the executed action stream.
    pub hold_policy: HoldPolicy,
    pub cnn: CnnSettings,
    pub gan: GanSettings,
    pub split: SplitSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            source: SourceConfig::default(),
            window: WindowSettings::default(),
            subjects: vec![1],
            known_classes: Vec::new(),
            known_count: 10,
            unknown_counts: vec![5, 10, 15, 20, 30, 42],
            known_counts: vec![4, 6, 8, 10, 12, 16, 20],
            seeds: Vec::new(),
            modes: Mode::ALL.to_vec(),
            output: PathBuf::from("out"),
            hold_policy: HoldPolicy::default(),
            cnn: CnnSettings::default(),
            gan: GanSettings::default(),
            split: SplitSettings::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::config("at least one seed is required"));
        }
        if self.modes.is_empty() {
            return Err(Error::config("the mode set is empty"));
        }
        if self.subjects.is_empty() {
            return Err(Error::config("at least one subject is required"));
        }
        if let SourceConfig::Canonical { files } = &self.source {
            if files.is_empty() {
                return Err(Error::config("canonical source lists no files"));
            }
        }
        Ok(())
    }

    /// Canonical JSON of the configuration, for provenance hashes.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("configuration serializes")
    }

    /// Hash of the canonical JSON with `output` cleared, so the same
    /// experiment written elsewhere hashes the same.
    pub fn hash(&self) -> String {
        let located = ExperimentConfig {
            output: PathBuf::new(),
            ..self.clone()
        };
        crate::nn::io::sha256_hex(located.canonical_json().as_bytes())
    }

    /// Seed of a named component of one run.
    pub fn seed_for(seed: u64, labels: &[u64]) -> u64 {
        derive_seed(seed, labels)
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use myogate::classifier::FeatureMode;
use myogate::gate::HoldPolicy;
use myogate::metrics::Mode;
use myogate::opengan::{GeneratorLoss, SelectionMode};

mod commands;

#[derive(Parser)]
#[command(name = "myogate", version, about = "Open-set EMG gesture recognition with an adversarial rejection gate")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Experiment settings. Flags override the matching config-file keys.
#[derive(Args, Clone, Debug, Default)]
pub struct Overrides {
    /// TOML experiment configuration.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Output directory (`output`).
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Subject ids (`subjects`).
    #[arg(long, value_delimiter = ',')]
    pub subjects: Option<Vec<u32>>,
    /// Explicit known class ids (`known_classes`).
    #[arg(long, value_delimiter = ',')]
    pub known_classes: Option<Vec<u32>>,
    /// Number of known classes (`known_count`).
    #[arg(long)]
    pub known_count: Option<usize>,
    /// Unknown-class counts (`unknown_counts`).
    #[arg(long, value_delimiter = ',')]
    pub unknown_counts: Option<Vec<usize>>,
    /// Known-class counts for the known sweep (`known_counts`).
    #[arg(long, value_delimiter = ',')]
    pub known_counts: Option<Vec<usize>>,
    /// Modes to evaluate: Close, Open, OpenGAN (`modes`).
    #[arg(long, value_delimiter = ',')]
    pub modes: Option<Vec<Mode>>,
    /// fake-only or paper-faithful (`gan.selection_mode`).
    #[arg(long)]
    pub selection_mode: Option<SelectionMode>,
    /// saturating or non-saturating (`gan.generator_loss`).
    #[arg(long)]
    pub generator_loss: Option<GeneratorLoss>,
    /// probabilities or logits (`cnn.feature_mode`).
    #[arg(long)]
    pub feature_mode: Option<FeatureMode>,
    /// hold-previous or revert-to-default (`hold_policy`).
    #[arg(long)]
    pub hold_policy: Option<HoldPolicy>,
    /// Classifier epochs (`cnn.epochs`).
    #[arg(long)]
    pub cnn_epochs: Option<usize>,
    /// Adversarial epochs (`gan.epochs`).
    #[arg(long)]
    pub gan_epochs: Option<usize>,
}

#[derive(Args, Clone, Debug)]
pub struct RequiredSeeds {
    /// Run seeds (`seeds`); required.
    #[arg(long, required = true, value_delimiter = ',')]
    pub seed: Vec<u64>,
}

#[derive(Args, Clone, Debug)]
pub struct OptionalSeeds {
    /// Run seeds (`seeds`); the first configured seed when absent.
    #[arg(long, value_delimiter = ',')]
    pub seed: Vec<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic recordings as canonical CSV files.
    Synth {
        #[command(flatten)]
        overrides: Overrides,
        #[command(flatten)]
        seeds: OptionalSeeds,
    },
    /// Materialize the dataset and per-subject split files.
    Prepare {
        #[command(flatten)]
        overrides: Overrides,
        #[command(flatten)]
        seeds: OptionalSeeds,
    },
    /// Train the classifier and the gate on a prepared split.
    Train {
        #[command(flatten)]
        overrides: Overrides,
        #[command(flatten)]
        seeds: RequiredSeeds,
        /// Split file written by `prepare`.
        #[arg(long)]
        split: PathBuf,
    },
    /// Evaluate trained models on a prepared split.
    Evaluate {
        #[command(flatten)]
        overrides: Overrides,
        #[command(flatten)]
        seeds: OptionalSeeds,
        #[arg(long)]
        split: PathBuf,
        /// Directory written by `train`.
        #[arg(long)]
        models: PathBuf,
    },
    /// AER per mode over the unknown-class counts.
    SweepRatio {
        #[command(flatten)]
        overrides: Overrides,
        #[command(flatten)]
        seeds: RequiredSeeds,
    },
    /// Accuracy over known-class counts crossed with unknown-class counts.
    SweepKnown {
        #[command(flatten)]
        overrides: Overrides,
        #[command(flatten)]
        seeds: RequiredSeeds,
    },
    /// Gates calibrated at one unknown count evaluated at every other.
    CrossMatrix {
        #[command(flatten)]
        overrides: Overrides,
        #[command(flatten)]
        seeds: RequiredSeeds,
    },
    /// Train on one subject, evaluate on every subject.
    CrossDomain {
        #[command(flatten)]
        overrides: Overrides,
        #[command(flatten)]
        seeds: RequiredSeeds,
    },
    /// Render CSV tables and SVG plots from report files.
    Report {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        #[arg(long, short, default_value = "report")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth { overrides, seeds } => commands::synth(&overrides, &seeds.seed),
        Command::Prepare { overrides, seeds } => commands::prepare(&overrides, &seeds.seed),
        Command::Train {
            overrides,
            seeds,
            split,
        } => commands::train(&overrides, &seeds.seed, &split),
        Command::Evaluate {
            overrides,
            seeds,
            split,
            models,
        } => commands::evaluate(&overrides, &seeds.seed, &split, &models),
        Command::SweepRatio { overrides, seeds } => commands::sweep(commands::Sweep::Ratio, &overrides, &seeds.seed),
        Command::SweepKnown { overrides, seeds } => commands::sweep(commands::Sweep::Known, &overrides, &seeds.seed),
        Command::CrossMatrix { overrides, seeds } => {
            commands::sweep(commands::Sweep::CrossMatrix, &overrides, &seeds.seed)
        }
        Command::CrossDomain { overrides, seeds } => {
            commands::sweep(commands::Sweep::CrossDomain, &overrides, &seeds.seed)
        }
        Command::Report { reports, out } => commands::report(&reports, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { 2 } else { 1 })
        }
    }
}

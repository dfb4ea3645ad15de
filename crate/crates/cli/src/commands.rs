use std::fs;
use std::path::{Path, PathBuf};

use myogate::classifier::{extract_features, CnnModel};
use myogate::data::SplitPlan;
use myogate::experiment::{
    evaluate as evaluate_modes, fit_classifier, fit_gate, known_classes, load_subject, render_report,
    run_cross_domain, run_cross_matrix, run_known_sweep, run_ratio_sweep, split, synth_subject_recording,
    unknown_classes, Cell, CellKey, ExperimentConfig, ExperimentReport, SourceConfig, SweepKind,
};
use myogate::gate::{run_stream, Action, GatePipeline};
use myogate::metrics::{roc_curve, roc_to_csv, Mode};
use myogate::opengan::SelectedDiscriminator;
use myogate::{Error, Result};

use crate::Overrides;

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|source| Error::File {
        path: path.to_path_buf(),
        source,
    })
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|source| Error::File {
        path: path.to_path_buf(),
        source,
    })
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::File {
        path: path.to_path_buf(),
        source,
    })
}

/// Config file (or defaults) with command-line overrides applied.
pub fn load_config(o: &Overrides, seeds: &[u64]) -> Result<ExperimentConfig> {
    let mut c: ExperimentConfig = match &o.config {
        Some(path) => {
            toml::from_str(&read(path)?).map_err(|e| Error::Config(format!("{}: {}", path.display(), e.message())))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(v) = &o.out {
        c.output = v.clone();
    }
    if let Some(v) = &o.subjects {
        c.subjects = v.clone();
    }
    if let Some(v) = &o.known_classes {
        c.known_classes = v.clone();
    }
    if let Some(v) = o.known_count {
        c.known_count = v;
    }
    if let Some(v) = &o.unknown_counts {
        c.unknown_counts = v.clone();
    }
    if let Some(v) = &o.known_counts {
        c.known_counts = v.clone();
    }
    if let Some(v) = &o.modes {
        c.modes = v.clone();
    }
    if let Some(v) = o.selection_mode {
        c.gan.selection_mode = v;
    }
    if let Some(v) = o.generator_loss {
        c.gan.generator_loss = v;
    }
    if let Some(v) = o.feature_mode {
        c.cnn.feature_mode = v;
    }
    if let Some(v) = o.hold_policy {
        c.hold_policy = v;
    }
    if let Some(v) = o.cnn_epochs {
        c.cnn.epochs = v;
    }
    if let Some(v) = o.gan_epochs {
        c.gan.epochs = v;
    }
    if !seeds.is_empty() {
        c.seeds = seeds.to_vec();
    }
    c.validate()?;
    Ok(c)
}

fn first_seed(c: &ExperimentConfig) -> u64 {
    c.seeds[0]
}

pub fn synth(o: &Overrides, seeds: &[u64]) -> Result<()> {
    let c = load_config(o, seeds)?;
    create_dir(&c.output)?;
    for &subject in &c.subjects {
        let rec = synth_subject_recording(&c, subject, first_seed(&c))?;
        let path = c.output.join(format!("subject_{subject}.csv"));
        rec.save_canonical(&path)?;
        println!("{}", path.display());
    }
    Ok(())
}

fn split_path(dir: &Path, subject: u32) -> PathBuf {
    dir.join(format!("split.s{subject}.txt"))
}

/// Writes the canonical dataset (synthesized when the source is synthetic),
/// one split per subject, and `prepared.toml` pointing at the dataset.
pub fn prepare(o: &Overrides, seeds: &[u64]) -> Result<()> {
    let mut c = load_config(o, seeds)?;
    let seed = first_seed(&c);
    create_dir(&c.output)?;
    if let SourceConfig::Synth(_) = &c.source {
        let mut files = Vec::new();
        for &subject in &c.subjects {
            let path = c.output.join(format!("subject_{subject}.csv"));
            synth_subject_recording(&c, subject, seed)?.save_canonical(&path)?;
            files.push(path);
        }
        c.source = SourceConfig::Canonical { files };
    }
    let n_unknown = *c
        .unknown_counts
        .first()
        .ok_or_else(|| Error::Config("the unknown-count list is empty".into()))?;
    for &subject in &c.subjects {
        let data = load_subject(&c, subject, seed)?;
        let known = known_classes(&c, &data, c.known_count)?;
        let unknown = unknown_classes(&data, &known, n_unknown)?;
        let mut plan = split(&c, &data, &known, &unknown, seed)?;
        plan.meta.insert("subject".into(), subject.to_string());
        plan.meta.insert("seed".into(), seed.to_string());
        plan.meta.insert("windows".into(), data.windows.len().to_string());
        plan.meta.insert("window_ms".into(), c.window.window_ms.to_string());
        let path = split_path(&c.output, subject);
        write(&path, &plan.to_text())?;
        println!("{}", path.display());
    }
    let toml = toml::to_string(&c).map_err(|e| Error::Config(format!("cannot serialize configuration: {e}")))?;
    write(&c.output.join("prepared.toml"), &toml)?;
    Ok(())
}

struct Loaded {
    data: myogate::experiment::SubjectData,
    plan: SplitPlan,
}

fn load_split(c: &ExperimentConfig, path: &Path) -> Result<Loaded> {
    let plan = SplitPlan::from_text(&read(path)?)?;
    let subject = match plan.meta.get("subject") {
        Some(s) => s
            .parse()
            .map_err(|_| Error::Config(format!("{}: bad subject `{s}`", path.display())))?,
        None => c.subjects[0],
    };
    let seed = match plan.meta.get("seed") {
        Some(s) => s
            .parse()
            .map_err(|_| Error::Config(format!("{}: bad seed `{s}`", path.display())))?,
        None => first_seed(c),
    };
    let data = load_subject(c, subject, seed)?;
    plan.validate(&data.windows)?;
    Ok(Loaded { data, plan })
}

pub fn train(o: &Overrides, seeds: &[u64], split: &Path) -> Result<()> {
    let c = load_config(o, seeds)?;
    let seed = first_seed(&c);
    let Loaded { data, plan } = load_split(&c, split)?;
    create_dir(&c.output)?;
    let run = fit_classifier(&c, &data, &plan, seed)?;
    run.model.save(&c.output.join("cnn"))?;
    write(&c.output.join("cnn.history.csv"), &run.history.to_csv())?;
    let (pair, selected) = fit_gate(&c, &run.features, &plan, &plan.unknown_val, seed)?;
    pair.save(&c.output.join("gan"))?;
    selected.save(&c.output.join("gate"))?;
    write(&c.output.join("gate.roc.csv"), &roc_to_csv(&selected.roc))?;
    println!(
        "classifier best epoch {} (val accuracy {:.4}); gate epoch {} (selection AUC {:.4}, threshold {:.6})",
        run.history.best_epoch,
        run.history.epochs[run.history.best_epoch - 1].val_accuracy,
        selected.epoch,
        selected.selection_auc,
        selected.threshold
    );
    Ok(())
}

pub fn evaluate(o: &Overrides, seeds: &[u64], split: &Path, models: &Path) -> Result<()> {
    let mut seeds = seeds.to_vec();
    if seeds.is_empty() {
        let plan = SplitPlan::from_text(&read(split)?)?;
        seeds.extend(plan.meta.get("seed").and_then(|s| s.parse::<u64>().ok()));
    }
    let c = load_config(o, &seeds)?;
    let Loaded { data, plan } = load_split(&c, split)?;
    let seed = first_seed(&c);
    let cnn = CnnModel::load(&models.join("cnn"))?;
    let gate = SelectedDiscriminator::load(&models.join("gate"))?;
    let pipeline = GatePipeline::new(cnn, gate)?;
    let features = extract_features(&pipeline.cnn, &data.windows)?;
    let (closed, reports) = evaluate_modes(
        &pipeline.cnn,
        &data.windows,
        &features,
        &plan.cnn_test,
        &plan.openset_eval,
        Some(&pipeline.discriminator),
        &c.modes,
    )?;
    let d = &pipeline.discriminator;
    let hash = c.hash();
    let cells: Vec<Cell> = reports
        .into_iter()
        .map(|metrics| {
            let gated = metrics.mode == Mode::OpenGan;
            Cell {
                key: CellKey {
                    train_subject: data.subject,
                    test_subject: data.subject,
                    n_known: plan.known_classes.len(),
                    gate_unknown: if plan.unknown_val.is_empty() { 0 } else { plan.unknown_classes.len() },
                    n_unknown: plan.unknown_classes.len(),
                    mode: metrics.mode,
                    seed,
                },
                metrics,
                closed_accuracy: closed.accuracy,
                selection_auc: gated.then_some(d.selection_auc),
                selection_epoch: gated.then_some(d.epoch),
                threshold: gated.then_some(d.threshold),
                config_hash: hash.clone(),
            }
        })
        .collect();
    let n = cells.len();
    let report = ExperimentReport::build(SweepKind::Evaluate, &c, cells, n)?;
    create_dir(&c.output)?;
    write(&c.output.join("evaluate.json"), &report.to_json())?;
    for a in render_report(&report, "evaluate")? {
        write(&c.output.join(&a.name), &a.contents)?;
    }
    let stream: Vec<_> = plan.openset_eval.iter().map(|&i| data.windows[i].clone()).collect();
    let (state, outcomes) = run_stream(&pipeline, &stream, Action::Default, c.hold_policy)?;
    write(&c.output.join("decision_log.csv"), &state.decision_log_csv())?;
    let scored: Vec<(f64, bool)> = outcomes
        .iter()
        .map(|o| (o.score.expect("gated outcomes carry scores"), o.is_known()))
        .collect();
    if let Ok(roc) = roc_curve(&scored) {
        write(&c.output.join("evaluate.roc.csv"), &roc_to_csv(&roc))?;
    }
    print!("{}", report.cells_csv());
    Ok(())
}

#[derive(Clone, Copy)]
pub enum Sweep {
    Ratio,
    Known,
    CrossMatrix,
    CrossDomain,
}

pub fn sweep(kind: Sweep, o: &Overrides, seeds: &[u64]) -> Result<()> {
    let c = load_config(o, seeds)?;
    let report = match kind {
        Sweep::Ratio => run_ratio_sweep(&c)?,
        Sweep::Known => run_known_sweep(&c)?,
        Sweep::CrossMatrix => run_cross_matrix(&c)?,
        Sweep::CrossDomain => run_cross_domain(&c)?,
    };
    create_dir(&c.output)?;
    let stem = report.kind.to_string();
    write(&c.output.join(format!("{stem}.json")), &report.to_json())?;
    for a in render_report(&report, &stem)? {
        write(&c.output.join(&a.name), &a.contents)?;
    }
    print!("{}", report.aggregates_csv());
    println!("report sha256 {}", report.hash());
    Ok(())
}

pub fn report(files: &[PathBuf], out: &Path) -> Result<()> {
    create_dir(out)?;
    for path in files {
        let report = ExperimentReport::from_json(&read(path)?)?;
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("report")
            .to_string();
        for a in render_report(&report, &stem)? {
            let target = out.join(&a.name);
            write(&target, &a.contents)?;
            println!("{}", target.display());
        }
    }
    Ok(())
}

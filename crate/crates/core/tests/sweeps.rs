use std::collections::BTreeMap;
use std::path::Path;

use myogate::experiment::{
    render_report, run_cross_domain, run_cross_matrix, run_evaluate, run_known_sweep, run_ratio_sweep, Cell, CellKey,
    ExperimentConfig, ExperimentReport, SourceConfig, SweepKind, SynthSettings,
};
use myogate::metrics::{Counts, MetricsReport, Mode};

fn small() -> ExperimentConfig {
    let mut c = ExperimentConfig {
        source: SourceConfig::Synth(SynthSettings {
            classes: 8,
            channels: 4,
            windows_per_class: 40,
            ..Default::default()
        }),
        known_count: 4,
        unknown_counts: vec![2],
        seeds: vec![5],
        ..Default::default()
    };
    c.cnn.epochs = 4;
    c.gan.epochs = 3;
    c
}

#[test]
fn single_run_is_one_row_of_modes() {
    let r = run_evaluate(&small()).unwrap();
    assert_eq!(r.kind, SweepKind::Evaluate);
    assert_eq!(r.cells.len(), 3);
    let modes: Vec<Mode> = r.aggregates.iter().map(|a| a.key.mode).collect();
    assert_eq!(modes, [Mode::Close, Mode::Open, Mode::OpenGan]);
    assert!(r.aggregates.iter().all(|a| a.n == 1 && a.aer.std.is_none()));
    let gated = r.cells.iter().find(|c| c.key.mode == Mode::OpenGan).unwrap();
    assert!(gated.threshold.is_some() && gated.selection_epoch.is_some());
    let open = r.cells.iter().find(|c| c.key.mode == Mode::Open).unwrap();
    assert!(open.threshold.is_none());
    let back = ExperimentReport::from_json(&r.to_json()).unwrap();
    assert_eq!(back, r);
    assert_eq!(back.hash(), r.hash());
}

#[test]
fn open_error_grows_with_unknown_classes() {
    let c = ExperimentConfig {
        unknown_counts: vec![0, 1, 2, 4],
        modes: vec![Mode::Open],
        seeds: vec![1, 2],
        ..small()
    };
    let r = run_ratio_sweep(&c).unwrap();
    assert_eq!(r.cells.len(), 8);
    let aer: Vec<f64> = r.aggregates.iter().map(|a| a.aer.mean).collect();
    assert_eq!(r.aggregates.iter().map(|a| a.key.n_unknown).collect::<Vec<_>>(), [0, 1, 2, 4]);
    assert!(aer.windows(2).all(|w| w[0] < w[1]), "{aer:?}");
    assert!(r.aggregates.iter().all(|a| a.n == 2 && a.aer.std.is_some()));
}

#[test]
fn known_sweep_covers_the_grid() {
    let c = ExperimentConfig {
        known_counts: vec![2, 4],
        unknown_counts: vec![1, 2],
        modes: vec![Mode::Close, Mode::Open],
        ..small()
    };
    let r = run_known_sweep(&c).unwrap();
    assert_eq!(r.cells.len(), 2 * 2 * 2);
    for k in [2, 4] {
        let open: BTreeMap<usize, f64> = r
            .aggregates_for(Mode::Open)
            .filter(|a| a.key.n_known == k)
            .map(|a| (a.key.n_unknown, a.aer.mean))
            .collect();
        assert!(open[&1] < open[&2], "{open:?}");
    }
    let names: Vec<String> = render_report(&r, "known").unwrap().into_iter().map(|a| a.name).collect();
    assert!(names.contains(&"known.acc.Open.svg".to_string()), "{names:?}");

    let pinned = ExperimentConfig {
        known_classes: vec![1, 2],
        ..c
    };
    assert!(run_known_sweep(&pinned).unwrap_err().is_usage());
}

#[test]
fn cross_matrix_marks_one_row_per_column() {
    let c = ExperimentConfig {
        unknown_counts: vec![1, 3],
        modes: vec![Mode::OpenGan],
        ..small()
    };
    let r = run_cross_matrix(&c).unwrap();
    assert_eq!(r.cells.len(), 4);
    let pairs: Vec<(usize, usize)> = r.cells.iter().map(|c| (c.key.gate_unknown, c.key.n_unknown)).collect();
    assert_eq!(pairs, [(1, 1), (1, 3), (3, 1), (3, 3)]);
    assert_eq!(r.column_best.iter().map(|b| b.n_unknown).collect::<Vec<_>>(), [1, 3]);
    for b in &r.column_best {
        let best = r
            .aggregates
            .iter()
            .filter(|a| a.key.n_unknown == b.n_unknown)
            .map(|a| a.aer.mean)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(b.aer_mean, best);
        assert_eq!(b.on_diagonal, b.gate_unknown == b.n_unknown);
    }
}

#[test]
fn foreign_subjects_are_harder() {
    let mut c = ExperimentConfig {
        subjects: vec![1, 2],
        modes: vec![Mode::Close, Mode::OpenGan],
        ..small()
    };
    if let SourceConfig::Synth(s) = &mut c.source {
        s.subject_variation = 1.0;
    }
    c.cnn.epochs = 8;
    let r = run_cross_domain(&c).unwrap();
    assert_eq!(r.cells.len(), 2 * 2 * 2);
    assert!(r.aggregates.iter().all(|a| a.key.train_subject.is_some()));
    let close = |own: bool| -> f64 {
        let v: Vec<f64> = r
            .cells
            .iter()
            .filter(|c| c.key.mode == Mode::Close && (c.key.train_subject == c.key.test_subject) == own)
            .map(|c| c.metrics.aer)
            .collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    assert!(close(false) > close(true), "cross {} within {}", close(false), close(true));
}

#[test]
fn configuration_errors() {
    let missing = ExperimentConfig {
        subjects: vec![1, 2],
        source: SourceConfig::Canonical {
            files: vec![Path::new("no/such/file.csv").to_path_buf()],
        },
        ..small()
    };
    assert!(run_evaluate(&missing).unwrap_err().is_usage());

    let greedy = ExperimentConfig {
        known_count: 6,
        unknown_counts: vec![3],
        ..small()
    };
    assert!(run_ratio_sweep(&greedy).unwrap_err().is_usage());

    let no_modes = ExperimentConfig {
        modes: vec![],
        ..small()
    };
    assert!(run_evaluate(&no_modes).unwrap_err().is_usage());

    let no_counts = ExperimentConfig {
        unknown_counts: vec![],
        ..small()
    };
    assert!(run_cross_matrix(&no_counts).unwrap_err().is_usage());
}

fn fixture_cell(seed: u64, n_unknown: usize, mode: Mode, aer: f64) -> Cell {
    let gated = mode == Mode::OpenGan;
    Cell {
        key: CellKey {
            train_subject: 1,
            test_subject: 1,
            n_known: 10,
            gate_unknown: n_unknown,
            n_unknown,
            mode,
            seed,
        },
        metrics: MetricsReport {
            mode,
            aer,
            acc: 1.0 - aer,
            arr: if gated { 0.9 } else { 1.0 },
            f1: 0.8,
            auc: gated.then_some(0.85),
            counts: Counts::default(),
        },
        closed_accuracy: 0.97,
        selection_auc: gated.then_some(0.9),
        selection_epoch: gated.then_some(4),
        threshold: gated.then_some(0.5),
        config_hash: "fixture".into(),
    }
}

fn fixture_report() -> ExperimentReport {
    let config = ExperimentConfig {
        seeds: vec![1, 2],
        unknown_counts: vec![5, 10],
        ..Default::default()
    };
    let mut cells = Vec::new();
    for seed in [1, 2] {
        for (u, base) in [(5, 0.25), (10, 0.5)] {
            let jitter = seed as f64 * 0.0625;
            cells.push(fixture_cell(seed, u, Mode::Close, 0.03125));
            cells.push(fixture_cell(seed, u, Mode::Open, base + jitter));
            cells.push(fixture_cell(seed, u, Mode::OpenGan, base / 2.0 + jitter));
        }
    }
    ExperimentReport::build(SweepKind::Ratio, &config, cells, 12).unwrap()
}

#[test]
fn rendered_plot_matches_golden_file() {
    let artifacts = render_report(&fixture_report(), "ratio").unwrap();
    let svg = artifacts.iter().find(|a| a.name == "ratio.aer.svg").unwrap();
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/ratio.aer.svg");
    if std::env::var_os("MYOGATE_BLESS").is_some() {
        std::fs::create_dir_all(golden.parent().unwrap()).unwrap();
        std::fs::write(&golden, &svg.contents).unwrap();
    }
    let expected = std::fs::read_to_string(&golden).expect("golden file; regenerate with MYOGATE_BLESS=1");
    assert_eq!(svg.contents, expected);
    let table = artifacts.iter().find(|a| a.name == "ratio.aer.csv").unwrap();
    assert_eq!(
        table.contents,
        "n_unknown\\mode,Close,Open,OpenGAN\n5,0.03125,0.34375,0.21875\n10,0.03125,0.59375,0.34375\n"
    );
}

#[test]
fn empty_grids_do_not_render() {
    let mut r = fixture_report();
    r.cells.clear();
    r.aggregates.clear();
    assert!(render_report(&r, "ratio").is_err());
    assert!(ExperimentReport::build(SweepKind::Ratio, &r.config, vec![], 0).is_err());
}

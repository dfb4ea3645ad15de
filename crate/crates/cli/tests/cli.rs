use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL: &str = r#"
known_count = 4
unknown_counts = [2]
known_counts = [2, 4]
seeds = [3]

[source]
kind = "synth"
classes = 8
channels = 4
windows_per_class = 40

[cnn]
epochs = 2

[gan]
epochs = 3
"#;

fn myogate(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_myogate"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn workspace() -> TempDir {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("small.toml"), SMALL).unwrap();
    dir
}

fn prepared() -> TempDir {
    let dir = workspace();
    let out = myogate(dir.path(), &["prepare", "-c", "small.toml", "-o", "prep"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    dir
}

#[test]
fn help_and_version() {
    let dir = workspace();
    assert_eq!(code(&myogate(dir.path(), &["--help"])), 0);
    assert_eq!(code(&myogate(dir.path(), &["--version"])), 0);
    assert_eq!(code(&myogate(dir.path(), &["train", "--help"])), 0);
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = workspace();
    let d = dir.path();
    fs::write(d.join("empty_modes.toml"), format!("modes = []\n{SMALL}")).unwrap();
    fs::write(d.join("typo.toml"), format!("known_cuont = 3\n{SMALL}")).unwrap();
    fs::write(d.join("no_seeds.toml"), SMALL.replace("seeds = [3]", "seeds = []")).unwrap();
    let cases: [&[&str]; 8] = [
        &["prepare", "-c", "missing.toml"],
        &["prepare", "-c", "empty_modes.toml"],
        &["prepare", "-c", "typo.toml"],
        &["prepare", "-c", "no_seeds.toml"],
        &["train", "-c", "small.toml", "--seed", "1", "--split", "missing.txt"],
        &["train", "-c", "small.toml", "--split", "missing.txt"],
        &["sweep-ratio", "-c", "small.toml", "--seed", "1", "--modes", "Sideways"],
        &["frobnicate"],
    ];
    for args in cases {
        let out = myogate(d, args);
        assert_eq!(code(&out), 2, "{args:?}: {}", stderr(&out));
        assert!(!out.stderr.is_empty(), "{args:?}");
    }
}

#[test]
fn invalid_data_is_a_usage_error() {
    let dir = workspace();
    let d = dir.path();
    let out = myogate(d, &["prepare", "-c", "small.toml", "-o", "prep", "--known-count", "7"]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    let out = myogate(d, &["prepare", "-c", "small.toml", "-o", "prep", "--subjects", "1", "--known-classes", "1,2,99"]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
}

#[test]
fn prepare_train_evaluate() {
    let dir = prepared();
    let d = dir.path();
    for f in ["prep/subject_1.csv", "prep/split.s1.txt", "prep/prepared.toml"] {
        assert!(d.join(f).is_file(), "{f}");
    }
    let train = ["train", "-c", "prep/prepared.toml", "--seed", "3", "--split", "prep/split.s1.txt"];
    let out = myogate(d, &[&train[..], &["-o", "m1"]].concat());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let out = myogate(d, &[&train[..], &["-o", "m2"]].concat());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for f in ["cnn.weights", "cnn.manifest", "gan.weights", "gate.weights", "gate.manifest", "cnn.history.csv"] {
        let a = fs::read(d.join("m1").join(f)).unwrap();
        let b = fs::read(d.join("m2").join(f)).unwrap();
        assert!(a == b, "{f} differs between identical runs");
    }

    let out = myogate(
        d,
        &["evaluate", "-c", "prep/prepared.toml", "--split", "prep/split.s1.txt", "--models", "m1", "-o", "eval"],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let csv = String::from_utf8(out.stdout).unwrap();
    assert!(csv.starts_with("# myogate-report/1 kind=evaluate"), "{csv}");
    for f in ["evaluate.json", "evaluate.cells.csv", "evaluate.aer.svg", "decision_log.csv"] {
        assert!(d.join("eval").join(f).is_file(), "{f}");
    }
    let log = fs::read_to_string(d.join("eval/decision_log.csv")).unwrap();
    assert!(log.lines().count() > 1);

    let out = myogate(d, &["evaluate", "-c", "prep/prepared.toml", "--split", "prep/split.s1.txt", "--models", "nowhere"]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
}

#[test]
fn sweep_is_reproducible_and_rerenderable() {
    let dir = workspace();
    let d = dir.path();
    let run = || {
        let out = myogate(d, &["sweep-ratio", "-c", "small.toml", "--seed", "3,4", "-o", "a"]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        (String::from_utf8(out.stdout).unwrap(), fs::read(d.join("a/ratio.json")).unwrap())
    };
    let first = run();
    assert_eq!(first, run());
    assert!(first.0.contains("report sha256 "));
    let elsewhere = myogate(d, &["sweep-ratio", "-c", "small.toml", "--seed", "3,4", "-o", "b"]);
    let header = |s: &[u8]| String::from_utf8_lossy(s).lines().next().unwrap_or_default().to_string();
    assert_eq!(header(&elsewhere.stdout), header(first.0.as_bytes()));

    let out = myogate(d, &["report", "a/ratio.json", "-o", "rendered"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for f in ["ratio.aer.svg", "ratio.aer.csv", "ratio.aggregates.csv"] {
        assert_eq!(fs::read(d.join("a").join(f)).unwrap(), fs::read(d.join("rendered").join(f)).unwrap(), "{f}");
    }
    fs::write(d.join("broken.json"), "{\"schema\": \"other\"}").unwrap();
    assert_eq!(code(&myogate(d, &["report", "broken.json"])), 2);
}

//! Known/unknown partitioning and the train/validation/test destinations of
//! known-class windows.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::LabeledWindow;
use crate::error::{Error, Result};
use crate::nn::seeded_rng;

pub const SPLIT_FORMAT: &str = "myogate-split/1";

/// Shares of known-class windows sent to each destination.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub cnn_train: f64,
    pub cnn_val: f64,
    pub cnn_test: f64,
    pub gan_val: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions {
            cnn_train: 0.6,
            cnn_val: 0.15,
            cnn_test: 0.15,
            gan_val: 0.1,
        }
    }
}

impl SplitFractions {
    fn as_array(&self) -> [f64; 4] {
        [self.cnn_train, self.cnn_val, self.cnn_test, self.gan_val]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SplitRule {
    /// Seeded shuffle within each class, apportioned by the fractions.
    Random,
    /// Windows from these repetitions form `cnn_test`; the remaining windows
    /// are apportioned among train/val/gan-val by their fractions.
    HeldOutRepetitions(Vec<u32>),
}

impl SplitRule {
    /// Repetitions 2, 5 and 7 are the evaluation groups of the public
    /// 10-repetition protocol.
    pub fn db1() -> Self {
        SplitRule::HeldOutRepetitions(vec![2, 5, 7])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplitConfig {
    pub fractions: SplitFractions,
    pub rule: SplitRule,
    /// Share of every unknown class held back for discriminator selection
    /// (only used when selecting against real unknowns). Zero keeps every
    /// unknown window in `openset_eval`.
    pub unknown_val_fraction: f64,
    pub seed: u64,
}

impl SplitConfig {
    pub fn new(seed: u64) -> Self {
        SplitConfig {
            fractions: SplitFractions::default(),
            rule: SplitRule::Random,
            unknown_val_fraction: 0.0,
            seed,
        }
    }
}

/// Index sets into a window list.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SplitPlan {
    pub known_classes: Vec<u32>,
    pub unknown_classes: Vec<u32>,
    pub cnn_train: Vec<usize>,
    pub cnn_val: Vec<usize>,
    pub cnn_test: Vec<usize>,
    pub gan_val: Vec<usize>,
    /// Unknown-class windows reserved for selection; empty by default.
    pub unknown_val: Vec<usize>,
    /// `cnn_test` plus every unknown-class window not in `unknown_val`.
    pub openset_eval: Vec<usize>,
    /// Free-form provenance (source files, window settings, ...).
    pub meta: BTreeMap<String, String>,
}

/// Largest-remainder apportionment of `total` items by `shares`.
fn apportion(total: usize, shares: &[f64]) -> Vec<usize> {
    let sum: f64 = shares.iter().sum();
    let exact: Vec<f64> = shares.iter().map(|s| s / sum * total as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| (e + 1e-9).floor() as usize).collect();
    let mut left = total.saturating_sub(counts.iter().sum());
    let mut order: Vec<usize> = (0..shares.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - counts[a] as f64;
        let rb = exact[b] - counts[b] as f64;
        rb.partial_cmp(&ra).expect("finite").then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        if shares[i] > 0.0 {
            counts[i] += 1;
            left -= 1;
        }
    }
    counts
}

/// Per-class shuffled lists interleaved round-robin, so any prefix is
/// approximately stratified.
fn interleave(mut by_class: Vec<Vec<usize>>) -> Vec<usize> {
    let mut out = Vec::new();
    let longest = by_class.iter().map(Vec::len).max().unwrap_or(0);
    for v in &mut by_class {
        v.reverse();
    }
    for _ in 0..longest {
        for v in &mut by_class {
            if let Some(i) = v.pop() {
                out.push(i);
            }
        }
    }
    out
}

pub fn make_split(
    windows: &[LabeledWindow],
    known_classes: &[u32],
    unknown_classes: &[u32],
    config: &SplitConfig,
) -> Result<SplitPlan> {
    let known: BTreeSet<u32> = known_classes.iter().copied().collect();
    let unknown: BTreeSet<u32> = unknown_classes.iter().copied().collect();
    if known.len() != known_classes.len() || unknown.len() != unknown_classes.len() {
        return Err(Error::config("class lists contain duplicates"));
    }
    if let Some(c) = known.intersection(&unknown).next() {
        return Err(Error::config(format!("class {c} is listed as both known and unknown")));
    }
    if known.is_empty() {
        return Err(Error::config("no known classes requested"));
    }
    let fr = config.fractions.as_array();
    if fr.iter().any(|f| *f < 0.0) || (fr.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::config(format!("split fractions {fr:?} must be non-negative and sum to 1")));
    }
    if !(0.0..1.0).contains(&config.unknown_val_fraction) {
        return Err(Error::config("unknown_val_fraction must lie in [0, 1)"));
    }
    let present: BTreeSet<u32> = windows.iter().map(|w| w.class_label).collect();
    let missing: Vec<String> = known
        .iter()
        .chain(&unknown)
        .filter(|c| !present.contains(c))
        .map(u32::to_string)
        .collect();
    if !missing.is_empty() {
        return Err(Error::config(format!("classes absent from the data: {}", missing.join(", "))));
    }

    let mut rng = seeded_rng(config.seed, 0x5EED);
    let mut group = |classes: &[u32], filter: &dyn Fn(&LabeledWindow) -> bool| -> Vec<Vec<usize>> {
        classes
            .iter()
            .map(|&c| {
                let mut idx: Vec<usize> = windows
                    .iter()
                    .enumerate()
                    .filter(|(_, w)| w.class_label == c && filter(w))
                    .map(|(i, _)| i)
                    .collect();
                idx.shuffle(&mut rng);
                idx
            })
            .collect()
    };

    let mut plan = SplitPlan {
        known_classes: known_classes.to_vec(),
        unknown_classes: unknown_classes.to_vec(),
        ..SplitPlan::default()
    };
    match &config.rule {
        SplitRule::Random => {
            let pool = interleave(group(known_classes, &|_| true));
            let counts = apportion(pool.len(), &fr);
            let mut it = pool.into_iter();
            plan.cnn_train = it.by_ref().take(counts[0]).collect();
            plan.cnn_val = it.by_ref().take(counts[1]).collect();
            plan.cnn_test = it.by_ref().take(counts[2]).collect();
            plan.gan_val = it.collect();
        }
        SplitRule::HeldOutRepetitions(reps) => {
            let held = |w: &LabeledWindow| reps.contains(&w.repetition);
            plan.cnn_test = group(known_classes, &held).concat();
            let pool = interleave(group(known_classes, &|w| !held(w)));
            let counts = apportion(pool.len(), &[fr[0], fr[1], fr[3]]);
            let mut it = pool.into_iter();
            plan.cnn_train = it.by_ref().take(counts[0]).collect();
            plan.cnn_val = it.by_ref().take(counts[1]).collect();
            plan.gan_val = it.collect();
        }
    }
    let mut openset = plan.cnn_test.clone();
    for idx in group(unknown_classes, &|_| true) {
        let n_val = (idx.len() as f64 * config.unknown_val_fraction).round() as usize;
        plan.unknown_val.extend_from_slice(&idx[..n_val]);
        openset.extend_from_slice(&idx[n_val..]);
    }
    plan.openset_eval = openset;
    for set in [
        &mut plan.cnn_train,
        &mut plan.cnn_val,
        &mut plan.cnn_test,
        &mut plan.gan_val,
        &mut plan.unknown_val,
        &mut plan.openset_eval,
    ] {
        set.sort_unstable();
    }
    Ok(plan)
}

fn join(v: &[impl ToString]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

impl SplitPlan {
    /// Position of `class` among the known classes.
    pub fn known_index(&self, class: u32) -> Option<usize> {
        self.known_classes.iter().position(|&c| c == class)
    }

    pub fn is_unknown(&self, class: u32) -> bool {
        self.unknown_classes.contains(&class)
    }

    pub fn select<'w>(set: &[usize], windows: &'w [LabeledWindow]) -> Vec<&'w LabeledWindow> {
        set.iter().map(|&i| &windows[i]).collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "format = {SPLIT_FORMAT}");
        for (k, v) in &self.meta {
            let _ = writeln!(s, "meta.{k} = {v}");
        }
        let _ = writeln!(s, "known = {}", join(&self.known_classes));
        let _ = writeln!(s, "unknown = {}", join(&self.unknown_classes));
        for (name, set) in self.sets() {
            let _ = writeln!(s, "{name} = {}", join(set));
        }
        s
    }

    fn sets(&self) -> [(&'static str, &Vec<usize>); 6] {
        [
            ("cnn_train", &self.cnn_train),
            ("cnn_val", &self.cnn_val),
            ("cnn_test", &self.cnn_test),
            ("gan_val", &self.gan_val),
            ("unknown_val", &self.unknown_val),
            ("openset_eval", &self.openset_eval),
        ]
    }

    pub fn from_text(text: &str) -> Result<Self> {
        fn list<T: std::str::FromStr>(v: &str, line: usize) -> Result<Vec<T>> {
            if v.is_empty() {
                return Ok(Vec::new());
            }
            v.split(',')
                .map(|x| {
                    x.trim().parse().map_err(|_| Error::Parse {
                        line,
                        message: format!("`{x}` is not an integer"),
                    })
                })
                .collect()
        }
        let mut plan = SplitPlan::default();
        let mut format = None;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: n + 1,
                message: format!("expected `key = value`, found `{line}`"),
            })?;
            let (k, v) = (k.trim(), v.trim());
            match k {
                "format" => format = Some(v.to_string()),
                "known" => plan.known_classes = list(v, n + 1)?,
                "unknown" => plan.unknown_classes = list(v, n + 1)?,
                "cnn_train" => plan.cnn_train = list(v, n + 1)?,
                "cnn_val" => plan.cnn_val = list(v, n + 1)?,
                "cnn_test" => plan.cnn_test = list(v, n + 1)?,
                "gan_val" => plan.gan_val = list(v, n + 1)?,
                "unknown_val" => plan.unknown_val = list(v, n + 1)?,
                "openset_eval" => plan.openset_eval = list(v, n + 1)?,
                other => match other.strip_prefix("meta.") {
                    Some(key) => {
                        plan.meta.insert(key.to_string(), v.to_string());
                    }
                    None => {
                        return Err(Error::Parse {
                            line: n + 1,
                            message: format!("unknown key `{other}`"),
                        })
                    }
                },
            }
        }
        match format.as_deref() {
            Some(SPLIT_FORMAT) => Ok(plan),
            found => Err(Error::Schema {
                expected: SPLIT_FORMAT.into(),
                found: found.unwrap_or("<none>").into(),
            }),
        }
    }

    /// Checks the disjointness and membership invariants against a window list.
    pub fn validate(&self, windows: &[LabeledWindow]) -> Result<()> {
        let known_sets = [&self.cnn_train, &self.cnn_val, &self.cnn_test, &self.gan_val];
        let mut seen = BTreeSet::new();
        for set in known_sets {
            for &i in set {
                let w = windows
                    .get(i)
                    .ok_or_else(|| Error::Data(format!("window index {i} out of range")))?;
                if self.known_index(w.class_label).is_none() {
                    return Err(Error::Data(format!(
                        "window {i} of class {} is in a known-class set",
                        w.class_label
                    )));
                }
                if !seen.insert(i) {
                    return Err(Error::Data(format!("window {i} appears in two sets")));
                }
            }
        }
        let eval: BTreeSet<usize> = self.openset_eval.iter().copied().collect();
        for &i in self.cnn_train.iter().chain(&self.cnn_val).chain(&self.gan_val).chain(&self.unknown_val) {
            if eval.contains(&i) {
                return Err(Error::Data(format!("window {i} leaks into openset_eval")));
            }
        }
        for &i in self.unknown_val.iter().chain(&self.openset_eval) {
            if i >= windows.len() {
                return Err(Error::Data(format!("window index {i} out of range")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;
    use proptest::prelude::*;

    fn windows(per_class: &[(u32, usize)]) -> Vec<LabeledWindow> {
        let mut out = Vec::new();
        for &(class, n) in per_class {
            for r in 0..n {
                out.push(LabeledWindow {
                    matrix: Tensor::zeros(&[1, 2]),
                    class_label: class,
                    subject_id: 1,
                    repetition: (r % 10) as u32 + 1,
                    start: r,
                });
            }
        }
        out
    }

    #[test]
    fn fraction_sizes() {
        let w = windows(&[(1, 100), (9, 20)]);
        let plan = make_split(&w, &[1], &[9], &SplitConfig::new(3)).unwrap();
        assert_eq!(
            (plan.cnn_train.len(), plan.cnn_val.len(), plan.cnn_test.len(), plan.gan_val.len()),
            (60, 15, 15, 10)
        );
        assert_eq!(plan.openset_eval.len(), 35);
        plan.validate(&w).unwrap();

        let w = windows(&[(1, 25), (2, 25), (3, 25), (4, 25)]);
        let plan = make_split(&w, &[1, 2, 3, 4], &[], &SplitConfig::new(3)).unwrap();
        assert_eq!(plan.cnn_train.len(), 60);
        let per_class = |set: &[usize], c| set.iter().filter(|&&i| w[i].class_label == c).count();
        assert_eq!(per_class(&plan.cnn_train, 2), 15);
    }

    #[test]
    fn repetition_rule() {
        let w = windows(&[(1, 50), (2, 50), (7, 10)]);
        let cfg = SplitConfig {
            rule: SplitRule::db1(),
            ..SplitConfig::new(1)
        };
        let plan = make_split(&w, &[1, 2], &[7], &cfg).unwrap();
        assert!(plan.cnn_test.iter().all(|&i| [2, 5, 7].contains(&w[i].repetition)));
        assert_eq!(plan.cnn_test.len(), 30);
        for &i in plan.cnn_train.iter().chain(&plan.cnn_val).chain(&plan.gan_val) {
            assert!(![2, 5, 7].contains(&w[i].repetition));
        }
        assert_eq!(plan.cnn_train.len() + plan.cnn_val.len() + plan.gan_val.len(), 70);
        plan.validate(&w).unwrap();
    }

    #[test]
    fn configuration_errors() {
        let w = windows(&[(1, 10), (2, 10)]);
        let err = make_split(&w, &[1, 3], &[4], &SplitConfig::new(0)).unwrap_err();
        assert!(err.to_string().contains("3, 4"), "{err}");
        assert!(make_split(&w, &[1, 2], &[2], &SplitConfig::new(0)).is_err());
        let bad = SplitConfig {
            fractions: SplitFractions { cnn_train: 0.9, ..SplitFractions::default() },
            ..SplitConfig::new(0)
        };
        assert!(make_split(&w, &[1], &[2], &bad).is_err());
    }

    #[test]
    fn text_round_trip() {
        let w = windows(&[(1, 30), (2, 30), (5, 12)]);
        let mut plan = make_split(&w, &[1, 2], &[5], &SplitConfig { unknown_val_fraction: 0.25, ..SplitConfig::new(8) }).unwrap();
        plan.meta.insert("window_ms".into(), "200".into());
        assert_eq!(plan.unknown_val.len(), 3);
        let back = SplitPlan::from_text(&plan.to_text()).unwrap();
        assert_eq!(back, plan);
        assert!(matches!(SplitPlan::from_text("known = 1\n"), Err(Error::Schema { .. })));
    }

    proptest! {
        #[test]
        fn unknowns_never_reach_training_sets(seed in any::<u64>(), a in 3usize..40, b in 1usize..30, c in 1usize..30) {
            let w = windows(&[(1, a), (2, b), (3, c), (4, b + c)]);
            let cfg = SplitConfig { unknown_val_fraction: 0.2, ..SplitConfig::new(seed) };
            let plan = make_split(&w, &[1, 2], &[3, 4], &cfg).unwrap();
            plan.validate(&w).unwrap();
            for &i in plan.cnn_train.iter().chain(&plan.cnn_val).chain(&plan.cnn_test).chain(&plan.gan_val) {
                prop_assert!(w[i].class_label <= 2);
            }
            let covered = plan.cnn_train.len() + plan.cnn_val.len() + plan.cnn_test.len() + plan.gan_val.len();
            prop_assert_eq!(covered, a + b);
            prop_assert!(plan.openset_eval.iter().any(|&i| w[i].class_label > 2));
            prop_assert_eq!(make_split(&w, &[1, 2], &[3, 4], &cfg).unwrap(), plan);
        }
    }
}

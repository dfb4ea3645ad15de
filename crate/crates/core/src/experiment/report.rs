use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::metrics::{MetricsReport, Mode};
use crate::nn::io::sha256_hex;
use crate::opengan::SelectionMode;

pub const REPORT_SCHEMA: &str = "myogate-report/1";

/// AER is errors over executed (accepted) actions.
pub const AER_DENOMINATOR: &str = "accepted";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepKind {
    Evaluate,
    Ratio,
    Known,
    CrossMatrix,
    CrossDomain,
}

impl std::fmt::Display for SweepKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SweepKind::Evaluate => "evaluate",
            SweepKind::Ratio => "ratio",
            SweepKind::Known => "known",
            SweepKind::CrossMatrix => "cross-matrix",
            SweepKind::CrossDomain => "cross-domain",
        })
    }
}

/// Grid coordinates of one evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellKey {
    pub train_subject: u32,
    pub test_subject: u32,
    pub n_known: usize,
    /// Unknown classes available to the gate during selection and calibration.
    pub gate_unknown: usize,
    /// Unknown classes in the evaluation stream.
    pub n_unknown: usize,
    pub mode: Mode,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub key: CellKey,
    pub metrics: MetricsReport,
    pub closed_accuracy: f64,
    pub selection_auc: Option<f64>,
    pub selection_epoch: Option<usize>,
    pub threshold: Option<f64>,
    pub config_hash: String,
}

/// Mean and sample standard deviation (absent for a single value).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: Option<f64>,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Stat> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = (values.len() > 1)
            .then(|| (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
        Some(Stat { mean, std })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GroupKey {
    /// `None` when the group spans subjects.
    pub train_subject: Option<u32>,
    pub test_subject: Option<u32>,
    pub n_known: usize,
    pub gate_unknown: usize,
    pub n_unknown: usize,
    pub mode: Mode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub key: GroupKey,
    pub n: usize,
    pub aer: Stat,
    pub acc: Stat,
    pub arr: Stat,
    pub f1: Stat,
    pub auc: Option<Stat>,
}

/// Lowest-AER gate row of one evaluation column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnBest {
    pub n_unknown: usize,
    pub gate_unknown: usize,
    pub aer_mean: f64,
    pub on_diagonal: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema: String,
    pub kind: SweepKind,
    pub aer_denominator: String,
    pub selection_mode: SelectionMode,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub config: ExperimentConfig,
    pub cells: Vec<Cell>,
    pub aggregates: Vec<Aggregate>,
    /// OpenGAN, cross-matrix only.
    pub column_best: Vec<ColumnBest>,
}

fn ratio(n_known: usize, n_unknown: usize) -> String {
    let r = n_unknown as f64 / n_known as f64;
    format!("1:{}", (r * 1000.0).round() / 1000.0)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn subject(v: Option<u32>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "all".into())
}

impl ExperimentReport {
    /// Sorts and checks the cells, then aggregates them. `expected` is the
    /// number of cells the grid must hold.
    pub fn build(kind: SweepKind, config: &ExperimentConfig, mut cells: Vec<Cell>, expected: usize) -> Result<Self> {
        if cells.is_empty() {
            return Err(Error::config("experiment produced an empty grid"));
        }
        cells.sort_by_key(|c| c.key);
        if cells.windows(2).any(|w| w[0].key == w[1].key) {
            return Err(Error::State("duplicate grid cell".into()));
        }
        if cells.len() != expected {
            return Err(Error::State(format!(
                "incomplete grid: {} cells, expected {expected}",
                cells.len()
            )));
        }
        let aggregates = aggregate(kind, &cells);
        let column_best = if kind == SweepKind::CrossMatrix {
            column_best(&aggregates)
        } else {
            Vec::new()
        };
        Ok(ExperimentReport {
            schema: REPORT_SCHEMA.into(),
            kind,
            aer_denominator: AER_DENOMINATOR.into(),
            selection_mode: config.gan.selection_mode,
            config_hash: config.hash(),
            seeds: config.seeds.clone(),
            config: config.clone(),
            cells,
            aggregates,
            column_best,
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let found = value.get("schema").and_then(|s| s.as_str()).unwrap_or("<none>");
        if found != REPORT_SCHEMA {
            return Err(Error::Schema {
                expected: REPORT_SCHEMA.into(),
                found: found.into(),
            });
        }
        Ok(serde_json::from_value(value)?)
    }

    /// SHA-256 of the JSON serialization.
    pub fn hash(&self) -> String {
        sha256_hex(self.to_json().as_bytes())
    }

    fn header(&self) -> String {
        format!(
            "# {} kind={} aer_denominator={} selection={} config={}\n",
            self.schema, self.kind, self.aer_denominator, self.selection_mode, self.config_hash
        )
    }

    pub fn cells_csv(&self) -> String {
        let mut s = self.header();
        s.push_str(
            "train_subject,test_subject,n_known,gate_unknown,n_unknown,ratio,mode,seed,aer,acc,arr,f1,auc,\
             accepted,rejected,correct,wrong,closed_accuracy,selection_auc,selection_epoch,threshold\n",
        );
        for c in &self.cells {
            let k = &c.key;
            let m = &c.metrics;
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                k.train_subject,
                k.test_subject,
                k.n_known,
                k.gate_unknown,
                k.n_unknown,
                ratio(k.n_known, k.n_unknown),
                k.mode,
                k.seed,
                m.aer,
                m.acc,
                m.arr,
                m.f1,
                opt(m.auc),
                m.counts.accepted,
                m.counts.rejected,
                m.counts.correct,
                m.counts.wrong,
                c.closed_accuracy,
                opt(c.selection_auc),
                c.selection_epoch.map(|e| e.to_string()).unwrap_or_default(),
                opt(c.threshold)
            );
        }
        s
    }

    pub fn aggregates_csv(&self) -> String {
        let mut s = self.header();
        s.push_str(
            "train_subject,test_subject,n_known,gate_unknown,n_unknown,ratio,mode,n,aer_mean,aer_std,\
             acc_mean,acc_std,arr_mean,arr_std,f1_mean,f1_std,auc_mean,auc_std\n",
        );
        for a in &self.aggregates {
            let k = &a.key;
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                subject(k.train_subject),
                subject(k.test_subject),
                k.n_known,
                k.gate_unknown,
                k.n_unknown,
                ratio(k.n_known, k.n_unknown),
                k.mode,
                a.n,
                a.aer.mean,
                opt(a.aer.std),
                a.acc.mean,
                opt(a.acc.std),
                a.arr.mean,
                opt(a.arr.std),
                a.f1.mean,
                opt(a.f1.std),
                opt(a.auc.map(|s| s.mean)),
                opt(a.auc.and_then(|s| s.std))
            );
        }
        s
    }

    pub fn aggregates_for(&self, mode: Mode) -> impl Iterator<Item = &Aggregate> {
        self.aggregates.iter().filter(move |a| a.key.mode == mode)
    }
}

fn group_key(kind: SweepKind, k: &CellKey) -> GroupKey {
    let keep = kind == SweepKind::CrossDomain;
    GroupKey {
        train_subject: keep.then_some(k.train_subject),
        test_subject: keep.then_some(k.test_subject),
        n_known: k.n_known,
        gate_unknown: k.gate_unknown,
        n_unknown: k.n_unknown,
        mode: k.mode,
    }
}

/// Groups cells across seeds (and across subjects, except for cross-domain
/// grids) and summarizes each metric.
pub fn aggregate(kind: SweepKind, cells: &[Cell]) -> Vec<Aggregate> {
    let mut groups: BTreeMap<GroupKey, Vec<&Cell>> = BTreeMap::new();
    for c in cells {
        groups.entry(group_key(kind, &c.key)).or_default().push(c);
    }
    groups
        .into_iter()
        .map(|(key, cs)| {
            let stat = |f: &dyn Fn(&MetricsReport) -> f64| {
                Stat::of(&cs.iter().map(|c| f(&c.metrics)).collect::<Vec<_>>()).expect("group is non-empty")
            };
            let aucs: Vec<f64> = cs.iter().filter_map(|c| c.metrics.auc).collect();
            Aggregate {
                key,
                n: cs.len(),
                aer: stat(&|m| m.aer),
                acc: stat(&|m| m.acc),
                arr: stat(&|m| m.arr),
                f1: stat(&|m| m.f1),
                auc: Stat::of(&aucs),
            }
        })
        .collect()
}

/// For each OpenGAN evaluation column, the gate row with the lowest mean AER
/// (ties to the smaller row).
pub fn column_best(aggregates: &[Aggregate]) -> Vec<ColumnBest> {
    let mut best: BTreeMap<usize, (usize, f64)> = BTreeMap::new();
    for a in aggregates.iter().filter(|a| a.key.mode == Mode::OpenGan) {
        let entry = best.entry(a.key.n_unknown).or_insert((a.key.gate_unknown, a.aer.mean));
        if a.aer.mean < entry.1 {
            *entry = (a.key.gate_unknown, a.aer.mean);
        }
    }
    best.into_iter()
        .map(|(n_unknown, (gate_unknown, aer_mean))| ColumnBest {
            n_unknown,
            gate_unknown,
            aer_mean,
            on_diagonal: gate_unknown == n_unknown,
        })
        .collect()
}

//! ROC analysis and the action-level error metrics of a gated classifier.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub tpr: f64,
    pub fpr: f64,
}

fn split_scores(scores: &[(f64, bool)]) -> Result<(Vec<f64>, Vec<f64>)> {
    if let Some((s, _)) = scores.iter().find(|(s, _)| !s.is_finite()) {
        return Err(Error::Argument(format!("score {s} is not finite")));
    }
    let pos: Vec<f64> = scores.iter().filter(|(_, p)| *p).map(|(s, _)| *s).collect();
    let neg: Vec<f64> = scores.iter().filter(|(_, p)| !*p).map(|(s, _)| *s).collect();
    if pos.is_empty() {
        return Err(Error::MissingClass("positive"));
    }
    if neg.is_empty() {
        return Err(Error::MissingClass("negative"));
    }
    Ok((pos, neg))
}

/// ROC over labeled scores (`true` = positive). The first point has threshold
/// `+∞` and lies at (0, 0); every distinct score follows in descending order,
/// with a sample classified positive iff its score ≥ the threshold.
pub fn roc_curve(scores: &[(f64, bool)]) -> Result<Vec<RocPoint>> {
    let (pos, neg) = split_scores(scores)?;
    let (np, nn) = (pos.len() as f64, neg.len() as f64);
    let mut sorted: Vec<(f64, bool)> = scores.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        tpr: 0.0,
        fpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let t = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == t {
            if sorted[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold: t,
            tpr: tp as f64 / np,
            fpr: fp as f64 / nn,
        });
    }
    Ok(points)
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half.
pub fn auc(scores: &[(f64, bool)]) -> Result<f64> {
    let (pos, mut neg) = split_scores(scores)?;
    neg.sort_by(f64::total_cmp);
    let mut twice: u128 = 0;
    for p in &pos {
        let below = neg.partition_point(|n| n < p);
        let not_above = neg.partition_point(|n| n <= p);
        twice += 2 * below as u128 + (not_above - below) as u128;
    }
    Ok(twice as f64 / (2 * pos.len() as u128 * neg.len() as u128) as f64)
}

/// Area under a ROC polyline by the trapezoid rule.
pub fn trapezoid_area(roc: &[RocPoint]) -> f64 {
    roc.windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cutoff {
    pub threshold: f64,
    /// Euclidean distance of the operating point from (0, 1).
    pub distance: f64,
    pub tpr: f64,
    pub fpr: f64,
    /// The curve had no interior point (all scores tied).
    pub degenerate: bool,
}

/// Operating point closest to the top-left corner, over every finite
/// threshold; ties go to the larger threshold.
pub fn optimal_cutoff(roc: &[RocPoint]) -> Result<Cutoff> {
    let mut best: Option<(f64, &RocPoint)> = None;
    for p in roc.iter().filter(|p| p.threshold.is_finite()) {
        let d2 = p.fpr * p.fpr + (1.0 - p.tpr) * (1.0 - p.tpr);
        let better = match best {
            None => true,
            Some((bd, bp)) => d2 < bd || (d2 == bd && p.threshold > bp.threshold),
        };
        if better {
            best = Some((d2, p));
        }
    }
    let (d2, p) = best.ok_or_else(|| Error::argument("ROC curve has no finite threshold"))?;
    let degenerate = roc.len() <= 2;
    if degenerate {
        log::warn!("degenerate ROC curve: every score equals {}", p.threshold);
    }
    Ok(Cutoff {
        threshold: p.threshold,
        distance: d2.sqrt(),
        tpr: p.tpr,
        fpr: p.fpr,
        degenerate,
    })
}

/// Two-column `fpr,tpr` CSV of a curve.
pub fn roc_to_csv(roc: &[RocPoint]) -> String {
    let mut s = String::from("fpr,tpr\n");
    for p in roc {
        s.push_str(&format!("{},{}\n", p.fpr, p.tpr));
    }
    s
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Mode {
    /// Known-class test windows only, no gate.
    Close,
    /// Known and unknown windows, every classification executed.
    Open,
    /// Known and unknown windows behind the discriminator gate.
    #[serde(rename = "OpenGAN")]
    OpenGan,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Close, Mode::Open, Mode::OpenGan];
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Close => "Close",
            Mode::Open => "Open",
            Mode::OpenGan => "OpenGAN",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "close" => Ok(Mode::Close),
            "open" => Ok(Mode::Open),
            "opengan" => Ok(Mode::OpenGan),
            _ => Err(Error::config(format!("unknown mode `{s}` (expected Close, Open or OpenGAN)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Decision {
    /// Execute the known class with this index.
    Accept(usize),
    Reject,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Outcome {
    pub true_class: u32,
    /// Known-class index of `true_class`, `None` for unknown classes.
    pub true_index: Option<usize>,
    pub decision: Decision,
    /// Discriminator score, when a gate produced the decision.
    pub score: Option<f64>,
}

impl Outcome {
    pub fn is_known(&self) -> bool {
        self.true_index.is_some()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub accepted: usize,
    pub rejected: usize,
    pub correct: usize,
    pub wrong: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mode: Mode,
    pub aer: f64,
    pub acc: f64,
    pub arr: f64,
    pub f1: f64,
    /// Known-vs-unknown AUC of the gate scores, when both kinds were scored.
    pub auc: Option<f64>,
    pub counts: Counts,
}

pub const REPORT_CSV_HEADER: &str = "mode,aer,acc,arr,f1,auc,accepted,rejected,correct,wrong";

impl MetricsReport {
    pub fn csv_row(&self) -> String {
        let c = &self.counts;
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.mode,
            self.aer,
            self.acc,
            self.arr,
            self.f1,
            self.auc.map(|a| a.to_string()).unwrap_or_default(),
            c.accepted,
            c.rejected,
            c.correct,
            c.wrong
        )
    }
}

/// AER counts every accepted action that is not the true known class
/// (including any accepted unknown-class window) over all accepted actions.
pub fn compute_report(outcomes: &[Outcome], closed_set_accuracy: f64, mode: Mode) -> Result<MetricsReport> {
    if outcomes.is_empty() {
        return Err(Error::argument("no outcomes to report"));
    }
    if !(closed_set_accuracy > 0.0) || !closed_set_accuracy.is_finite() {
        return Err(Error::Argument(format!(
            "closed-set reference accuracy must be positive, got {closed_set_accuracy}"
        )));
    }
    let mut c = Counts::default();
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for o in outcomes {
        match o.decision {
            Decision::Accept(idx) => {
                c.accepted += 1;
                if o.true_index == Some(idx) {
                    c.correct += 1;
                } else {
                    c.wrong += 1;
                }
                if o.is_known() {
                    tp += 1;
                } else {
                    fp += 1;
                }
            }
            Decision::Reject => {
                c.rejected += 1;
                if o.is_known() {
                    fneg += 1;
                }
            }
        }
    }
    if c.accepted == 0 {
        return Err(Error::NoAcceptedActions);
    }
    let aer = c.wrong as f64 / c.accepted as f64;
    let acc = 1.0 - aer;
    let f1 = if tp == 0 {
        0.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fneg) as f64
    };
    let scored: Vec<(f64, bool)> = outcomes
        .iter()
        .filter_map(|o| o.score.map(|s| (s, o.is_known())))
        .collect();
    let auc = if scored.len() == outcomes.len() {
        auc(&scored).ok()
    } else {
        None
    };
    Ok(MetricsReport {
        mode,
        aer,
        acc,
        arr: acc / closed_set_accuracy,
        f1,
        auc,
        counts: c,
    })
}

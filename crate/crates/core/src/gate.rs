//! Pre-execution gate: a classification is executed only when the
//! discriminator scores its feature vector at or above the threshold.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::classifier::{extract_features, CnnModel, FeatureVector};
use crate::data::LabeledWindow;
use crate::error::{Error, Result};
use crate::metrics::{Decision, Outcome};
use crate::opengan::SelectedDiscriminator;

#[derive(Clone, Debug, PartialEq)]
pub struct GatePipeline {
    pub cnn: CnnModel,
    pub discriminator: SelectedDiscriminator,
}

impl GatePipeline {
    pub fn new(cnn: CnnModel, discriminator: SelectedDiscriminator) -> Result<Self> {
        if discriminator.n_known() != cnn.n_known() {
            return Err(Error::Config(format!(
                "discriminator reads {} features but the classifier emits {}",
                discriminator.n_known(),
                cnn.n_known()
            )));
        }
        Ok(GatePipeline { cnn, discriminator })
    }

    pub fn threshold(&self) -> f64 {
        self.discriminator.threshold
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GateDecision {
    pub decision: Decision,
    pub score: f64,
    pub feature: FeatureVector,
}

/// Accept iff `score >= threshold`.
pub fn gate(argmax: usize, score: f64, threshold: f64) -> Decision {
    if score >= threshold {
        Decision::Accept(argmax)
    } else {
        Decision::Reject
    }
}

pub fn decide(pipeline: &GatePipeline, window: &LabeledWindow) -> Result<GateDecision> {
    Ok(decide_all(pipeline, std::slice::from_ref(window))?.remove(0))
}

/// [`decide`] over many windows with batched inference.
pub fn decide_all(pipeline: &GatePipeline, windows: &[LabeledWindow]) -> Result<Vec<GateDecision>> {
    let features = extract_features(&pipeline.cnn, windows)?;
    let scores = pipeline.discriminator.score(&features)?;
    Ok(features
        .into_iter()
        .zip(scores)
        .map(|(feature, score)| GateDecision {
            decision: gate(feature.argmax(), score, pipeline.threshold()),
            score,
            feature,
        })
        .collect())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Action {
    /// Rest / no gesture.
    #[default]
    Default,
    Class(u32),
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Default => f.write_str("default"),
            Action::Class(c) => write!(f, "{c}"),
        }
    }
}

/// What a rejected window does to the executed action.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HoldPolicy {
    /// Keep the previous action.
    #[default]
    HoldPrevious,
    /// Fall back to the default action.
    RevertToDefault,
}

impl std::str::FromStr for HoldPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hold-previous" => Ok(HoldPolicy::HoldPrevious),
            "revert-to-default" => Ok(HoldPolicy::RevertToDefault),
            other => Err(Error::Config(format!("unknown hold policy `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogEntry {
    pub index: usize,
    pub true_class: u32,
    pub known: bool,
    pub score: f64,
    pub decision: Decision,
    pub executed: Action,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct StreamState {
    pub current: Action,
    pub log: Vec<LogEntry>,
}

impl StreamState {
    pub fn new(initial: Action) -> Self {
        StreamState {
            current: initial,
            log: Vec::new(),
        }
    }

    /// Applies one decision. `classes` maps accepted indices to gesture ids.
    pub fn apply(&mut self, decision: Decision, classes: &[u32], policy: HoldPolicy) -> Action {
        match decision {
            Decision::Accept(i) => self.current = Action::Class(classes[i]),
            Decision::Reject => {
                if policy == HoldPolicy::RevertToDefault {
                    self.current = Action::Default;
                }
            }
        }
        self.current
    }

    pub fn timeline(&self) -> Vec<Action> {
        self.log.iter().map(|e| e.executed).collect()
    }

    /// `index,true_class,known_flag,score,decision,executed_action`.
    pub fn decision_log_csv(&self) -> String {
        let mut s = String::from("index,true_class,known_flag,score,decision,executed_action\n");
        for e in &self.log {
            let decision = match e.decision {
                Decision::Accept(_) => "accept",
                Decision::Reject => "reject",
            };
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                e.index,
                e.true_class,
                u8::from(e.known),
                e.score,
                decision,
                e.executed
            ));
        }
        s
    }
}

/// Gates windows in arrival order. Accepted windows set the executed action;
/// rejected windows hold it (or revert it, per `policy`).
pub fn run_stream(
    pipeline: &GatePipeline,
    windows: &[LabeledWindow],
    initial: Action,
    policy: HoldPolicy,
) -> Result<(StreamState, Vec<Outcome>)> {
    let mut state = StreamState::new(initial);
    if windows.is_empty() {
        return Ok((state, Vec::new()));
    }
    let decisions = decide_all(pipeline, windows)?;
    let mut outcomes = Vec::with_capacity(windows.len());
    for (index, (w, d)) in windows.iter().zip(decisions).enumerate() {
        let true_index = pipeline.cnn.class_index(w.class_label);
        let executed = state.apply(d.decision, &pipeline.cnn.classes, policy);
        state.log.push(LogEntry {
            index,
            true_class: w.class_label,
            known: true_index.is_some(),
            score: d.score,
            decision: d.decision,
            executed,
        });
        outcomes.push(Outcome {
            true_class: w.class_label,
            true_index,
            decision: d.decision,
            score: Some(d.score),
        });
    }
    Ok((state, outcomes))
}

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::Recording;
use crate::error::{Error, Result};
use crate::nn::Tensor;

/// One fixed-length multichannel segment (`channels × samples`).
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledWindow {
    pub matrix: Tensor<f32>,
    pub class_label: u32,
    pub subject_id: u32,
    /// 1-based repetition of the gesture within its recording.
    pub repetition: u32,
    /// Offset of the first sample within the source recording.
    pub start: usize,
}

impl LabeledWindow {
    pub fn channels(&self) -> usize {
        self.matrix.shape()[0]
    }

    pub fn samples(&self) -> usize {
        self.matrix.shape()[1]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelRule {
    /// Keep a window only if every sample carries the same non-rest label.
    #[default]
    Uniform,
    /// Label a window with its most frequent label; drop rest-majority windows.
    Majority,
}

impl std::str::FromStr for LabelRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(LabelRule::Uniform),
            "majority" => Ok(LabelRule::Majority),
            other => Err(Error::config(format!("unknown label rule `{other}`"))),
        }
    }
}

impl std::fmt::Display for LabelRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LabelRule::Uniform => "uniform",
            LabelRule::Majority => "majority",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WindowConfig {
    pub window_ms: f64,
    pub stride_ms: f64,
    pub label_rule: LabelRule,
}

impl WindowConfig {
    /// Non-overlapping windows of `window_ms`.
    pub fn new(window_ms: f64) -> Self {
        WindowConfig {
            window_ms,
            stride_ms: window_ms,
            label_rule: LabelRule::Uniform,
        }
    }

    pub fn with_stride(mut self, stride_ms: f64) -> Self {
        self.stride_ms = stride_ms;
        self
    }

    pub fn samples_at(&self, rate: f64) -> usize {
        (self.window_ms * rate / 1000.0).round() as usize
    }
}

#[derive(Clone, Debug, Default)]
pub struct Segmentation {
    pub windows: Vec<LabeledWindow>,
    pub warnings: Vec<String>,
}

/// Repetition number of every contiguous run of a non-rest label.
fn repetition_per_sample(labels: &[u32]) -> Vec<u32> {
    let mut seen: HashMap<u32, u32> = HashMap::new();
    let mut out = vec![0; labels.len()];
    let mut current = 0;
    for (i, &l) in labels.iter().enumerate() {
        if l != 0 && (i == 0 || labels[i - 1] != l) {
            let c = seen.entry(l).or_insert(0);
            *c += 1;
            current = *c;
        }
        out[i] = if l == 0 { 0 } else { current };
    }
    out
}

/// Cuts a recording into labeled windows at stride offsets.
pub fn segment_windows(recording: &Recording, config: &WindowConfig) -> Result<Segmentation> {
    if !(config.window_ms > 0.0) || !(config.stride_ms > 0.0) {
        return Err(Error::config(format!(
            "window ({}) and stride ({}) must be positive",
            config.window_ms, config.stride_ms
        )));
    }
    let rate = recording.sample_rate;
    let width = config.samples_at(rate);
    let stride = ((config.stride_ms * rate / 1000.0).round() as usize).max(1);
    if width == 0 {
        return Err(Error::config(format!(
            "a {} ms window holds no samples at {rate} Hz",
            config.window_ms
        )));
    }
    let mut out = Segmentation::default();
    let total = recording.len();
    if total < width {
        let msg = format!(
            "subject {}: recording of {total} samples is shorter than one {width}-sample window",
            recording.subject_id
        );
        log::warn!("{msg}");
        out.warnings.push(msg);
        return Ok(out);
    }
    let labels = recording.labels();
    let reps = repetition_per_sample(labels);
    let channels = recording.n_channels();
    let mut start = 0;
    while start + width <= total {
        let span = &labels[start..start + width];
        let chosen = match config.label_rule {
            LabelRule::Uniform => span
                .iter()
                .all(|&l| l == span[0])
                .then_some(span[0])
                .filter(|&l| l != 0),
            LabelRule::Majority => {
                let mut counts: HashMap<u32, usize> = HashMap::new();
                for &l in span {
                    *counts.entry(l).or_insert(0) += 1;
                }
                // highest count, ties toward the smaller label
                let (label, _) = counts
                    .into_iter()
                    .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
                    .expect("window is non-empty");
                (label != 0).then_some(label)
            }
        };
        if let Some(label) = chosen {
            let first = span.iter().position(|&l| l == label).expect("label present");
            let mut data = Vec::with_capacity(channels * width);
            for c in 0..channels {
                data.extend_from_slice(&recording.channel(c)[start..start + width]);
            }
            out.windows.push(LabeledWindow {
                matrix: Tensor::new(&[channels, width], data)?,
                class_label: label,
                subject_id: recording.subject_id,
                repetition: reps[start + first],
                start,
            });
        }
        start += stride;
    }
    Ok(out)
}

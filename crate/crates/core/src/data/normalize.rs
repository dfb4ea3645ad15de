use super::LabeledWindow;
use crate::error::{Error, Result};
use crate::nn::Tensor;

pub const SIGMA_FLOOR: f64 = 1e-8;

/// Per-channel z-score statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    /// Fits statistics over every sample of every window. Channels whose
    /// deviation falls under the floor are reported in `diagnostics`.
    pub fn fit<'a>(windows: impl IntoIterator<Item = &'a LabeledWindow>) -> Result<(Self, Vec<String>)> {
        let mut sum: Vec<f64> = Vec::new();
        let mut sq: Vec<f64> = Vec::new();
        let mut count = 0usize;
        for w in windows {
            let (c, s) = (w.channels(), w.samples());
            if sum.is_empty() {
                sum = vec![0.0; c];
                sq = vec![0.0; c];
            } else if sum.len() != c {
                return Err(Error::shape(&[sum.len()], &[c]));
            }
            for ch in 0..c {
                for &v in &w.matrix.data()[ch * s..(ch + 1) * s] {
                    let v = v as f64;
                    sum[ch] += v;
                    sq[ch] += v * v;
                }
            }
            count += s;
        }
        if count == 0 {
            return Err(Error::Data("cannot fit normalization statistics on no windows".into()));
        }
        let n = count as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let mut diagnostics = Vec::new();
        let std = sq
            .iter()
            .zip(&mean)
            .enumerate()
            .map(|(ch, (q, m))| {
                let sd = (q / n - m * m).max(0.0).sqrt();
                if sd < SIGMA_FLOOR {
                    let msg = format!("channel {} is constant; sigma floor {SIGMA_FLOOR} applied", ch + 1);
                    log::warn!("{msg}");
                    diagnostics.push(msg);
                    SIGMA_FLOOR
                } else {
                    sd
                }
            })
            .collect();
        Ok((NormStats { mean, std }, diagnostics))
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    /// Applies the statistics to a `channels × samples` matrix.
    pub fn apply(&self, matrix: &Tensor<f32>) -> Result<Tensor<f32>> {
        let c = matrix.shape()[0];
        if c != self.channels() {
            return Err(Error::shape(&[self.channels()], &[c]));
        }
        let s = matrix.len() / c.max(1);
        let data = matrix
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let ch = i / s;
                ((v as f64 - self.mean[ch]) / self.std[ch]) as f32
            })
            .collect();
        Tensor::new(matrix.shape(), data)
    }

    pub fn to_text(&self) -> String {
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(",");
        format!("{};{}", join(&self.mean), join(&self.std))
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let parse = |part: &str| -> Result<Vec<f64>> {
            part.split(',')
                .map(|x| x.trim().parse().map_err(|_| Error::config(format!("bad normalization value `{x}`"))))
                .collect()
        };
        let (m, s) = text
            .split_once(';')
            .ok_or_else(|| Error::config("normalization statistics need `mean;std`"))?;
        let stats = NormStats { mean: parse(m)?, std: parse(s)? };
        if stats.mean.len() != stats.std.len() {
            return Err(Error::config("normalization mean and std lengths differ"));
        }
        Ok(stats)
    }
}

/// Fits on `train` and returns each window of `windows` normalized with those stats.
pub fn normalize(windows: &[LabeledWindow], train: &[usize]) -> Result<(Vec<LabeledWindow>, NormStats)> {
    let (stats, _) = NormStats::fit(train.iter().map(|&i| &windows[i]))?;
    let out = windows
        .iter()
        .map(|w| {
            Ok(LabeledWindow {
                matrix: stats.apply(&w.matrix)?,
                ..w.clone()
            })
        })
        .collect::<Result<_>>()?;
    Ok((out, stats))
}

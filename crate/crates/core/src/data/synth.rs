//! Synthetic multichannel EMG-like windows: band-limited bursts scaled by a
//! per-class channel envelope, plus white noise.

use std::f64::consts::PI;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{LabeledWindow, Recording};
use crate::error::{Error, Result};
use crate::nn::{derive_seed, seeded_rng, StreamRng, Tensor};

const CARRIER_TONES: usize = 4;
const ENVELOPE_LEVELS: [f64; 3] = [0.1, 0.55, 1.0];

#[derive(Clone, Debug, PartialEq)]
pub struct SynthClassSpec {
    pub class_label: u32,
    /// Burst amplitude per channel.
    pub envelope: Vec<f64>,
    /// Carrier band in Hz, `(low, high)`.
    pub band: (f64, f64),
    /// Standard deviation of the additive white noise.
    pub noise_floor: f64,
    /// Fraction of each window covered by the burst, in `[0, 1]`.
    pub duty_cycle: f64,
}

impl SynthClassSpec {
    pub fn validate(&self, channels: usize, sample_rate: f64) -> Result<()> {
        let c = self.class_label;
        if self.envelope.len() != channels {
            return Err(Error::config(format!(
                "class {c}: envelope has {} channels, expected {channels}",
                self.envelope.len()
            )));
        }
        if self.envelope.iter().any(|a| !(*a >= 0.0) || !a.is_finite()) {
            return Err(Error::config(format!("class {c}: envelope amplitudes must be non-negative")));
        }
        let (lo, hi) = self.band;
        if !(lo >= 0.0 && lo <= hi) {
            return Err(Error::config(format!("class {c}: invalid carrier band ({lo}, {hi})")));
        }
        if hi > sample_rate / 2.0 {
            return Err(Error::config(format!(
                "class {c}: carrier band upper edge {hi} Hz exceeds the Nyquist limit {} Hz",
                sample_rate / 2.0
            )));
        }
        if !(self.noise_floor >= 0.0) || !(0.0..=1.0).contains(&self.duty_cycle) {
            return Err(Error::config(format!("class {c}: noise floor or duty cycle out of range")));
        }
        Ok(())
    }
}

/// `n_classes` specs labeled `1..=n_classes` with pairwise-distinct envelopes
/// drawn from three activation levels.
pub fn synth_family(n_classes: usize, channels: usize, sample_rate: f64, seed: u64) -> Vec<SynthClassSpec> {
    let mut rng = seeded_rng(seed, 0x5717);
    let mut specs: Vec<SynthClassSpec> = Vec::with_capacity(n_classes);
    while specs.len() < n_classes {
        let envelope: Vec<f64> = (0..channels)
            .map(|_| *ENVELOPE_LEVELS.choose(&mut rng).expect("levels"))
            .collect();
        let distinct = specs.iter().all(|s| {
            s.envelope.iter().zip(&envelope).filter(|(a, b)| a != b).count() >= 2.min(channels)
        });
        if distinct || specs.len() >= ENVELOPE_LEVELS.len().pow(channels as u32) {
            specs.push(SynthClassSpec {
                class_label: specs.len() as u32 + 1,
                envelope,
                band: (0.1 * sample_rate, 0.4 * sample_rate),
                noise_floor: 0.05,
                duty_cycle: 0.8,
            });
        }
    }
    specs
}

/// Per-subject variant: every envelope entry is scaled by `exp(strength·N(0,1))`.
pub fn perturb_specs(specs: &[SynthClassSpec], strength: f64, seed: u64) -> Vec<SynthClassSpec> {
    let mut rng = seeded_rng(seed, 0xD0D0);
    specs
        .iter()
        .map(|s| SynthClassSpec {
            envelope: s
                .envelope
                .iter()
                .map(|a| {
                    let z: f64 = rng.sample(StandardNormal);
                    a * (strength * z).exp()
                })
                .collect(),
            ..s.clone()
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SynthConfig {
    pub windows_per_class: usize,
    pub channels: usize,
    pub sample_rate: f64,
    pub window_samples: usize,
    pub subject_id: u32,
    pub seed: u64,
}

fn check(specs: &[SynthClassSpec], config: &SynthConfig) -> Result<()> {
    if specs.len() < 2 {
        return Err(Error::config("synthetic generation needs at least two class specs"));
    }
    if config.channels == 0 || config.window_samples == 0 {
        return Err(Error::config("synthetic windows need at least one channel and one sample"));
    }
    specs
        .iter()
        .try_for_each(|s| s.validate(config.channels, config.sample_rate))
}

/// One `channels × samples` burst of `spec`, written channel-major.
fn burst(spec: &SynthClassSpec, samples: usize, rate: f64, rng: &mut StreamRng) -> Vec<f32> {
    let gain: f64 = rng.random_range(0.8..1.2);
    let on = ((spec.duty_cycle * samples as f64).round() as usize).min(samples);
    let offset = rng.random_range(0..=samples - on);
    let (lo, hi) = spec.band;
    let mut out = Vec::with_capacity(spec.envelope.len() * samples);
    for &amp in &spec.envelope {
        let tones: Vec<(f64, f64)> = (0..CARRIER_TONES)
            .map(|_| (lo + (hi - lo) * rng.random::<f64>(), 2.0 * PI * rng.random::<f64>()))
            .collect();
        let carrier: Vec<f64> = (0..samples)
            .map(|t| {
                let time = t as f64 / rate;
                tones.iter().map(|(f, p)| (2.0 * PI * f * time + p).sin()).sum()
            })
            .collect();
        let rms = (carrier.iter().map(|v| v * v).sum::<f64>() / samples as f64).sqrt();
        let scale = if rms > 0.0 { 1.0 / rms } else { 0.0 };
        for (t, c) in carrier.iter().enumerate() {
            let active = if (offset..offset + on).contains(&t) { 1.0 } else { 0.0 };
            let noise: f64 = rng.sample(StandardNormal);
            out.push((amp * gain * active * c * scale + spec.noise_floor * noise) as f32);
        }
    }
    out
}

/// `windows_per_class` windows per spec, classes in spec order; repetition
/// indices cycle through 1..=10.
pub fn synth_generate(specs: &[SynthClassSpec], config: &SynthConfig) -> Result<Vec<LabeledWindow>> {
    check(specs, config)?;
    let mut out = Vec::with_capacity(specs.len() * config.windows_per_class);
    for (k, spec) in specs.iter().enumerate() {
        let mut rng = seeded_rng(derive_seed(config.seed, &[config.subject_id as u64]), k as u64);
        for j in 0..config.windows_per_class {
            let data = burst(spec, config.window_samples, config.sample_rate, &mut rng);
            out.push(LabeledWindow {
                matrix: Tensor::new(&[config.channels, config.window_samples], data)?,
                class_label: spec.class_label,
                subject_id: config.subject_id,
                repetition: (j % 10) as u32 + 1,
                start: j * config.window_samples,
            });
        }
    }
    Ok(out)
}

/// Continuous recording: for each class, `repetitions` gesture runs of
/// `windows_per_rep` windows each, every run preceded by a rest gap of one
/// window of noise.
pub fn synth_recording(
    specs: &[SynthClassSpec],
    repetitions: usize,
    windows_per_rep: usize,
    config: &SynthConfig,
) -> Result<Recording> {
    check(specs, config)?;
    let (c, s) = (config.channels, config.window_samples);
    let mut channels = vec![Vec::new(); c];
    let mut labels = Vec::new();
    let mut push = |data: &[f32], label: u32, channels: &mut Vec<Vec<f32>>| {
        for (ch, v) in channels.iter_mut().enumerate() {
            v.extend_from_slice(&data[ch * s..(ch + 1) * s]);
        }
        labels.extend(std::iter::repeat_n(label, s));
    };
    for (k, spec) in specs.iter().enumerate() {
        let mut rng = seeded_rng(derive_seed(config.seed, &[config.subject_id as u64]), k as u64);
        let rest = SynthClassSpec {
            envelope: vec![0.0; c],
            ..spec.clone()
        };
        for _ in 0..repetitions {
            push(&burst(&rest, s, config.sample_rate, &mut rng), 0, &mut channels);
            for _ in 0..windows_per_rep {
                push(&burst(spec, s, config.sample_rate, &mut rng), spec.class_label, &mut channels);
            }
        }
    }
    Recording::new(config.subject_id, config.sample_rate, channels, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{segment_windows, WindowConfig};

    fn config(seed: u64) -> SynthConfig {
        SynthConfig {
            windows_per_class: 100,
            channels: 6,
            sample_rate: 100.0,
            window_samples: 20,
            subject_id: 1,
            seed,
        }
    }

    fn spec(label: u32, envelope: Vec<f64>) -> SynthClassSpec {
        SynthClassSpec {
            class_label: label,
            envelope,
            band: (10.0, 40.0),
            noise_floor: 0.05,
            duty_cycle: 0.8,
        }
    }

    fn rms_profile(w: &LabeledWindow) -> Vec<f64> {
        let s = w.samples();
        (0..w.channels())
            .map(|c| {
                let row = &w.matrix.data()[c * s..(c + 1) * s];
                (row.iter().map(|&v| (v as f64).powi(2)).sum::<f64>() / s as f64).sqrt()
            })
            .collect()
    }

    #[test]
    fn disjoint_channels_nearest_centroid() {
        let specs = [
            spec(1, vec![1.0, 1.0, 1.0, 0.0, 0.0, 0.0]),
            spec(2, vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0]),
        ];
        let train = synth_generate(&specs, &config(1)).unwrap();
        let test = synth_generate(&specs, &config(2)).unwrap();
        let centroid = |label| {
            let rows: Vec<Vec<f64>> = train.iter().filter(|w| w.class_label == label).map(rms_profile).collect();
            (0..6).map(|c| rows.iter().map(|r| r[c]).sum::<f64>() / rows.len() as f64).collect::<Vec<_>>()
        };
        let cents = [centroid(1), centroid(2)];
        let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
        let correct = test
            .iter()
            .filter(|w| {
                let p = rms_profile(w);
                let guess = if dist(&p, &cents[0]) <= dist(&p, &cents[1]) { 1 } else { 2 };
                guess == w.class_label
            })
            .count();
        assert!(correct as f64 / test.len() as f64 >= 0.99);
    }

    #[test]
    fn silent_specs_are_all_zero() {
        let mut a = spec(1, vec![0.0; 6]);
        a.noise_floor = 0.0;
        let b = SynthClassSpec { class_label: 2, ..a.clone() };
        let ws = synth_generate(&[a, b], &config(1)).unwrap();
        assert!(ws.iter().all(|w| w.matrix.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let specs = synth_family(5, 6, 100.0, 3);
        let a = synth_generate(&specs, &config(7)).unwrap();
        let b = synth_generate(&specs, &config(7)).unwrap();
        assert_eq!(a, b);
        let c = synth_generate(&specs, &config(8)).unwrap();
        assert_ne!(a, c);
        assert_eq!(synth_family(5, 6, 100.0, 3), specs);
    }

    #[test]
    fn nyquist_and_count_checks() {
        let mut bad = spec(1, vec![1.0; 6]);
        bad.band = (10.0, 60.0);
        let err = synth_generate(&[bad, spec(2, vec![1.0; 6])], &config(0)).unwrap_err();
        assert!(err.to_string().contains("Nyquist"), "{err}");
        assert!(synth_generate(&[spec(1, vec![1.0; 6])], &config(0)).is_err());
        assert!(synth_generate(&[spec(1, vec![-1.0; 6]), spec(2, vec![1.0; 6])], &config(0)).is_err());
    }

    #[test]
    fn family_envelopes_are_distinct() {
        let specs = synth_family(52, 10, 100.0, 11);
        assert_eq!(specs.len(), 52);
        for (i, a) in specs.iter().enumerate() {
            assert_eq!(a.class_label, i as u32 + 1);
            for b in &specs[i + 1..] {
                assert!(a.envelope.iter().zip(&b.envelope).filter(|(x, y)| x != y).count() >= 2);
            }
        }
        let p = perturb_specs(&specs, 0.3, 1);
        assert_ne!(p[0].envelope, specs[0].envelope);
        assert!(p.iter().all(|s| s.envelope.iter().all(|&a| a > 0.0)));
    }

    #[test]
    fn recording_segments_back_into_runs() {
        let specs = synth_family(3, 4, 100.0, 2);
        let cfg = SynthConfig { channels: 4, ..config(5) };
        let rec = synth_recording(&specs, 10, 2, &cfg).unwrap();
        assert_eq!(rec.len(), 3 * 10 * 3 * 20);
        let seg = segment_windows(&rec, &WindowConfig::new(200.0)).unwrap();
        assert_eq!(seg.windows.len(), 3 * 10 * 2);
        let reps: Vec<u32> = seg.windows.iter().take(6).map(|w| w.repetition).collect();
        assert_eq!(reps, vec![1, 1, 2, 2, 3, 3]);
    }
}

//! Shared fixtures for the engine benchmarks.

use myogate::classifier::CnnConfig;
use myogate::nn::{sample_gaussian, seeded_rng, Network, Tensor};

/// Window shape of the default synthetic source: 10 channels by 20 samples.
pub const CHANNELS: usize = 10;
pub const SAMPLES: usize = 20;
pub const CLASSES: usize = 10;

pub fn cnn(seed: u64) -> Network<f32> {
    CnnConfig::new(CHANNELS, SAMPLES, CLASSES, seed)
        .build()
        .expect("valid classifier shape")
}

pub fn window_batch(batch: usize, seed: u64) -> Tensor<f32> {
    let mut rng = seeded_rng(seed, 0);
    sample_gaussian(batch * CHANNELS * SAMPLES, &mut rng)
        .reshape(&[batch, 1, CHANNELS, SAMPLES])
        .expect("element count matches")
}

pub fn labels(batch: usize) -> Vec<usize> {
    (0..batch).map(|i| i % CLASSES).collect()
}

/// `n` scores with interleaved known/unknown labels and many ties.
pub fn scores(n: usize) -> Vec<(f64, bool)> {
    (0..n)
        .map(|i| (((i * 7919) % 1000) as f64 / 1000.0, (i * 31) % 3 != 0))
        .collect()
}

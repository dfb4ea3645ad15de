//! Deterministic random streams.
//!
//! Every random draw in the toolkit comes from ChaCha8 seeded with a 64-bit
//! seed (`SeedableRng::seed_from_u64`) and an explicit stream index, so
//! independent consumers (weight init, shuffling, noise, synthesis) never
//! share state. Gaussian draws use the ziggurat sampler of `rand_distr`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{Scalar, Tensor};

pub type StreamRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Mixes a base seed with a sequence of labels into a child seed
/// (SplitMix64 finalizer applied per component).
pub fn derive_seed(base: u64, labels: &[u64]) -> u64 {
    let mut z = base;
    for &label in labels {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(label);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

/// `count` i.i.d. standard normal values drawn from `rng`.
pub fn sample_gaussian<F: Scalar>(count: usize, rng: &mut StreamRng) -> Tensor<F> {
    Tensor::from_vec(
        (0..count)
            .map(|_| {
                let v: f64 = StandardNormal.sample(rng);
                F::from_f64(v)
            })
            .collect(),
    )
}

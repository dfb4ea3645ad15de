//! Central finite-difference verification of backpropagation (64-bit only).

use rand::seq::index::sample;

use super::loss::{batch_loss_with_signs, loss_and_gradients, Target};
use super::network::{Gradients, Network};
use super::rng::seeded_rng;
use super::Tensor;
use crate::error::Result;

/// Which weights to perturb.
#[derive(Clone, Copy, Debug)]
pub enum Coverage {
    All,
    /// At most this many entries per tensor, chosen with a seeded draw.
    PerTensor { limit: usize, seed: u64 },
}

#[derive(Clone, Debug)]
pub struct GradCheck {
    pub max_relative_error: f64,
    pub checked: usize,
    /// Entries left out because the perturbation flipped a rectifier input,
    /// where the difference quotient straddles a kink.
    pub skipped: usize,
    /// (layer, tensor, element) of the worst entry.
    pub worst: (usize, usize, usize),
    /// Backprop and finite-difference values at `worst`.
    pub worst_values: (f64, f64),
}

/// Relative error `|a − n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares backprop gradients of the mean batch loss with central
/// differences at steps `epsilon` and `epsilon / 2`, Richardson-extrapolated.
pub fn gradient_check(
    net: &Network<f64>,
    batch: &Tensor<f64>,
    target: Target<'_, f64>,
    epsilon: f64,
    coverage: Coverage,
) -> Result<GradCheck> {
    let (_, analytic) = loss_and_gradients(net, batch, target)?;
    compare_with_differences(net, &analytic, epsilon, coverage, |n| batch_loss_with_signs(n, batch, target))
}

/// Generic form: `objective` evaluates the scalar whose gradient `analytic`
/// claims to be, together with the rectifier sign pattern of every forward
/// pass involved (see [`Network::forward_with_signs`]). Entries whose
/// perturbations change that pattern are counted in `skipped`.
pub fn compare_with_differences(
    net: &Network<f64>,
    analytic: &Gradients<f64>,
    epsilon: f64,
    coverage: Coverage,
    mut objective: impl FnMut(&Network<f64>) -> Result<(f64, Vec<bool>)>,
) -> Result<GradCheck> {
    let mut probe = net.clone();
    let (_, base) = objective(net)?;
    let mut report = GradCheck {
        max_relative_error: 0.0,
        checked: 0,
        skipped: 0,
        worst: (0, 0, 0),
        worst_values: (0.0, 0.0),
    };
    for li in 0..net.params().len() {
        for pi in 0..net.params()[li].len() {
            let len = net.params()[li][pi].len();
            let indices: Vec<usize> = match coverage {
                Coverage::All => (0..len).collect(),
                Coverage::PerTensor { limit, seed } if limit < len => {
                    let mut rng = seeded_rng(seed, (li * 16 + pi) as u64);
                    let mut picked = sample(&mut rng, len, limit).into_vec();
                    picked.sort_unstable();
                    picked
                }
                Coverage::PerTensor { .. } => (0..len).collect(),
            };
            for idx in indices {
                let original = net.params()[li][pi].data()[idx];
                let mut central = [0.0; 2];
                let mut kink = false;
                for (slot, h) in [epsilon, epsilon / 2.0].into_iter().enumerate() {
                    probe.params_mut()[li][pi].data_mut()[idx] = original + h;
                    let (plus, plus_signs) = objective(&probe)?;
                    probe.params_mut()[li][pi].data_mut()[idx] = original - h;
                    let (minus, minus_signs) = objective(&probe)?;
                    kink |= plus_signs != base || minus_signs != base;
                    central[slot] = (plus - minus) / (2.0 * h);
                }
                probe.params_mut()[li][pi].data_mut()[idx] = original;
                if kink {
                    report.skipped += 1;
                    continue;
                }
                // Richardson extrapolation cancels the O(h²) term
                let numeric = (4.0 * central[1] - central[0]) / 3.0;
                let a = analytic.params[li][pi].data()[idx];
                let err = relative_error(a, numeric);
                report.checked += 1;
                if err > report.max_relative_error {
                    report.max_relative_error = err;
                    report.worst = (li, pi, idx);
                    report.worst_values = (a, numeric);
                }
            }
        }
    }
    Ok(report)
}

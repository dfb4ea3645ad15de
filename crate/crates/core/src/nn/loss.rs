//! Losses and their gradients. Probabilities are clamped to `[ε, 1−ε]`
//! before taking logs.

use super::layer::LayerSpec;
use super::network::{GradSeed, Gradients, Network};
use super::{Scalar, Tensor};
use crate::error::{Error, Result};

pub const EPSILON: f64 = 1e-7;

fn clamp(p: f64) -> f64 {
    p.clamp(EPSILON, 1.0 - EPSILON)
}

/// Binary cross-entropy of one probability against a 0/1 target.
pub fn bce_loss(prediction: f64, target: f64) -> Result<f64> {
    if target != 0.0 && target != 1.0 {
        return Err(Error::argument(format!("binary target must be 0 or 1, got {target}")));
    }
    let p = clamp(prediction);
    Ok(-(target * p.ln() + (1.0 - target) * (1.0 - p).ln()))
}

/// Categorical cross-entropy `−ln p[true_class]`.
pub fn cross_entropy_loss<F: Scalar>(probabilities: &[F], true_class: usize) -> Result<f64> {
    let p = probabilities.get(true_class).ok_or_else(|| {
        Error::argument(format!(
            "class index {true_class} out of range for {} classes",
            probabilities.len()
        ))
    })?;
    Ok(-clamp(p.as_f64()).ln())
}

/// Per-sample supervision for a batch.
#[derive(Clone, Copy, Debug)]
pub enum Target<'a, F> {
    /// Class index per sample, for a probability-vector output.
    Classes(&'a [usize]),
    /// 0/1 label per sample, for a single-probability output.
    Binary(&'a [F]),
    /// Regression target shaped like the output; loss is `½‖y − t‖²`.
    Values(&'a Tensor<F>),
}

/// Mean batch loss plus the gradient that seeds backpropagation.
#[derive(Clone, Debug)]
pub struct Objective<F> {
    pub loss: f64,
    pub grad: Tensor<F>,
    pub seed: GradSeed,
}

/// Evaluates the mean loss of `output` (shape `[B, n]`). When the network ends
/// in the matching probability head the gradient is fused with it and given
/// with respect to the logits.
pub fn objective<F: Scalar>(head: Option<&LayerSpec>, output: &Tensor<F>, target: Target<'_, F>) -> Result<Objective<F>> {
    let b = output.shape()[0];
    let n = output.len() / b;
    let inv_b = 1.0 / b as f64;
    let mut grad = Tensor::zeros(output.shape());
    let mut total = 0.0;
    let seed;
    match target {
        Target::Classes(labels) => {
            if labels.len() != b {
                return Err(Error::shape(&[b], &[labels.len()]));
            }
            let fused = matches!(head, Some(LayerSpec::Softmax));
            for (i, &label) in labels.iter().enumerate() {
                let row = output.row(i);
                total += cross_entropy_loss(row, label)?;
                let g = &mut grad.data_mut()[i * n..(i + 1) * n];
                if fused {
                    for (j, gv) in g.iter_mut().enumerate() {
                        let t = if j == label { 1.0 } else { 0.0 };
                        *gv = F::from_f64((row[j].as_f64() - t) * inv_b);
                    }
                } else {
                    let p = row[label].as_f64();
                    if p > EPSILON {
                        g[label] = F::from_f64(-inv_b / p);
                    }
                }
            }
            seed = if fused { GradSeed::Logits } else { GradSeed::Output };
        }
        Target::Binary(labels) => {
            if labels.len() != b || n != 1 {
                return Err(Error::shape(&[b, 1], output.shape()));
            }
            let fused = matches!(head, Some(LayerSpec::Sigmoid));
            for (i, &t) in labels.iter().enumerate() {
                let p = output.data()[i].as_f64();
                let t = t.as_f64();
                total += bce_loss(p, t)?;
                grad.data_mut()[i] = F::from_f64(if fused {
                    (p - t) * inv_b
                } else {
                    let pc = clamp(p);
                    (-t / pc + (1.0 - t) / (1.0 - pc)) * inv_b
                });
            }
            seed = if fused { GradSeed::Logits } else { GradSeed::Output };
        }
        Target::Values(t) => {
            if t.shape() != output.shape() {
                return Err(Error::shape(output.shape(), t.shape()));
            }
            for ((g, y), tv) in grad.data_mut().iter_mut().zip(output.data()).zip(t.data()) {
                let d = y.as_f64() - tv.as_f64();
                total += 0.5 * d * d;
                *g = F::from_f64(d * inv_b);
            }
            seed = GradSeed::Output;
        }
    }
    Ok(Objective {
        loss: total * inv_b,
        grad,
        seed,
    })
}

/// Mean batch loss and its gradient with respect to every weight.
pub fn loss_and_gradients<F: Scalar>(
    net: &Network<F>,
    batch: &Tensor<F>,
    target: Target<'_, F>,
) -> Result<(f64, Gradients<F>)> {
    let mut session = net.session();
    let output = session.forward(batch)?.clone();
    let obj = objective(net.head(), &output, target)?;
    let grads = session.backward(&obj.grad, obj.seed)?;
    Ok((obj.loss, grads))
}

/// Mean batch loss without gradients.
pub fn batch_loss<F: Scalar>(net: &Network<F>, batch: &Tensor<F>, target: Target<'_, F>) -> Result<f64> {
    let output = net.forward(batch)?;
    Ok(objective(net.head(), &output, target)?.loss)
}

/// [`batch_loss`] plus the rectifier sign pattern of the forward pass.
pub fn batch_loss_with_signs<F: Scalar>(
    net: &Network<F>,
    batch: &Tensor<F>,
    target: Target<'_, F>,
) -> Result<(f64, Vec<bool>)> {
    let (output, signs) = net.forward_with_signs(batch)?;
    Ok((objective(net.head(), &output, target)?.loss, signs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bce_values() {
        assert!((bce_loss(0.5, 1.0).unwrap() - std::f64::consts::LN_2).abs() < 1e-6);
        assert!(bce_loss(1.0 - EPSILON, 1.0).unwrap() < 1e-6);
        assert!((bce_loss(0.9, 0.0).unwrap() - 2.302585).abs() < 1e-6);
        assert!(bce_loss(0.5, 0.5).is_err());
        // clamping keeps the log finite
        assert!(bce_loss(0.0, 1.0).unwrap().is_finite());
    }

    #[test]
    fn cross_entropy_values() {
        let uniform = [1.0f64 / 6.0; 6];
        assert!((cross_entropy_loss(&uniform, 4).unwrap() - 1.791759).abs() < 1e-6);
        assert!(cross_entropy_loss(&[0.0f64, 1.0, 0.0], 1).unwrap() < 1e-6);
        assert!((cross_entropy_loss(&[0.7f64, 0.2, 0.1], 1).unwrap() - 1.609438).abs() < 1e-6);
        assert!(matches!(cross_entropy_loss(&[0.5f64, 0.5], 2), Err(Error::Argument(_))));
    }

    #[test]
    fn dense_squared_error_closed_form() {
        // y = W x + b, L = ½‖y − t‖²  ⇒  dW = (y − t) xᵀ, db = y − t
        let w = Tensor::<f64>::new(&[2, 2], vec![1.0, 2.0, -1.0, 0.5]).unwrap();
        let b = Tensor::from_vec(vec![0.1, -0.2]);
        let net = Network::from_parts(&[2], vec![LayerSpec::Dense { inputs: 2, outputs: 2 }], vec![vec![w, b]], 0).unwrap();
        let x = Tensor::new(&[1, 2], vec![3.0, -1.0]).unwrap();
        let t = Tensor::new(&[1, 2], vec![0.0, 1.0]).unwrap();
        let (loss, g) = loss_and_gradients(&net, &x, Target::Values(&t)).unwrap();
        // y = [1.1, -3.7], r = y − t = [1.1, -4.7]
        let r = [1.1, -4.7];
        assert!((loss - 0.5 * (r[0] * r[0] + r[1] * r[1])).abs() < 1e-12);
        let expected_w = [r[0] * 3.0, r[0] * -1.0, r[1] * 3.0, r[1] * -1.0];
        for (a, e) in g.params[0][0].data().iter().zip(expected_w) {
            assert!((a - e).abs() < 1e-12);
        }
        for (a, e) in g.params[0][1].data().iter().zip(r) {
            assert!((a - e).abs() < 1e-12);
        }
        assert_eq!(g.input.data().len(), 2);
    }

    #[test]
    fn zero_loss_gives_zero_gradients() {
        let net = Network::<f64>::new(
            &[3],
            vec![LayerSpec::Dense { inputs: 3, outputs: 2 }, LayerSpec::LeakyRelu { slope: 0.2 }],
            4,
        )
        .unwrap();
        let x = Tensor::new(&[2, 3], vec![0.3, -0.2, 0.9, 1.0, 0.0, -0.5]).unwrap();
        let target = net.forward(&x).unwrap();
        let (loss, g) = loss_and_gradients(&net, &x, Target::Values(&target)).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.is_zero());
    }

    #[test]
    fn label_out_of_range_rejected() {
        let out = Tensor::<f32>::new(&[1, 2], vec![0.5, 0.5]).unwrap();
        assert!(objective(Some(&LayerSpec::Softmax), &out, Target::Classes(&[3])).is_err());
        assert!(objective(Some(&LayerSpec::Softmax), &out, Target::Classes(&[0, 1])).is_err());
    }
}

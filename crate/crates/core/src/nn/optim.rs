use super::network::{Gradients, Network};
use super::{Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Algorithm {
    Sgd,
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl Algorithm {
    pub fn adam(beta1: f64, beta2: f64) -> Self {
        Algorithm::Adam {
            beta1,
            beta2,
            epsilon: 1e-8,
        }
    }
}

/// Optimizer state for one network. Moment tensors are allocated lazily on
/// the first step and mirror the network's parameter layout.
#[derive(Clone, Debug)]
pub struct Optimizer<F = f32> {
    algorithm: Algorithm,
    learning_rate: f64,
    first: Vec<Vec<Tensor<F>>>,
    second: Vec<Vec<Tensor<F>>>,
    step: u64,
}

impl<F: Scalar> Optimizer<F> {
    pub fn new(algorithm: Algorithm, learning_rate: f64) -> Self {
        Optimizer {
            algorithm,
            learning_rate,
            first: Vec::new(),
            second: Vec::new(),
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn step(&mut self, net: &mut Network<F>, grads: &Gradients<F>) -> Result<()> {
        check_layout(net, grads)?;
        self.step += 1;
        let lr = self.learning_rate;
        match self.algorithm {
            Algorithm::Sgd => {
                let lr = F::from_f64(lr);
                for (group, g_group) in net.params_mut().iter_mut().zip(&grads.params) {
                    for (w, g) in group.iter_mut().zip(g_group) {
                        for (wv, gv) in w.data_mut().iter_mut().zip(g.data()) {
                            *wv -= lr * *gv;
                        }
                    }
                }
            }
            Algorithm::Adam {
                beta1,
                beta2,
                epsilon,
            } => {
                if self.first.is_empty() {
                    let zeros: Vec<Vec<Tensor<F>>> = net
                        .params()
                        .iter()
                        .map(|g| g.iter().map(|t| Tensor::zeros(t.shape())).collect())
                        .collect();
                    self.first = zeros.clone();
                    self.second = zeros;
                }
                let t = self.step as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                let (b1, b2) = (F::from_f64(beta1), F::from_f64(beta2));
                let (one_b1, one_b2) = (F::from_f64(1.0 - beta1), F::from_f64(1.0 - beta2));
                let step_size = F::from_f64(lr / c1);
                let inv_sqrt_c2 = F::from_f64(1.0 / c2.sqrt());
                let eps = F::from_f64(epsilon);
                for (li, group) in net.params_mut().iter_mut().enumerate() {
                    for (pi, w) in group.iter_mut().enumerate() {
                        let g = grads.params[li][pi].data();
                        let m = self.first[li][pi].data_mut();
                        let v = self.second[li][pi].data_mut();
                        for (((wv, gv), mv), vv) in w.data_mut().iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                            *mv = b1 * *mv + one_b1 * *gv;
                            *vv = b2 * *vv + one_b2 * *gv * *gv;
                            *wv -= step_size * *mv / (vv.sqrt() * inv_sqrt_c2 + eps);
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

fn check_layout<F: Scalar>(net: &Network<F>, grads: &Gradients<F>) -> Result<()> {
    if grads.params.len() != net.params().len() {
        return Err(Error::config("gradient layout does not match the network"));
    }
    for (group, g_group) in net.params().iter().zip(&grads.params) {
        if group.len() != g_group.len() {
            return Err(Error::config("gradient layout does not match the network"));
        }
        for (w, g) in group.iter().zip(g_group) {
            if w.shape() != g.shape() {
                return Err(Error::shape(w.shape(), g.shape()));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::LayerSpec;

    fn scalar_net(w: f32) -> Network<f32> {
        Network::from_parts(
            &[1],
            vec![LayerSpec::Dense { inputs: 1, outputs: 1 }],
            vec![vec![Tensor::from_vec(vec![w]).reshape(&[1, 1]).unwrap(), Tensor::zeros(&[1])]],
            0,
        )
        .unwrap()
    }

    fn grads(g: f32) -> Gradients<f32> {
        Gradients {
            params: vec![vec![Tensor::filled(&[1, 1], g), Tensor::filled(&[1], g)]],
            input: Tensor::zeros(&[1]),
        }
    }

    #[test]
    fn sgd_update() {
        let mut net = scalar_net(1.0);
        let mut opt = Optimizer::new(Algorithm::Sgd, 0.1);
        opt.step(&mut net, &grads(2.0)).unwrap();
        assert!((net.params()[0][0].data()[0] - 0.8).abs() < 1e-7);
        assert_eq!(opt.steps(), 1);
    }

    #[test]
    fn zero_gradients_leave_weights() {
        for algo in [Algorithm::Sgd, Algorithm::adam(0.9, 0.999)] {
            let mut net = scalar_net(0.3);
            let before = net.clone();
            let mut opt = Optimizer::new(algo, 0.01);
            opt.step(&mut net, &grads(0.0)).unwrap();
            assert_eq!(net, before);
        }
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let mut net = scalar_net(0.5);
        let mut opt = Optimizer::new(Algorithm::adam(0.9, 0.999), 0.001);
        opt.step(&mut net, &grads(1.0)).unwrap();
        assert!((net.params()[0][0].data()[0] - 0.499).abs() < 1e-7);
        assert!((net.params()[0][1].data()[0] + 0.001).abs() < 1e-7);
        opt.step(&mut net, &grads(1.0)).unwrap();
        assert_eq!(opt.steps(), 2);
    }

    #[test]
    fn mismatched_gradients_rejected() {
        let mut net = scalar_net(0.5);
        let bad = Gradients {
            params: vec![vec![Tensor::filled(&[2, 1], 1.0), Tensor::filled(&[1], 1.0)]],
            input: Tensor::zeros(&[1]),
        };
        assert!(Optimizer::new(Algorithm::Sgd, 0.1).step(&mut net, &bad).is_err());
    }
}

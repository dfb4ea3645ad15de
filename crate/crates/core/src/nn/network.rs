use rand::Rng;

use super::layer::{
    conv_backward_batch, conv_forward_batch, dense_backward_batch, dense_forward_batch, sigmoid,
    softmax_in_place, LayerSpec,
};
use super::rng::seeded_rng;
use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// A sequential stack of layers with their trainable tensors.
///
/// Parameters are stored per layer as `[weights, bias]` for conv/dense layers
/// and as an empty list for parameter-free layers.
#[derive(Clone, Debug, PartialEq)]
pub struct Network<F = f32> {
    input_shape: Vec<usize>,
    layers: Vec<LayerSpec>,
    params: Vec<Vec<Tensor<F>>>,
    seed: u64,
}

/// Where an externally supplied gradient enters the network.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GradSeed {
    /// Gradient with respect to the network output.
    Output,
    /// Gradient with respect to the input of the final sigmoid/softmax head,
    /// i.e. the logits. Used for fused loss gradients.
    Logits,
}

/// Gradient of a scalar objective with respect to every trainable tensor
/// (mirroring [`Network::params`]) and to the network input.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<F = f32> {
    pub params: Vec<Vec<Tensor<F>>>,
    pub input: Tensor<F>,
}

impl<F: Scalar> Gradients<F> {
    pub fn is_zero(&self) -> bool {
        self.params
            .iter()
            .flatten()
            .all(|t| t.data().iter().all(|v| *v == F::zero()))
    }
}

fn check_layers(input_shape: &[usize], layers: &[LayerSpec]) -> Result<()> {
    if layers.is_empty() {
        return Err(Error::config("a network needs at least one layer"));
    }
    let mut shape = input_shape.to_vec();
    for (i, layer) in layers.iter().enumerate() {
        shape = layer.output_shape(&shape).map_err(|e| match e {
            Error::Shape { expected, found } => Error::Config(format!(
                "layer {i} ({layer}) expects input {expected:?}, previous layer produces {found:?}"
            )),
            other => other,
        })?;
    }
    Ok(())
}

impl<F: Scalar> Network<F> {
    /// Builds a network and initializes weights uniformly in
    /// `±sqrt(6 / fan_in)` from the given seed; biases start at zero.
    pub fn new(input_shape: &[usize], layers: Vec<LayerSpec>, seed: u64) -> Result<Self> {
        check_layers(input_shape, &layers)?;
        let mut rng = seeded_rng(seed, 0);
        let params = layers
            .iter()
            .map(|layer| {
                let shapes = layer.param_shapes();
                if shapes.is_empty() {
                    return Vec::new();
                }
                let bound = (6.0 / layer.fan_in() as f64).sqrt();
                let n: usize = shapes[0].iter().product();
                let weights = (0..n)
                    .map(|_| F::from_f64(rng.random_range(-bound..bound)))
                    .collect();
                vec![
                    Tensor::new(&shapes[0], weights).expect("shape product"),
                    Tensor::zeros(&shapes[1]),
                ]
            })
            .collect();
        Ok(Network {
            input_shape: input_shape.to_vec(),
            layers,
            params,
            seed,
        })
    }

    pub fn from_parts(
        input_shape: &[usize],
        layers: Vec<LayerSpec>,
        params: Vec<Vec<Tensor<F>>>,
        seed: u64,
    ) -> Result<Self> {
        check_layers(input_shape, &layers)?;
        if params.len() != layers.len() {
            return Err(Error::config(format!(
                "{} parameter groups for {} layers",
                params.len(),
                layers.len()
            )));
        }
        for (layer, group) in layers.iter().zip(&params) {
            let shapes = layer.param_shapes();
            if shapes.len() != group.len() {
                return Err(Error::config(format!("wrong parameter count for {layer}")));
            }
            for (s, t) in shapes.iter().zip(group) {
                if s.as_slice() != t.shape() {
                    return Err(Error::shape(s, t.shape()));
                }
            }
        }
        Ok(Network {
            input_shape: input_shape.to_vec(),
            layers,
            params,
            seed,
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &[Vec<Tensor<F>>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Vec<Tensor<F>>] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().flatten().map(Tensor::len).sum()
    }

    pub fn output_shape(&self) -> Vec<usize> {
        self.layers.iter().fold(self.input_shape.clone(), |s, l| {
            l.output_shape(&s).expect("validated at construction")
        })
    }

    pub fn head(&self) -> Option<&LayerSpec> {
        self.layers.last().filter(|l| l.is_head())
    }

    pub fn cast<G: Scalar>(&self) -> Network<G> {
        Network {
            input_shape: self.input_shape.clone(),
            layers: self.layers.clone(),
            params: self
                .params
                .iter()
                .map(|g| g.iter().map(Tensor::cast).collect())
                .collect(),
            seed: self.seed,
        }
    }

    fn check_batch(&self, batch: &Tensor<F>) -> Result<()> {
        let shape = batch.shape();
        if shape.len() != self.input_shape.len() + 1 || shape[1..] != self.input_shape[..] || shape[0] == 0 {
            let mut expected = vec![shape.first().copied().unwrap_or(1).max(1)];
            expected.extend_from_slice(&self.input_shape);
            return Err(Error::shape(&expected, shape));
        }
        Ok(())
    }

    /// Forward pass over a batch `[B, input_shape...]`.
    pub fn forward(&self, batch: &Tensor<F>) -> Result<Tensor<F>> {
        self.check_batch(batch)?;
        let mut x = batch.clone();
        for i in 0..self.layers.len() {
            x = self.layer_forward(i, &x);
        }
        if !x.is_finite() {
            return Err(Error::NonFinite("forward pass"));
        }
        Ok(x)
    }

    /// Forward pass that also reports, for every ReLU and leaky ReLU input
    /// element, whether it is positive.
    pub fn forward_with_signs(&self, batch: &Tensor<F>) -> Result<(Tensor<F>, Vec<bool>)> {
        self.check_batch(batch)?;
        let mut x = batch.clone();
        let mut signs = Vec::new();
        for i in 0..self.layers.len() {
            if matches!(self.layers[i], LayerSpec::Relu | LayerSpec::LeakyRelu { .. }) {
                signs.extend(x.data().iter().map(|&v| v > F::zero()));
            }
            x = self.layer_forward(i, &x);
        }
        if !x.is_finite() {
            return Err(Error::NonFinite("forward pass"));
        }
        Ok((x, signs))
    }

    /// Forward pass of a single sample (no batch axis).
    pub fn forward_one(&self, sample: &Tensor<F>) -> Result<Tensor<F>> {
        let mut shape = vec![1];
        shape.extend_from_slice(sample.shape());
        let out = self.forward(&sample.clone().reshape(&shape)?)?;
        let out_shape = out.shape()[1..].to_vec();
        out.reshape(&out_shape)
    }

    pub fn session(&self) -> Session<'_, F> {
        Session {
            net: self,
            cache: None,
        }
    }

    fn layer_forward(&self, i: usize, x: &Tensor<F>) -> Tensor<F> {
        let p = &self.params[i];
        match self.layers[i] {
            LayerSpec::Conv2d { .. } => conv_forward_batch(x, &p[0], &p[1]),
            LayerSpec::Dense { .. } => dense_forward_batch(x, &p[0], &p[1]),
            LayerSpec::Relu => x.map(|v| if v > F::zero() { v } else { F::zero() }),
            LayerSpec::LeakyRelu { slope } => {
                let slope = F::from_f64(slope as f64);
                x.map(|v| if v > F::zero() { v } else { v * slope })
            }
            LayerSpec::Sigmoid => x.map(sigmoid),
            LayerSpec::Softmax => {
                let mut y = x.clone();
                let n = y.shape()[1];
                y.data_mut().chunks_mut(n).for_each(softmax_in_place);
                y
            }
            LayerSpec::Flatten => {
                let b = x.shape()[0];
                x.clone().reshape(&[b, x.len() / b]).expect("same element count")
            }
        }
    }
}

/// Forward/backward state for one batch. Backpropagation is only possible
/// after a forward pass on the same session.
pub struct Session<'n, F: Scalar> {
    net: &'n Network<F>,
    /// Input to every layer, followed by the final output.
    cache: Option<Vec<Tensor<F>>>,
}

impl<'n, F: Scalar> Session<'n, F> {
    pub fn forward(&mut self, batch: &Tensor<F>) -> Result<&Tensor<F>> {
        self.net.check_batch(batch)?;
        let mut acts = Vec::with_capacity(self.net.layers.len() + 1);
        acts.push(batch.clone());
        for i in 0..self.net.layers.len() {
            let next = self.net.layer_forward(i, acts.last().expect("non-empty"));
            acts.push(next);
        }
        if !acts.last().expect("non-empty").is_finite() {
            return Err(Error::NonFinite("forward pass"));
        }
        self.cache = Some(acts);
        Ok(self.output().expect("just cached"))
    }

    pub fn output(&self) -> Option<&Tensor<F>> {
        self.cache.as_ref().and_then(|c| c.last())
    }

    /// Backpropagates `grad` (shaped like the output, or like the logits for
    /// [`GradSeed::Logits`]) through the cached batch.
    pub fn backward(&self, grad: &Tensor<F>, seed: GradSeed) -> Result<Gradients<F>> {
        let acts = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::State("backward called before forward".into()))?;
        let net = self.net;
        let mut top = net.layers.len();
        if seed == GradSeed::Logits {
            if net.head().is_none() {
                return Err(Error::State(
                    "logit gradients require a sigmoid or softmax head".into(),
                ));
            }
            top -= 1;
        }
        if grad.shape() != acts[top].shape() {
            return Err(Error::shape(acts[top].shape(), grad.shape()));
        }
        let mut params: Vec<Vec<Tensor<F>>> = net
            .params
            .iter()
            .map(|g| g.iter().map(|t| Tensor::zeros(t.shape())).collect())
            .collect();
        let mut g = grad.clone();
        for i in (0..top).rev() {
            let x = &acts[i];
            let y = &acts[i + 1];
            g = match net.layers[i] {
                LayerSpec::Conv2d { .. } => {
                    let (d_in, d_k, d_b) = conv_backward_batch(x, &net.params[i][0], &g);
                    params[i] = vec![d_k, d_b];
                    d_in
                }
                LayerSpec::Dense { .. } => {
                    let (d_in, d_w, d_b) = dense_backward_batch(x, &net.params[i][0], &g);
                    params[i] = vec![d_w, d_b];
                    d_in
                }
                LayerSpec::Relu => zip_map(&g, x, |gv, xv| if xv > F::zero() { gv } else { F::zero() }),
                LayerSpec::LeakyRelu { slope } => {
                    let slope = F::from_f64(slope as f64);
                    zip_map(&g, x, |gv, xv| if xv > F::zero() { gv } else { gv * slope })
                }
                LayerSpec::Sigmoid => zip_map(&g, y, |gv, yv| gv * yv * (F::one() - yv)),
                LayerSpec::Softmax => {
                    let n = y.shape()[1];
                    let mut d = g.clone();
                    for (drow, yrow) in d.data_mut().chunks_mut(n).zip(y.data().chunks(n)) {
                        let dot: F = drow.iter().zip(yrow).map(|(a, b)| *a * *b).sum();
                        for (dv, yv) in drow.iter_mut().zip(yrow) {
                            *dv = *yv * (*dv - dot);
                        }
                    }
                    d
                }
                LayerSpec::Flatten => g.reshape(x.shape()).expect("same element count"),
            };
        }
        let grads = Gradients { params, input: g };
        if !grads.input.is_finite() || !grads.params.iter().flatten().all(Tensor::is_finite) {
            return Err(Error::NonFinite("backward pass"));
        }
        Ok(grads)
    }
}

fn zip_map<F: Scalar>(a: &Tensor<F>, b: &Tensor<F>, f: impl Fn(F, F) -> F) -> Tensor<F> {
    let data = a.data().iter().zip(b.data()).map(|(x, y)| f(*x, *y)).collect();
    Tensor::new(a.shape(), data).expect("same shape")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mlp(seed: u64) -> Network<f64> {
        Network::new(
            &[3],
            vec![
                LayerSpec::Dense { inputs: 3, outputs: 4 },
                LayerSpec::LeakyRelu { slope: 0.2 },
                LayerSpec::Dense { inputs: 4, outputs: 2 },
                LayerSpec::Softmax,
            ],
            seed,
        )
        .unwrap()
    }

    #[test]
    fn incompatible_layers_rejected() {
        let err = Network::<f32>::new(
            &[1, 4, 4],
            vec![LayerSpec::Conv2d { in_channels: 1, kernels: 2 }, LayerSpec::Dense { inputs: 32, outputs: 2 }],
            0,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
        let ok = Network::<f32>::new(
            &[1, 4, 4],
            vec![
                LayerSpec::Conv2d { in_channels: 1, kernels: 2 },
                LayerSpec::Flatten,
                LayerSpec::Dense { inputs: 32, outputs: 2 },
            ],
            0,
        )
        .unwrap();
        assert_eq!(ok.output_shape(), vec![2]);
    }

    #[test]
    fn backward_before_forward_is_a_state_error() {
        let net = mlp(1);
        let session = net.session();
        let err = session.backward(&Tensor::zeros(&[1, 2]), GradSeed::Output).unwrap_err();
        assert!(matches!(err, Error::State(_)));
    }

    #[test]
    fn same_seed_same_weights() {
        assert_eq!(mlp(9), mlp(9));
        assert_ne!(mlp(9), mlp(10));
    }

    #[test]
    fn conv_preserves_spatial_shape() {
        for (h, w) in [(1, 1), (2, 7), (10, 20)] {
            let net = Network::<f32>::new(&[3, h, w], vec![LayerSpec::Conv2d { in_channels: 3, kernels: 5 }], 0).unwrap();
            let out = net.forward(&Tensor::filled(&[2, 3, h, w], 0.5)).unwrap();
            assert_eq!(out.shape(), &[2, 5, h, w]);
        }
    }

    #[test]
    fn batch_shape_checked() {
        let net = mlp(0);
        assert!(net.forward(&Tensor::zeros(&[2, 4])).is_err());
        assert!(net.forward(&Tensor::zeros(&[0, 3])).is_err());
        let out = net.forward(&Tensor::zeros(&[5, 3])).unwrap();
        assert_eq!(out.shape(), &[5, 2]);
    }
}

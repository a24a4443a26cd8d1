use rand::Rng;
use serde::{Deserialize, Serialize};

use super::loss::softmax;
use super::matrix::Matrix;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    Softmax,
    /// ln(1 + eᶻ), a smooth nonnegative output.
    Softplus,
}

/// Network topology and regularization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub layer_sizes: Vec<usize>,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
    /// Inverted-dropout rate applied to hidden-layer outputs.
    pub dropout_rate: f64,
}

impl MlpSpec {
    pub fn new(layer_sizes: Vec<usize>, output_activation: Activation) -> Self {
        Self {
            layer_sizes,
            hidden_activation: Activation::Relu,
            output_activation,
            dropout_rate: 0.0,
        }
    }

    pub fn with_dropout(mut self, rate: f64) -> Self {
        self.dropout_rate = rate;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(Error::Config(
                "an MLP needs at least two layer sizes".into(),
            ));
        }
        if self.layer_sizes.contains(&0) {
            return Err(Error::Config("layer sizes must be positive".into()));
        }
        if self.hidden_activation != Activation::Relu {
            return Err(Error::Config("hidden activation must be relu".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }
}

/// One affine layer; weights have shape `(out, in)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weights: Matrix::zeros(outputs, inputs),
            bias: vec![0.0; outputs],
        }
    }

    fn param_count(&self) -> usize {
        self.weights.as_slice().len() + self.bias.len()
    }
}

/// How dropout behaves during a forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
    /// Inference with dropout kept active (Monte Carlo sampling).
    Stochastic,
}

/// Everything `backward` needs from the matching `forward` call.
#[derive(Debug, Clone)]
pub struct ActivationCache {
    version: u64,
    shape: Vec<usize>,
    /// Input to each layer (after activation and dropout of the previous one).
    layer_inputs: Vec<Vec<f64>>,
    pre_activations: Vec<Vec<f64>>,
    /// Per hidden layer: multiplicative dropout mask, `None` when inactive.
    masks: Vec<Option<Vec<f64>>>,
    output: Vec<f64>,
}

impl ActivationCache {
    pub fn output(&self) -> &[f64] {
        &self.output
    }

    pub fn pre_activations(&self) -> &[Vec<f64>] {
        &self.pre_activations
    }
}

/// Parameter-shaped gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn zeros_like(model: &MlpModel) -> Self {
        Self {
            layers: model
                .layers
                .iter()
                .map(|l| Dense::zeros(l.weights.cols(), l.weights.rows()))
                .collect(),
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weights
                .as_mut_slice()
                .iter_mut()
                .for_each(|w| *w *= factor);
            l.bias.iter_mut().for_each(|b| *b *= factor);
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.as_slice().iter().chain(&l.bias).copied())
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.flat().iter().all(|g| *g == 0.0)
    }

    pub(crate) fn shape(&self) -> Vec<(usize, usize)> {
        self.layers
            .iter()
            .map(|l| (l.weights.rows(), l.weights.cols()))
            .collect()
    }
}

/// A feed-forward MLP with relu hidden layers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MlpModel {
    spec: MlpSpec,
    layers: Vec<Dense>,
    /// Bumped on every parameter mutation; activation caches record it.
    #[serde(skip)]
    version: u64,
}

impl PartialEq for MlpModel {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec && self.layers == other.layers
    }
}

impl MlpModel {
    /// Uniform `±1/√fan_in` weights, zero biases.
    pub fn new<R: Rng + ?Sized>(spec: MlpSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let layers = spec
            .layer_sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                let mut dense = Dense::zeros(fan_in, fan_out);
                for v in dense.weights.as_mut_slice() {
                    *v = rng.random_range(-bound..bound);
                }
                dense
            })
            .collect();
        Ok(Self {
            spec,
            layers,
            version: 0,
        })
    }

    pub fn zeros(spec: MlpSpec) -> Result<Self> {
        spec.validate()?;
        let layers = spec
            .layer_sizes
            .windows(2)
            .map(|w| Dense::zeros(w[0], w[1]))
            .collect();
        Ok(Self {
            spec,
            layers,
            version: 0,
        })
    }

    pub fn from_layers(spec: MlpSpec, layers: Vec<Dense>) -> Result<Self> {
        spec.validate()?;
        if layers.len() != spec.layer_sizes.len() - 1 {
            return Err(Error::Shape {
                expected: spec.layer_sizes.len() - 1,
                got: layers.len(),
            });
        }
        for (l, w) in layers.iter().zip(spec.layer_sizes.windows(2)) {
            if l.weights.rows() != w[1] || l.weights.cols() != w[0] || l.bias.len() != w[1] {
                return Err(Error::Contract(format!(
                    "layer shape {}x{} (bias {}) does not match {} -> {}",
                    l.weights.rows(),
                    l.weights.cols(),
                    l.bias.len(),
                    w[0],
                    w[1]
                )));
            }
        }
        Ok(Self {
            spec,
            layers,
            version: 0,
        })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    /// Parameters flattened layer by layer, weights (row-major) then bias.
    pub fn params_flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.as_slice().iter().chain(&l.bias).copied())
            .collect()
    }

    /// Mutable visit of every parameter in `params_flat` order.
    pub fn for_each_param_mut(&mut self, mut f: impl FnMut(usize, &mut f64)) {
        let mut idx = 0;
        for l in &mut self.layers {
            for w in l.weights.as_mut_slice().iter_mut().chain(l.bias.iter_mut()) {
                f(idx, w);
                idx += 1;
            }
        }
        self.version += 1;
    }

    pub fn set_param(&mut self, index: usize, value: f64) {
        self.for_each_param_mut(|i, p| {
            if i == index {
                *p = value;
            }
        });
    }

    pub fn copy_params_from(&mut self, other: &MlpModel) -> Result<()> {
        if self.spec != other.spec {
            return Err(Error::Contract(
                "cannot copy parameters across specs".into(),
            ));
        }
        self.layers.clone_from(&other.layers);
        self.version += 1;
        Ok(())
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Dense] {
        self.version += 1;
        &mut self.layers
    }

    pub(crate) fn shape(&self) -> Vec<(usize, usize)> {
        self.layers
            .iter()
            .map(|l| (l.weights.rows(), l.weights.cols()))
            .collect()
    }

    /// Deterministic inference (dropout off).
    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let mut a = input.to_vec();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = layer.weights.matvec(&a);
            z.iter_mut().zip(&layer.bias).for_each(|(z, b)| *z += b);
            a = if i == last {
                apply_activation(self.spec.output_activation, &z)
            } else {
                apply_activation(Activation::Relu, &z)
            };
        }
        Ok(a)
    }

    pub fn forward<R: Rng + ?Sized>(
        &self,
        input: &[f64],
        mode: Mode,
        rng: &mut R,
    ) -> Result<(Vec<f64>, ActivationCache)> {
        self.check_input(input)?;
        let p = self.spec.dropout_rate;
        let dropout_on = p > 0.0 && matches!(mode, Mode::Train | Mode::Stochastic);
        let keep_scale = 1.0 / (1.0 - p);
        let n = self.layers.len();
        let mut layer_inputs = Vec::with_capacity(n);
        let mut pre_activations = Vec::with_capacity(n);
        let mut masks = Vec::with_capacity(n - 1);
        let mut a = input.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = layer.weights.matvec(&a);
            z.iter_mut().zip(&layer.bias).for_each(|(z, b)| *z += b);
            layer_inputs.push(std::mem::take(&mut a));
            if i + 1 == n {
                a = apply_activation(self.spec.output_activation, &z);
            } else {
                a = apply_activation(Activation::Relu, &z);
                if dropout_on {
                    let mask: Vec<f64> = (0..a.len())
                        .map(|_| {
                            if rng.random::<f64>() < p {
                                0.0
                            } else {
                                keep_scale
                            }
                        })
                        .collect();
                    a.iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
                    masks.push(Some(mask));
                } else {
                    masks.push(None);
                }
            }
            pre_activations.push(z);
        }
        let cache = ActivationCache {
            version: self.version,
            shape: self.spec.layer_sizes.clone(),
            layer_inputs,
            pre_activations,
            masks,
            output: a.clone(),
        };
        Ok((a, cache))
    }

    /// Gradients of the loss whose derivative w.r.t. the model output is
    /// `loss_grad`.
    pub fn backward(&self, cache: &ActivationCache, loss_grad: &[f64]) -> Result<Gradients> {
        let mut grads = Gradients::zeros_like(self);
        self.accumulate_backward(cache, loss_grad, &mut grads)?;
        Ok(grads)
    }

    pub fn accumulate_backward(
        &self,
        cache: &ActivationCache,
        loss_grad: &[f64],
        grads: &mut Gradients,
    ) -> Result<()> {
        if cache.shape != self.spec.layer_sizes {
            return Err(Error::Cache(format!(
                "cache recorded for layers {:?}, model has {:?}",
                cache.shape, self.spec.layer_sizes
            )));
        }
        if cache.version != self.version {
            return Err(Error::Cache(format!(
                "stale cache (model version {}, cache version {})",
                self.version, cache.version
            )));
        }
        if loss_grad.len() != self.spec.output_dim() {
            return Err(Error::Shape {
                expected: self.spec.output_dim(),
                got: loss_grad.len(),
            });
        }
        if grads.shape() != self.shape() {
            return Err(Error::Contract("gradient buffer shape mismatch".into()));
        }
        let n = self.layers.len();
        let mut delta = match self.spec.output_activation {
            Activation::Identity => loss_grad.to_vec(),
            Activation::Relu => relu_backward(&cache.pre_activations[n - 1], loss_grad),
            Activation::Softplus => cache.pre_activations[n - 1]
                .iter()
                .zip(loss_grad)
                .map(|(z, g)| g * sigmoid(*z))
                .collect(),
            Activation::Softmax => {
                let y = &cache.output;
                let dot: f64 = y.iter().zip(loss_grad).map(|(y, g)| y * g).sum();
                y.iter()
                    .zip(loss_grad)
                    .map(|(y, g)| y * (g - dot))
                    .collect()
            }
        };
        for i in (0..n).rev() {
            let g = &mut grads.layers[i];
            g.weights.add_outer(&delta, &cache.layer_inputs[i]);
            g.bias.iter_mut().zip(&delta).for_each(|(b, d)| *b += d);
            if i > 0 {
                let mut upstream = self.layers[i].weights.matvec_transposed(&delta);
                if let Some(mask) = &cache.masks[i - 1] {
                    upstream.iter_mut().zip(mask).for_each(|(u, m)| *u *= m);
                }
                delta = relu_backward(&cache.pre_activations[i - 1], &upstream);
            }
        }
        Ok(())
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.spec.input_dim() {
            return Err(Error::Shape {
                expected: self.spec.input_dim(),
                got: input.len(),
            });
        }
        Ok(())
    }
}

fn apply_activation(act: Activation, z: &[f64]) -> Vec<f64> {
    match act {
        Activation::Identity => z.to_vec(),
        Activation::Relu => z.iter().map(|v| v.max(0.0)).collect(),
        Activation::Softmax => softmax(z),
        Activation::Softplus => z.iter().map(|&v| softplus(v)).collect(),
    }
}

fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn relu_backward(z: &[f64], upstream: &[f64]) -> Vec<f64> {
    z.iter()
        .zip(upstream)
        .map(|(z, g)| if *z > 0.0 { *g } else { 0.0 })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn rng() -> crate::rng::SeedRng {
        stream(1, "mlp-test", 0)
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(MlpModel::zeros(MlpSpec::new(vec![3], Activation::Identity)).is_err());
        assert!(
            MlpModel::zeros(MlpSpec::new(vec![3, 2], Activation::Identity).with_dropout(1.0))
                .is_err()
        );
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let m = MlpModel::zeros(MlpSpec::new(vec![4, 5, 3], Activation::Identity)).unwrap();
        let (y, _) = m
            .forward(&[1.0, -2.0, 3.0, 0.5], Mode::Infer, &mut rng())
            .unwrap();
        assert_eq!(y, vec![0.0; 3]);
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let spec = MlpSpec::new(vec![3, 3], Activation::Identity);
        let layer = Dense {
            weights: Matrix::identity(3),
            bias: vec![0.0; 3],
        };
        let m = MlpModel::from_layers(spec, vec![layer]).unwrap();
        let x = [0.25, -1.5, 7.0];
        assert_eq!(
            m.forward(&x, Mode::Infer, &mut rng()).unwrap().0,
            x.to_vec()
        );
    }

    #[test]
    fn two_three_two_matches_hand_trace() {
        let spec = MlpSpec::new(vec![2, 3, 2], Activation::Identity);
        let mut r = stream(42, "hand-trace", 0);
        let m = MlpModel::new(spec, &mut r).unwrap();
        let l0 = &m.layers()[0];
        let l1 = &m.layers()[1];
        // Scalar oracle: explicit index loops.
        let x = [1.0, 1.0];
        let mut hidden = [0.0; 3];
        for j in 0..3 {
            let mut acc = l0.bias[j];
            for k in 0..2 {
                acc += l0.weights.get(j, k) * x[k];
            }
            hidden[j] = if acc > 0.0 { acc } else { 0.0 };
        }
        let mut expected = [0.0; 2];
        for i in 0..2 {
            let mut acc = l1.bias[i];
            for j in 0..3 {
                acc += l1.weights.get(i, j) * hidden[j];
            }
            expected[i] = acc;
        }
        let (y, _) = m.forward(&x, Mode::Infer, &mut rng()).unwrap();
        for i in 0..2 {
            assert!((y[i] - expected[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn input_shape_error() {
        let m = MlpModel::zeros(MlpSpec::new(vec![2, 2], Activation::Identity)).unwrap();
        assert!(matches!(
            m.forward(&[1.0], Mode::Infer, &mut rng()),
            Err(Error::Shape {
                expected: 2,
                got: 1
            })
        ));
    }

    #[test]
    fn zero_loss_grad_gives_zero_gradients() {
        let m = MlpModel::new(
            MlpSpec::new(vec![3, 4, 2], Activation::Identity),
            &mut rng(),
        )
        .unwrap();
        let (_, cache) = m
            .forward(&[0.1, 0.2, 0.3], Mode::Infer, &mut rng())
            .unwrap();
        assert!(m.backward(&cache, &[0.0, 0.0]).unwrap().is_zero());
    }

    #[test]
    fn linear_mse_gradient_is_closed_form() {
        let spec = MlpSpec::new(vec![3, 2], Activation::Identity);
        let m = MlpModel::new(spec, &mut rng()).unwrap();
        let x = [0.5, -1.0, 2.0];
        let y = [0.3, -0.7];
        let (pred, cache) = m.forward(&x, Mode::Infer, &mut rng()).unwrap();
        // Sum-of-squares loss so that dL/dpred = 2(ŷ − y).
        let g: Vec<f64> = pred.iter().zip(&y).map(|(p, t)| 2.0 * (p - t)).collect();
        let grads = m.backward(&cache, &g).unwrap();
        for i in 0..2 {
            for j in 0..3 {
                let expected = 2.0 * (pred[i] - y[i]) * x[j];
                assert!((grads.layers[0].weights.get(i, j) - expected).abs() < 1e-14);
            }
            assert!((grads.layers[0].bias[i] - 2.0 * (pred[i] - y[i])).abs() < 1e-14);
        }
    }

    #[test]
    fn stale_and_mismatched_caches_are_rejected() {
        let mut m = MlpModel::new(
            MlpSpec::new(vec![2, 3, 1], Activation::Identity),
            &mut rng(),
        )
        .unwrap();
        let other = MlpModel::new(
            MlpSpec::new(vec![2, 4, 1], Activation::Identity),
            &mut rng(),
        )
        .unwrap();
        let (_, cache) = m.forward(&[1.0, 2.0], Mode::Infer, &mut rng()).unwrap();
        let (_, foreign) = other.forward(&[1.0, 2.0], Mode::Infer, &mut rng()).unwrap();
        assert!(matches!(m.backward(&foreign, &[1.0]), Err(Error::Cache(_))));
        m.set_param(0, 0.5);
        assert!(matches!(m.backward(&cache, &[1.0]), Err(Error::Cache(_))));
    }

    #[test]
    fn infer_mode_ignores_dropout_and_train_mode_scales_survivors() {
        let spec = MlpSpec::new(vec![2, 50, 1], Activation::Identity).with_dropout(0.5);
        let m = MlpModel::new(spec, &mut rng()).unwrap();
        let x = [0.3, 0.9];
        let a = m.forward(&x, Mode::Infer, &mut rng()).unwrap().0;
        let b = m
            .forward(&x, Mode::Infer, &mut stream(9, "x", 0))
            .unwrap()
            .0;
        assert_eq!(a, b);
        let (_, cache) = m.forward(&x, Mode::Train, &mut rng()).unwrap();
        let mask = cache.masks[0].as_ref().unwrap();
        assert!(mask.iter().all(|v| *v == 0.0 || *v == 2.0));
        assert!(mask.contains(&0.0) && mask.contains(&2.0));
    }

    #[test]
    fn inverted_dropout_preserves_expectation() {
        // Single hidden unit feeding a unit-weight output.
        let spec = MlpSpec::new(vec![1, 1, 1], Activation::Identity).with_dropout(0.3);
        let layers = vec![
            Dense {
                weights: Matrix::from_vec(1, 1, vec![1.5]).unwrap(),
                bias: vec![0.25],
            },
            Dense {
                weights: Matrix::from_vec(1, 1, vec![1.0]).unwrap(),
                bias: vec![0.0],
            },
        ];
        let m = MlpModel::from_layers(spec, layers).unwrap();
        let infer = m.predict(&[1.0]).unwrap()[0];
        let mut r = stream(3, "dropout-expectation", 0);
        let n = 100_000;
        let mean: f64 = (0..n)
            .map(|_| m.forward(&[1.0], Mode::Train, &mut r).unwrap().0[0])
            .sum::<f64>()
            / n as f64;
        assert!(
            (mean - infer).abs() / infer < 0.01,
            "mean {mean} vs {infer}"
        );
    }
}

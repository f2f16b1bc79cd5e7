//! Multilayer perceptron with ReLU hidden layers and softmax cross-entropy.
//!
//! Parameters live in one flat vector so they can be clipped, randomized and
//! projected exactly like any other gradient-space vector. Layout, per layer in
//! order: the `fan_out x fan_in` weight matrix in row-major order followed by
//! the `fan_out` biases.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    #[default]
    CrossEntropy,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// Input dimension, hidden widths, number of classes.
    pub layer_sizes: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
    #[serde(default)]
    pub loss: LossKind,
}

#[derive(Debug, Clone, Copy)]
struct Layer {
    fan_in: usize,
    fan_out: usize,
    /// Start of the weight block inside the flat parameter vector.
    offset: usize,
}

impl Layer {
    fn bias_offset(&self) -> usize {
        self.offset + self.fan_in * self.fan_out
    }

    fn end(&self) -> usize {
        self.bias_offset() + self.fan_out
    }
}

impl ModelSpec {
    pub fn new(layer_sizes: Vec<usize>) -> Result<Self> {
        let spec = Self {
            layer_sizes,
            activation: Activation::Relu,
            loss: LossKind::CrossEntropy,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// `input -> hidden... -> classes`.
    pub fn mlp(input_dim: usize, hidden: &[usize], num_classes: usize) -> Result<Self> {
        let mut sizes = Vec::with_capacity(hidden.len() + 2);
        sizes.push(input_dim);
        sizes.extend_from_slice(hidden);
        sizes.push(num_classes);
        Self::new(sizes)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(Error::InvalidModel(format!(
                "need at least 2 layer sizes, got {}",
                self.layer_sizes.len()
            )));
        }
        if self.layer_sizes.contains(&0) {
            return Err(Error::InvalidModel("layer sizes must be positive".into()));
        }
        if self.num_classes() < 2 {
            return Err(Error::InvalidModel("output layer needs at least 2 classes".into()));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn num_classes(&self) -> usize {
        *self.layer_sizes.last().expect("validated spec is non-empty")
    }

    pub fn num_params(&self) -> usize {
        self.layer_sizes.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
    }

    fn layers(&self) -> impl Iterator<Item = Layer> + '_ {
        self.layer_sizes.windows(2).scan(0usize, |offset, w| {
            let layer = Layer {
                fan_in: w[0],
                fan_out: w[1],
                offset: *offset,
            };
            *offset = layer.end();
            Some(layer)
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub features: Vec<f64>,
    pub label: usize,
}

impl Example {
    pub fn new(features: Vec<f64>, label: usize) -> Self {
        Self { features, label }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    spec: ModelSpec,
    params: Vec<f64>,
}

/// Weights ~ N(0, 1/fan_in), biases zero.
pub fn init_params<R: Rng + ?Sized>(spec: &ModelSpec, rng: &mut R) -> Result<ModelState> {
    spec.validate()?;
    let mut params = vec![0.0; spec.num_params()];
    for layer in spec.layers() {
        let normal = Normal::new(0.0, 1.0 / (layer.fan_in as f64).sqrt()).expect("positive fan-in gives a valid scale");
        for w in &mut params[layer.offset..layer.bias_offset()] {
            *w = normal.sample(rng);
        }
    }
    Ok(ModelState {
        spec: spec.clone(),
        params,
    })
}

/// Forward-pass cache: pre-activations and activations of every layer.
struct Trace {
    /// `activations[0]` is the input, `activations[l]` the output of layer `l`
    /// (post-ReLU for hidden layers, raw logits for the last one).
    activations: Vec<Vec<f64>>,
    /// Pre-activations of hidden layers only.
    pre: Vec<Vec<f64>>,
}

impl ModelState {
    pub fn new(spec: ModelSpec, params: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        if params.len() != spec.num_params() {
            return Err(Error::DimensionMismatch {
                expected: spec.num_params(),
                got: params.len(),
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidParameter("model parameters must be finite".into()));
        }
        Ok(Self { spec, params })
    }

    pub fn zeros(spec: &ModelSpec) -> Result<Self> {
        Self::new(spec.clone(), vec![0.0; spec.num_params()])
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// Same architecture, new parameter vector.
    pub fn with_params(&self, params: Vec<f64>) -> Result<Self> {
        Self::new(self.spec.clone(), params)
    }

    fn check_example(&self, x: &Example) -> Result<()> {
        if x.features.len() != self.spec.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.spec.input_dim(),
                got: x.features.len(),
            });
        }
        if x.label >= self.spec.num_classes() {
            return Err(Error::LabelOutOfRange {
                label: x.label,
                classes: self.spec.num_classes(),
            });
        }
        Ok(())
    }

    fn forward(&self, input: &[f64]) -> Trace {
        let layers: Vec<Layer> = self.spec.layers().collect();
        let mut activations = Vec::with_capacity(layers.len() + 1);
        let mut pre = Vec::with_capacity(layers.len().saturating_sub(1));
        activations.push(input.to_vec());
        for (i, layer) in layers.iter().enumerate() {
            let a = activations.last().expect("input pushed above");
            let weights = &self.params[layer.offset..layer.bias_offset()];
            let bias = &self.params[layer.bias_offset()..layer.end()];
            let z: Vec<f64> = weights
                .chunks_exact(layer.fan_in)
                .zip(bias)
                .map(|(row, b)| dot(row, a) + b)
                .collect();
            if i + 1 == layers.len() {
                activations.push(z);
            } else {
                activations.push(z.iter().map(|&v| v.max(0.0)).collect());
                pre.push(z);
            }
        }
        Trace { activations, pre }
    }

    pub fn logits(&self, features: &[f64]) -> Result<Vec<f64>> {
        if features.len() != self.spec.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.spec.input_dim(),
                got: features.len(),
            });
        }
        Ok(self.forward(features).activations.pop().expect("non-empty trace"))
    }

    /// Cross-entropy of the softmax output at `x.label`.
    pub fn loss(&self, x: &Example) -> Result<f64> {
        self.check_example(x)?;
        let logits = self.forward(&x.features).activations.pop().expect("non-empty trace");
        Ok(cross_entropy(&logits, x.label))
    }

    /// Gradient of the loss with respect to the flat parameter vector.
    pub fn grad_params(&self, x: &Example) -> Result<Vec<f64>> {
        Ok(self.loss_and_grads(x)?.grad_params)
    }

    /// Gradient of the loss with respect to the input features.
    pub fn grad_input(&self, x: &Example) -> Result<Vec<f64>> {
        Ok(self.loss_and_grads(x)?.grad_input)
    }

    pub fn loss_and_grads(&self, x: &Example) -> Result<LossGrads> {
        self.check_example(x)?;
        let trace = self.forward(&x.features);
        let layers: Vec<Layer> = self.spec.layers().collect();
        let logits = trace.activations.last().expect("non-empty trace");
        let loss = cross_entropy(logits, x.label);

        // dL/dz for the output layer: softmax - onehot.
        let mut delta = softmax(logits);
        delta[x.label] -= 1.0;

        let mut grad = vec![0.0; self.params.len()];
        for (l, layer) in layers.iter().enumerate().rev() {
            let a_prev = &trace.activations[l];
            let (w_grad, rest) = grad[layer.offset..layer.end()].split_at_mut(layer.fan_in * layer.fan_out);
            for ((row, &d), b) in w_grad.chunks_exact_mut(layer.fan_in).zip(&delta).zip(rest.iter_mut()) {
                *b = d;
                if d != 0.0 {
                    for (g, &a) in row.iter_mut().zip(a_prev) {
                        *g = d * a;
                    }
                }
            }
            // Back through W^T, then through the previous ReLU if there is one.
            let weights = &self.params[layer.offset..layer.bias_offset()];
            let mut back = vec![0.0; layer.fan_in];
            for (row, &d) in weights.chunks_exact(layer.fan_in).zip(&delta) {
                if d != 0.0 {
                    for (b, &w) in back.iter_mut().zip(row) {
                        *b += d * w;
                    }
                }
            }
            if l > 0 {
                for (b, &z) in back.iter_mut().zip(&trace.pre[l - 1]) {
                    if z <= 0.0 {
                        *b = 0.0;
                    }
                }
            }
            delta = back;
        }

        Ok(LossGrads {
            loss,
            grad_params: grad,
            grad_input: delta,
        })
    }

    /// Mean loss over a set of examples.
    pub fn mean_loss<'a, I>(&self, examples: I) -> Result<f64>
    where
        I: IntoIterator<Item = &'a Example>,
    {
        let mut total = 0.0;
        let mut count = 0usize;
        for x in examples {
            total += self.loss(x)?;
            count += 1;
        }
        if count == 0 {
            return Err(Error::EmptyDataset("mean loss of no examples".into()));
        }
        Ok(total / count as f64)
    }
}

#[derive(Debug, Clone)]
pub struct LossGrads {
    pub loss: f64,
    pub grad_params: Vec<f64>,
    pub grad_input: Vec<f64>,
}

/// Plain full-batch gradient descent on the mean loss.
pub fn gradient_descent(model: &ModelState, examples: &[Example], steps: usize, lr: f64) -> Result<ModelState> {
    if examples.is_empty() {
        return Err(Error::EmptyDataset(
            "gradient descent needs at least one example".into(),
        ));
    }
    let mut params = model.params.clone();
    let scale = lr / examples.len() as f64;
    for _ in 0..steps {
        let current = ModelState {
            spec: model.spec.clone(),
            params: params.clone(),
        };
        let mut total = vec![0.0; params.len()];
        for x in examples {
            let g = current.grad_params(x)?;
            for (t, gi) in total.iter_mut().zip(&g) {
                *t += gi;
            }
        }
        for (p, g) in params.iter_mut().zip(&total) {
            *p -= scale * g;
        }
    }
    model.with_params(params)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + z.iter().map(|&v| (v - max).exp()).sum::<f64>().ln()
}

fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    // ln Σ exp(z_i − z_y), with log1p so confident predictions keep precision.
    let zy = logits[label];
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max <= zy {
        let rest: f64 = logits
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != label)
            .map(|(_, &v)| (v - zy).exp())
            .sum();
        rest.ln_1p()
    } else {
        log_sum_exp(logits) - zy
    }
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(z);
    z.iter().map(|&v| (v - lse).exp()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn param_counts() {
        assert_eq!(ModelSpec::new(vec![2, 3, 2]).unwrap().num_params(), 17);
        assert_eq!(ModelSpec::new(vec![784, 32, 10]).unwrap().num_params(), 25450);
        let m = init_params(&ModelSpec::new(vec![2, 3, 2]).unwrap(), &mut rng(1)).unwrap();
        assert_eq!(m.params().len(), 17);
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(ModelSpec::new(vec![4]).is_err());
        assert!(ModelSpec::new(vec![4, 0, 3]).is_err());
        assert!(ModelSpec::new(vec![4, 1]).is_err());
    }

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let spec = ModelSpec::new(vec![5, 4, 3]).unwrap();
        let a = init_params(&spec, &mut rng(9)).unwrap();
        let b = init_params(&spec, &mut rng(9)).unwrap();
        assert_eq!(a, b);
        for layer in spec.layers() {
            assert!(a.params()[layer.bias_offset()..layer.end()].iter().all(|&b| b == 0.0));
        }
    }

    #[test]
    fn uniform_logits_give_ln_k() {
        let spec = ModelSpec::new(vec![3, 4, 7]).unwrap();
        let mut m = init_params(&spec, &mut rng(2)).unwrap();
        let last = spec.layers().last().unwrap();
        for p in &mut m.params[last.offset..last.end()] {
            *p = 0.0;
        }
        let x = Example::new(vec![0.3, -1.0, 2.0], 4);
        assert!((m.loss(&x).unwrap() - 7f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn saturated_logits_give_vanishing_loss() {
        // Linear 1 -> 2 model, logits (t, -t) for input 1.
        let spec = ModelSpec::new(vec![1, 2]).unwrap();
        let x = Example::new(vec![1.0], 0);
        let mut prev = f64::INFINITY;
        for t in [1.0, 5.0, 20.0, 400.0] {
            let m = ModelState::new(spec.clone(), vec![t, -t, 0.0, 0.0]).unwrap();
            let l = m.loss(&x).unwrap();
            assert!(l.is_finite() && l >= 0.0 && l < prev);
            prev = l;
        }
        assert!(prev < 1e-300);
        let g = ModelState::new(spec, vec![400.0, -400.0, 0.0, 0.0])
            .unwrap()
            .grad_input(&x)
            .unwrap();
        assert!(g[0].abs() < 1e-12);
    }

    #[test]
    fn dimension_and_label_errors() {
        let m = init_params(&ModelSpec::new(vec![2, 3, 2]).unwrap(), &mut rng(1)).unwrap();
        assert!(matches!(
            m.loss(&Example::new(vec![1.0], 0)),
            Err(Error::DimensionMismatch { expected: 2, got: 1 })
        ));
        assert!(matches!(
            m.grad_params(&Example::new(vec![1.0, 2.0], 2)),
            Err(Error::LabelOutOfRange { .. })
        ));
        assert!(ModelState::new(m.spec().clone(), vec![0.0; 3]).is_err());
    }

    #[test]
    fn zero_input_zero_first_layer_gives_zero_first_layer_grads() {
        let spec = ModelSpec::new(vec![2, 3, 2]).unwrap();
        let mut m = init_params(&spec, &mut rng(5)).unwrap();
        let first = spec.layers().next().unwrap();
        for p in &mut m.params[first.offset..first.bias_offset()] {
            *p = 0.0;
        }
        let g = m.grad_params(&Example::new(vec![0.0, 0.0], 1)).unwrap();
        assert!(g[first.offset..first.bias_offset()].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradients_are_pure() {
        let m = init_params(&ModelSpec::new(vec![4, 6, 3]).unwrap(), &mut rng(3)).unwrap();
        let x = Example::new(vec![0.1, -0.2, 0.3, 0.9], 2);
        let a = m.loss_and_grads(&x).unwrap();
        let b = m.loss_and_grads(&x).unwrap();
        assert_eq!(a.loss.to_bits(), b.loss.to_bits());
        assert_eq!(a.grad_params, b.grad_params);
        assert_eq!(a.grad_input, b.grad_input);
    }

    #[test]
    fn linear_model_input_gradient_is_closed_form() {
        // (softmax(Wx + b) - onehot)^T W
        let spec = ModelSpec::new(vec![3, 4]).unwrap();
        let m = init_params(&spec, &mut rng(8)).unwrap();
        let m = m
            .with_params(
                m.params()
                    .iter()
                    .enumerate()
                    .map(|(i, p)| p + 0.01 * i as f64)
                    .collect(),
            )
            .unwrap();
        let x = Example::new(vec![0.7, -1.1, 0.4], 1);
        let w = &m.params()[..12];
        let b = &m.params()[12..];
        let z: Vec<f64> = (0..4)
            .map(|k| (0..3).map(|j| w[k * 3 + j] * x.features[j]).sum::<f64>() + b[k])
            .collect();
        let mut p: Vec<f64> = z.iter().map(|v| v.exp()).collect();
        let s: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= s);
        p[1] -= 1.0;
        let expected: Vec<f64> = (0..3).map(|j| (0..4).map(|k| p[k] * w[k * 3 + j]).sum()).collect();
        let got = m.grad_input(&x).unwrap();
        for (e, g) in expected.iter().zip(&got) {
            assert!((e - g).abs() < 1e-12, "{e} vs {g}");
        }
    }

    #[test]
    fn logit_shift_invariance() {
        // Adding c to every output bias shifts all logits by c.
        let spec = ModelSpec::new(vec![3, 5, 4]).unwrap();
        let m = init_params(&spec, &mut rng(4)).unwrap();
        let last = spec.layers().last().unwrap();
        let mut shifted = m.params().to_vec();
        for b in &mut shifted[last.bias_offset()..last.end()] {
            *b += 123.0;
        }
        let shifted = m.with_params(shifted).unwrap();
        let x = Example::new(vec![0.2, 0.5, -0.3], 3);
        assert!((m.loss(&x).unwrap() - shifted.loss(&x).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn gradient_descent_reduces_loss() {
        let spec = ModelSpec::new(vec![2, 8, 2]).unwrap();
        let m = init_params(&spec, &mut rng(6)).unwrap();
        let data = vec![
            Example::new(vec![1.0, 0.0], 0),
            Example::new(vec![0.0, 1.0], 1),
            Example::new(vec![1.0, 0.2], 0),
        ];
        let trained = gradient_descent(&m, &data, 50, 0.5).unwrap();
        assert!(trained.mean_loss(&data).unwrap() < m.mean_loss(&data).unwrap());
        assert_eq!(gradient_descent(&m, &data, 0, 0.5).unwrap(), m);
    }
}

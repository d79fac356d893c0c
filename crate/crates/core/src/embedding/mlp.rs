//! Multilayer perceptron with Softplus between layers and a linear output.

use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Dense layer; `weights` is `outputs x inputs`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.bias.iter().enumerate().map(|(o, b)| {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
        }));
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub layers: Vec<Layer>,
}

/// `log(1 + exp(x))` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Derivative of softplus: the logistic sigmoid.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Intermediate values of one forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct Trace {
    /// Input to each layer.
    inputs: Vec<Vec<f64>>,
    /// Pre-activation output of each layer; the last one is the output.
    pre: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.pre.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

impl MlpParams {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidConfig("an MLP needs at least one layer".into()));
        }
        for l in &layers {
            if l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                return Err(Error::InvalidConfig(format!(
                    "layer {}x{} has {} weights and {} biases",
                    l.outputs,
                    l.inputs,
                    l.weights.len(),
                    l.bias.len()
                )));
            }
        }
        for pair in layers.windows(2) {
            if pair[0].outputs != pair[1].inputs {
                return Err(Error::DimensionMismatch {
                    expected: pair[0].outputs,
                    found: pair[1].inputs,
                });
            }
        }
        Ok(Self { layers })
    }

    /// All-zero parameters for the layer sizes `dims = [input, hidden.., output]`.
    pub fn zeros(dims: &[usize]) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::InvalidConfig(
                "layer sizes need an input and an output".into(),
            ));
        }
        Self::new(dims.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect())
    }

    /// A single linear layer mapping every input to itself.
    pub fn identity(dim: usize) -> Self {
        let mut l = Layer::zeros(dim, dim);
        for i in 0..dim {
            l.weights[i * dim + i] = 1.0;
        }
        Self { layers: vec![l] }
    }

    /// Fan-in scaled Gaussian initialization (std `sqrt(2 / fan_in)`), zero biases.
    pub fn init<R: rand::Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Result<Self> {
        let mut p = Self::zeros(dims)?;
        for l in &mut p.layers {
            let std = (2.0 / l.inputs.max(1) as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("std is finite");
            for w in &mut l.weights {
                *w = normal.sample(rng);
            }
        }
        Ok(p)
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    /// Layer sizes `[input, hidden.., output]`.
    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(|l| l.outputs))
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Layer::zeros(l.inputs, l.outputs))
                .collect(),
        }
    }

    /// Every parameter in a fixed order (per layer: weights, then biases).
    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                found: input.len(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let mut x = input.to_vec();
        let mut y = Vec::new();
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            l.apply(&x, &mut y);
            if i != last {
                y.iter_mut().for_each(|v| *v = softplus(*v));
            }
            std::mem::swap(&mut x, &mut y);
        }
        Ok(x)
    }

    pub fn forward_trace(&self, input: &[f64]) -> Result<Trace> {
        self.check_input(input)?;
        let n = self.layers.len();
        let mut inputs = Vec::with_capacity(n);
        let mut pre = Vec::with_capacity(n);
        let mut x = input.to_vec();
        for (i, l) in self.layers.iter().enumerate() {
            let mut y = Vec::new();
            l.apply(&x, &mut y);
            let next = if i + 1 < n {
                y.iter().map(|&v| softplus(v)).collect()
            } else {
                Vec::new()
            };
            inputs.push(x);
            pre.push(y);
            x = next;
        }
        Ok(Trace { inputs, pre })
    }

    /// Accumulate into `grads` the gradient of a scalar whose derivative with
    /// respect to this trace's output is `grad_out`.
    pub fn backward(&self, trace: &Trace, grad_out: &[f64], grads: &mut MlpParams) {
        let mut delta = grad_out.to_vec();
        let last = self.layers.len() - 1;
        for i in (0..self.layers.len()).rev() {
            let l = &self.layers[i];
            if i != last {
                for (d, &z) in delta.iter_mut().zip(&trace.pre[i]) {
                    *d *= sigmoid(z);
                }
            }
            let g = &mut grads.layers[i];
            let x = &trace.inputs[i];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                g.bias[o] += d;
                let row = &mut g.weights[o * l.inputs..(o + 1) * l.inputs];
                for (w, &v) in row.iter_mut().zip(x) {
                    *w += d * v;
                }
            }
            if i > 0 {
                let mut prev = vec![0.0; l.inputs];
                for (o, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    let row = &l.weights[o * l.inputs..(o + 1) * l.inputs];
                    for (p, &w) in prev.iter_mut().zip(row) {
                        *p += d * w;
                    }
                }
                delta = prev;
            }
        }
    }
}

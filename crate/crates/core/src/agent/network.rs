//! Fully-connected action-value network with ReLU hidden layers and a
//! linear output head, trained by backpropagation on squared TD error.

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    inputs: usize,
    outputs: usize,
    /// `outputs × inputs`, row-major.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl Dense {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for (row, b) in self.weights.chunks_exact(self.inputs).zip(&self.bias) {
            out.push(b + row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>());
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueNetwork {
    layers: Vec<Dense>,
}

/// One regression target: push `Q(input)[action]` toward `target`.
#[derive(Debug, Clone, Copy)]
pub struct Target<'a> {
    pub input: &'a [f64],
    pub action: usize,
    pub target: f64,
}

impl ValueNetwork {
    /// `dims = [input, hidden..., actions]`.
    pub fn zeros(dims: &[usize]) -> Result<Self> {
        if dims.len() < 2 || dims.iter().any(|&d| d == 0) {
            return Err(Error::Config(format!("invalid layer sizes {dims:?}")));
        }
        Ok(Self {
            layers: dims.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect(),
        })
    }

    /// He-uniform weights, zero biases.
    pub fn random<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(dims)?;
        for layer in &mut net.layers {
            let bound = (6.0 / layer.inputs as f64).sqrt();
            for w in &mut layer.weights {
                *w = rng.gen_range(-bound..bound);
            }
        }
        Ok(net)
    }

    pub(crate) fn from_layers(layers: Vec<Dense>) -> Self {
        Self { layers }
    }

    pub(crate) fn dense(inputs: usize, outputs: usize, weights: Vec<f64>, bias: Vec<f64>) -> Dense {
        debug_assert_eq!(weights.len(), inputs * outputs);
        debug_assert_eq!(bias.len(), outputs);
        Dense {
            inputs,
            outputs,
            weights,
            bias,
        }
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim()];
        dims.extend(self.layers.iter().map(|l| l.outputs));
        dims
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(|l| l.outputs).unwrap_or(0)
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: input.len(),
            });
        }
        let mut x = input.to_vec();
        let mut y = Vec::new();
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            layer.apply(&x, &mut y);
            if k < last {
                y.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            std::mem::swap(&mut x, &mut y);
        }
        Ok(x)
    }

    /// Post-activation outputs of every layer, input first.
    fn trace(&self, input: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(input.to_vec());
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let mut y = Vec::with_capacity(layer.outputs);
            layer.apply(&acts[k], &mut y);
            if k < last {
                y.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(y);
        }
        acts
    }

    /// Mean squared error over `batch`, with its gradient in the shape of
    /// this network.
    pub fn loss_and_gradient(&self, batch: &[Target<'_>]) -> Result<(f64, ValueNetwork)> {
        let mut grad = ValueNetwork::zeros(&self.dims())?;
        if batch.is_empty() {
            return Ok((0.0, grad));
        }
        let scale = 1.0 / batch.len() as f64;
        let mut loss = 0.0;
        for t in batch {
            if t.input.len() != self.input_dim() {
                return Err(Error::DimensionMismatch {
                    expected: self.input_dim(),
                    got: t.input.len(),
                });
            }
            if t.action >= self.output_dim() {
                return Err(Error::DimensionMismatch {
                    expected: self.output_dim(),
                    got: t.action,
                });
            }
            let acts = self.trace(t.input);
            let q = acts.last().unwrap()[t.action];
            let err = q - t.target;
            loss += err * err * scale;

            let mut delta = vec![0.0; self.output_dim()];
            delta[t.action] = 2.0 * err * scale;
            for k in (0..self.layers.len()).rev() {
                let layer = &self.layers[k];
                let g = &mut grad.layers[k];
                let a_in = &acts[k];
                for (o, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    g.bias[o] += d;
                    let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (gw, &a) in row.iter_mut().zip(a_in) {
                        *gw += d * a;
                    }
                }
                if k == 0 {
                    break;
                }
                // Back through W and the ReLU of layer k - 1.
                let mut prev = vec![0.0; layer.inputs];
                for (o, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (p, &w) in prev.iter_mut().zip(row) {
                        *p += w * d;
                    }
                }
                for (p, &a) in prev.iter_mut().zip(a_in) {
                    if a <= 0.0 {
                        *p = 0.0;
                    }
                }
                delta = prev;
            }
        }
        Ok((loss, grad))
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// All parameters, layer by layer: weights then biases.
    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.bias))
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    /// `self -= lr * g`, with `g` rescaled to norm `clip` if it is longer.
    pub fn sgd_step(&mut self, grad: &ValueNetwork, learning_rate: f64, clip: f64) {
        let norm = grad.params().map(|g| g * g).sum::<f64>().sqrt();
        let scale = if norm > clip { clip / norm } else { 1.0 };
        let step = learning_rate * scale;
        if step == 0.0 {
            return;
        }
        for (w, g) in self.params_mut().zip(grad.params()) {
            *w -= step * g;
        }
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

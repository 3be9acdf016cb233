use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use super::Dataset;
use crate::numerics::{axpy, dot, sigmoid, RngStream};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Relu,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Self::Sigmoid => sigmoid(z),
            Self::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the activation output `a` and input `z`.
    #[inline]
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Self::Sigmoid => a * (1.0 - a),
            Self::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpArchitecture {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub n_classes: usize,
    pub activation: Activation,
}

impl MlpArchitecture {
    /// `(fan_in, fan_out)` of every affine layer, output layer last.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut sizes = Vec::with_capacity(self.hidden.len() + 2);
        sizes.push(self.input_dim);
        sizes.extend_from_slice(&self.hidden);
        sizes.push(self.n_classes);
        sizes.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn shape_map(&self) -> ShapeMap {
        assert!(self.input_dim >= 1 && self.n_classes >= 1);
        assert!(self.hidden.iter().all(|&h| h >= 1), "hidden layers must be non-empty");
        let mut slots = Vec::new();
        let mut offset = 0;
        for (layer, (fan_in, fan_out)) in self.layer_dims().into_iter().enumerate() {
            slots.push(TensorSlot { layer, kind: TensorKind::Weight, rows: fan_out, cols: fan_in, offset });
            offset += fan_in * fan_out;
            slots.push(TensorSlot { layer, kind: TensorKind::Bias, rows: fan_out, cols: 1, offset });
            offset += fan_out;
        }
        ShapeMap { slots, total: offset }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorKind {
    Weight,
    Bias,
}

/// Location of one tensor inside the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TensorSlot {
    pub layer: usize,
    pub kind: TensorKind,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl TensorSlot {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> core::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Weights then bias for each layer, laid out back to back.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShapeMap {
    slots: Vec<TensorSlot>,
    total: usize,
}

impl ShapeMap {
    pub fn slots(&self) -> &[TensorSlot] {
        &self.slots
    }

    pub fn total(&self) -> usize {
        self.total
    }
}

/// A classifier optimizee with its own minibatch stream.
#[derive(Debug, Clone)]
pub struct MlpProblemInstance {
    arch: MlpArchitecture,
    dataset: Arc<Dataset>,
    minibatch_size: usize,
    rng: RngStream,
    shapes: ShapeMap,
}

impl MlpProblemInstance {
    pub fn new(arch: MlpArchitecture, dataset: Arc<Dataset>, minibatch_size: usize, rng: RngStream) -> Result<Self> {
        if dataset.is_empty() {
            return Err(Error::InvalidConfig("dataset is empty".into()));
        }
        if minibatch_size == 0 || minibatch_size > dataset.len() {
            return Err(Error::InvalidConfig(alloc::format!(
                "minibatch size {minibatch_size} must be in 1..={}",
                dataset.len()
            )));
        }
        if dataset.n_features() != arch.input_dim || dataset.n_classes() != arch.n_classes {
            return Err(Error::InvalidConfig(alloc::format!(
                "architecture expects {} features and {} classes, dataset has {} and {}",
                arch.input_dim,
                arch.n_classes,
                dataset.n_features(),
                dataset.n_classes()
            )));
        }
        let shapes = arch.shape_map();
        Ok(Self { arch, dataset, minibatch_size, rng, shapes })
    }

    pub fn architecture(&self) -> &MlpArchitecture {
        &self.arch
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn shape_map(&self) -> &ShapeMap {
        &self.shapes
    }

    pub fn dim(&self) -> usize {
        self.shapes.total()
    }

    /// `minibatch_size` distinct example indices, drawn uniformly.
    pub fn next_minibatch(&mut self) -> Vec<usize> {
        let n = self.dataset.len();
        let mut indices: Vec<usize> = (0..n).collect();
        for i in 0..self.minibatch_size {
            let j = i + self.rng.below(n - i);
            indices.swap(i, j);
        }
        indices.truncate(self.minibatch_size);
        indices
    }

    /// Draws the next minibatch and evaluates on it.
    pub fn loss_and_grad(&mut self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        let batch = self.next_minibatch();
        self.loss_and_grad_on(theta, &batch)
    }

    /// Mean softmax cross-entropy over `batch` and its exact gradient.
    pub fn loss_and_grad_on(&self, theta: &[f64], batch: &[usize]) -> Result<(f64, Vec<f64>)> {
        assert_eq!(theta.len(), self.dim(), "θ does not match the shape map");
        assert!(!batch.is_empty());
        let layers = self.arch.layer_dims();
        let n_layers = layers.len();
        let slots = self.shapes.slots();

        let mut grad = vec![0.0; theta.len()];
        let mut total = 0.0;
        // pre-activations and activations per layer; activations[0] is the input
        let mut pre: Vec<Vec<f64>> = layers.iter().map(|&(_, out)| vec![0.0; out]).collect();
        let mut act: Vec<Vec<f64>> = Vec::with_capacity(n_layers + 1);
        act.push(Vec::new());
        for &(_, out) in &layers {
            act.push(vec![0.0; out]);
        }
        let mut delta: Vec<Vec<f64>> = layers.iter().map(|&(_, out)| vec![0.0; out]).collect();

        for &example in batch {
            act[0].clear();
            act[0].extend_from_slice(self.dataset.example(example));
            for l in 0..n_layers {
                let (fan_in, fan_out) = layers[l];
                let w = &theta[slots[2 * l].range()];
                let b = &theta[slots[2 * l + 1].range()];
                let (inputs, outputs) = act.split_at_mut(l + 1);
                for o in 0..fan_out {
                    let z = dot(&w[o * fan_in..(o + 1) * fan_in], &inputs[l]) + b[o];
                    pre[l][o] = z;
                    outputs[0][o] = if l + 1 < n_layers { self.arch.activation.apply(z) } else { z };
                }
            }

            let logits = &pre[n_layers - 1];
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum_exp: f64 = logits.iter().map(|z| libm::exp(z - max)).sum();
            let log_norm = max + libm::log(sum_exp);
            let label = self.dataset.labels()[example];
            total += log_norm - logits[label];

            let out = &mut delta[n_layers - 1];
            for (k, d) in out.iter_mut().enumerate() {
                *d = libm::exp(logits[k] - log_norm);
            }
            out[label] -= 1.0;

            for l in (0..n_layers).rev() {
                let (fan_in, fan_out) = layers[l];
                let w_slot = slots[2 * l];
                let b_slot = slots[2 * l + 1];
                for o in 0..fan_out {
                    let d = delta[l][o];
                    axpy(d, &act[l], &mut grad[w_slot.offset + o * fan_in..w_slot.offset + (o + 1) * fan_in]);
                    grad[b_slot.offset + o] += d;
                }
                if l > 0 {
                    let w = &theta[w_slot.range()];
                    let (below, above) = delta.split_at_mut(l);
                    let prev = &mut below[l - 1];
                    prev.iter_mut().for_each(|v| *v = 0.0);
                    for o in 0..fan_out {
                        axpy(above[0][o], &w[o * fan_in..(o + 1) * fan_in], prev);
                    }
                    for (i, v) in prev.iter_mut().enumerate() {
                        *v *= self.arch.activation.derivative(pre[l - 1][i], act[l][i]);
                    }
                }
            }
        }

        let scale = 1.0 / batch.len() as f64;
        let loss = total * scale;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { step: 0 });
        }
        grad.iter_mut().for_each(|g| *g *= scale);
        Ok((loss, grad))
    }

    /// Fraction of the whole dataset classified correctly.
    pub fn accuracy(&self, theta: &[f64]) -> f64 {
        let layers = self.arch.layer_dims();
        let slots = self.shapes.slots();
        let mut correct = 0;
        for i in 0..self.dataset.len() {
            let mut a = self.dataset.example(i).to_vec();
            for (l, &(fan_in, fan_out)) in layers.iter().enumerate() {
                let w = &theta[slots[2 * l].range()];
                let b = &theta[slots[2 * l + 1].range()];
                let last = l + 1 == layers.len();
                a = (0..fan_out)
                    .map(|o| {
                        let z = dot(&w[o * fan_in..(o + 1) * fan_in], &a) + b[o];
                        if last {
                            z
                        } else {
                            self.arch.activation.apply(z)
                        }
                    })
                    .collect();
            }
            let predicted = (0..a.len()).fold(0, |best, k| if a[k] > a[best] { k } else { best });
            if predicted == self.dataset.labels()[i] {
                correct += 1;
            }
        }
        correct as f64 / self.dataset.len() as f64
    }
}

//! Fully connected Q-network with ReLU hidden layers, a linear head, manual
//! backpropagation and an Adam optimizer.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use super::{Action, Experience, NUM_ACTIONS};
use crate::error::{Error, Result};
use crate::kpi::STATE_DIM;
use crate::math;

/// Default layer widths: state, two hidden layers, one value per action.
pub const DEFAULT_ARCHITECTURE: [usize; 4] = [STATE_DIM, 64, 64, NUM_ACTIONS];

/// Dense layer; `weights` is row-major `[outputs][inputs]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            inputs,
            outputs,
            weights: alloc::vec![0.0; inputs * outputs],
            biases: alloc::vec![0.0; outputs],
        }
    }

    /// He-style fan-in scaled uniform weights, zero biases.
    pub fn he_uniform<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let limit = math::sqrt(6.0 / inputs as f64);
        let weights = (0..inputs * outputs).map(|_| rng.gen_range(-limit..limit)).collect();
        Dense {
            inputs,
            outputs,
            weights,
            biases: alloc::vec![0.0; outputs],
        }
    }

    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.outputs {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            let dot: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum();
            out.push(dot + self.biases[o]);
        }
    }

    fn params(&self) -> impl Iterator<Item = &f64> {
        self.weights.iter().chain(&self.biases)
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights.iter_mut().chain(self.biases.iter_mut())
    }

    fn same_shape(&self, other: &Dense) -> bool {
        self.inputs == other.inputs
            && self.outputs == other.outputs
            && self.weights.len() == self.inputs * self.outputs
            && self.biases.len() == self.outputs
            && other.weights.len() == self.weights.len()
            && other.biases.len() == self.biases.len()
    }
}

/// Per-layer parameter gradients, shaped like the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn flatten(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.params().copied()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// The shared Q-network together with its optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork {
    layers: Vec<Dense>,
    adam: AdamConfig,
    first_moment: Vec<Dense>,
    second_moment: Vec<Dense>,
    step: u64,
}

impl QNetwork {
    pub fn new<R: Rng + ?Sized>(architecture: &[usize], adam: AdamConfig, rng: &mut R) -> Result<Self> {
        validate_architecture(architecture)?;
        let layers = architecture
            .windows(2)
            .map(|w| Dense::he_uniform(w[0], w[1], rng))
            .collect();
        Ok(Self::with_layers(layers, adam))
    }

    fn with_layers(layers: Vec<Dense>, adam: AdamConfig) -> Self {
        let zeros: Vec<Dense> = layers.iter().map(|l| Dense::zeros(l.inputs, l.outputs)).collect();
        QNetwork {
            layers,
            adam,
            first_moment: zeros.clone(),
            second_moment: zeros,
            step: 0,
        }
    }

    /// Reassembles a network from stored parts, validating every shape.
    pub fn from_parts(
        layers: Vec<Dense>,
        first_moment: Vec<Dense>,
        second_moment: Vec<Dense>,
        step: u64,
        adam: AdamConfig,
    ) -> Result<Self> {
        let mut arch: Vec<usize> = layers.iter().map(|l| l.inputs).collect();
        if let Some(last) = layers.last() {
            arch.push(last.outputs);
        }
        validate_architecture(&arch)?;
        for pair in layers.windows(2) {
            if pair[0].outputs != pair[1].inputs {
                return Err(Error::Shape("consecutive layers do not chain".into()));
            }
        }
        let moments_ok = first_moment.len() == layers.len()
            && second_moment.len() == layers.len()
            && layers
                .iter()
                .zip(first_moment.iter().zip(&second_moment))
                .all(|(l, (m, v))| l.same_shape(l) && l.same_shape(m) && l.same_shape(v));
        if !moments_ok {
            return Err(Error::Shape("optimizer moments do not match layer shapes".into()));
        }
        let net = QNetwork {
            layers,
            adam,
            first_moment,
            second_moment,
            step,
        };
        if !net.all_finite() {
            return Err(Error::Divergence("stored parameters are not finite".into()));
        }
        Ok(net)
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn first_moment(&self) -> &[Dense] {
        &self.first_moment
    }

    pub fn second_moment(&self) -> &[Dense] {
        &self.second_moment
    }

    pub fn adam(&self) -> &AdamConfig {
        &self.adam
    }

    pub fn train_step_count(&self) -> u64 {
        self.step
    }

    pub fn architecture(&self) -> Vec<usize> {
        let mut arch: Vec<usize> = self.layers.iter().map(|l| l.inputs).collect();
        arch.push(self.layers.last().map_or(0, |l| l.outputs));
        arch
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    pub fn params(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.params().copied()).collect()
    }

    pub fn set_param(&mut self, index: usize, value: f64) {
        let mut i = index;
        for l in &mut self.layers {
            let n = l.weights.len() + l.biases.len();
            if i < n {
                if let Some(p) = l.params_mut().nth(i) {
                    *p = value;
                }
                return;
            }
            i -= n;
        }
        panic!("parameter index {index} out of range");
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .chain(&self.first_moment)
            .chain(&self.second_moment)
            .all(|l| l.params().all(|p| p.is_finite()))
    }

    /// Network output for one input vector.
    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        let mut cur = input.to_vec();
        let mut next = Vec::new();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.apply(&cur, &mut next);
            if i < last {
                relu(&mut next);
            }
            core::mem::swap(&mut cur, &mut next);
        }
        cur
    }

    /// Action values for a state.
    pub fn q_values(&self, state: &[f64]) -> [f64; NUM_ACTIONS] {
        let out = self.forward(state);
        let mut q = [0.0; NUM_ACTIONS];
        q.copy_from_slice(&out[..NUM_ACTIONS]);
        q
    }

    /// Mean over the batch of the squared error of the taken action's value.
    pub fn batch_loss(&self, batch: &[Experience]) -> f64 {
        let sum: f64 = batch
            .iter()
            .map(|e| {
                let err = self.q_values(&e.state.0)[e.action.index()] - e.reward;
                err * err
            })
            .sum();
        sum / batch.len() as f64
    }

    /// Loss and its gradient with respect to every parameter. Only the taken
    /// action's output contributes for each sample.
    pub fn loss_and_gradient(&self, batch: &[Experience]) -> (f64, Gradients) {
        let mut grads = Gradients {
            layers: self.layers.iter().map(|l| Dense::zeros(l.inputs, l.outputs)).collect(),
        };
        let n = batch.len() as f64;
        let last = self.layers.len() - 1;
        let mut loss = 0.0;
        // Activations per layer, input first.
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len() + 1);
        for e in batch {
            acts.clear();
            acts.push(e.state.0.to_vec());
            for (i, layer) in self.layers.iter().enumerate() {
                let mut out = Vec::with_capacity(layer.outputs);
                layer.apply(&acts[i], &mut out);
                if i < last {
                    relu(&mut out);
                }
                acts.push(out);
            }
            let a = e.action.index();
            let err = acts[last + 1][a] - e.reward;
            loss += err * err;

            let mut delta = alloc::vec![0.0; self.layers[last].outputs];
            delta[a] = 2.0 * err / n;
            for i in (0..=last).rev() {
                let layer = &self.layers[i];
                let g = &mut grads.layers[i];
                let input = &acts[i];
                for o in 0..layer.outputs {
                    let d = delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    g.biases[o] += d;
                    let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (gw, x) in row.iter_mut().zip(input) {
                        *gw += d * x;
                    }
                }
                if i == 0 {
                    break;
                }
                let mut prev = alloc::vec![0.0; layer.inputs];
                for o in 0..layer.outputs {
                    let d = delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (p, w) in prev.iter_mut().zip(row) {
                        *p += d * w;
                    }
                }
                // ReLU derivative of the previous layer's output.
                for (p, &x) in prev.iter_mut().zip(input) {
                    if x <= 0.0 {
                        *p = 0.0;
                    }
                }
                delta = prev;
            }
        }
        (loss / n, grads)
    }

    /// Applies one bias-corrected Adam update.
    pub fn apply_gradients(&mut self, grads: &Gradients) {
        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.adam;
        let t = self.step as i32;
        let c1 = 1.0 - libm::pow(beta1, t as f64);
        let c2 = 1.0 - libm::pow(beta2, t as f64);
        for (((layer, g), m), v) in self
            .layers
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut self.first_moment)
            .zip(&mut self.second_moment)
        {
            for (((p, &gi), mi), vi) in layer
                .params_mut()
                .zip(g.params())
                .zip(m.params_mut())
                .zip(v.params_mut())
            {
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                // Moments of dead units decay geometrically; subnormals are slow.
                if mi.abs() < f64::MIN_POSITIVE {
                    *mi = 0.0;
                }
                if *vi < f64::MIN_POSITIVE {
                    *vi = 0.0;
                }
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *p -= learning_rate * m_hat / (math::sqrt(v_hat) + epsilon);
            }
        }
    }

    /// One optimizer step on the batch; returns the loss before the update.
    pub fn train_step(&mut self, batch: &[Experience]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::Config("training batch is empty".into()));
        }
        let (loss, grads) = self.loss_and_gradient(batch);
        if !loss.is_finite() {
            return Err(Error::Divergence(format!(
                "training loss is {loss} at step {}",
                self.step
            )));
        }
        self.apply_gradients(&grads);
        if !self.all_finite() {
            return Err(Error::Divergence(format!(
                "parameters became non-finite at step {}",
                self.step
            )));
        }
        Ok(loss)
    }

    /// Greedy action for a state.
    pub fn greedy_action(&self, state: &[f64]) -> Action {
        Action::from_index(super::argmax(&self.q_values(state)))
    }
}

fn relu(v: &mut [f64]) {
    for x in v {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

fn validate_architecture(arch: &[usize]) -> Result<()> {
    if arch.len() < 2 || arch.iter().any(|&n| n == 0) {
        return Err(Error::Shape(format!("invalid architecture {arch:?}")));
    }
    if arch[0] != STATE_DIM || *arch.last().unwrap() != NUM_ACTIONS {
        return Err(Error::Shape(format!(
            "architecture must map {STATE_DIM} features to {NUM_ACTIONS} actions, got {arch:?}"
        )));
    }
    Ok(())
}

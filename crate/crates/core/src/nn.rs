//! Minimal dense/LSTM layers with hand-written backpropagation and Adam.
//!
//! Everything runs on `f64` slices, sequentially, so results are
//! bit-reproducible for a fixed seed.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Sigmoid,
    Relu,
    Tanh,
    Linear,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(x),
            Activation::Relu => x.max(0.0),
            Activation::Tanh => libm::tanh(x),
            Activation::Linear => x,
        }
    }

    /// Derivative expressed through the activation output `y`.
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Linear => 1.0,
        }
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| libm::exp(z - max)).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `-log softmax(logits)[target]`, computed stably.
pub fn cross_entropy(logits: &[f64], target: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + libm::log(logits.iter().map(|&z| libm::exp(z - max)).sum::<f64>());
    lse - logits[target]
}

fn glorot<R: Rng>(rng: &mut R, fan_in: usize, fan_out: usize, n: usize) -> Vec<f64> {
    let limit = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
    (0..n).map(|_| rng.gen_range(-limit..limit)).collect()
}

/// Fully connected layer; `weights` is row-major `[outputs][inputs]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn new<R: Rng>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        Dense {
            inputs,
            outputs,
            weights: glorot(rng, inputs, outputs, inputs * outputs),
            bias: vec![0.0; outputs],
        }
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.inputs);
        self.weights
            .chunks_exact(self.inputs)
            .zip(&self.bias)
            .map(|(row, b)| b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
            .collect()
    }

    /// Accumulates parameter gradients for pre-activation gradient `dy` at
    /// input `x` into `grad` and returns the gradient w.r.t. `x`.
    pub fn backward(&self, x: &[f64], dy: &[f64], grad: &mut Dense) -> Vec<f64> {
        let mut dx = vec![0.0; self.inputs];
        for (o, &g) in dy.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grad.bias[o] += g;
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            let grow = &mut grad.weights[o * self.inputs..(o + 1) * self.inputs];
            for i in 0..self.inputs {
                grow[i] += g * x[i];
                dx[i] += g * row[i];
            }
        }
        dx
    }
}

/// Stack of dense layers sharing one activation, with optional inverted
/// dropout after every layer during training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    pub activation: Activation,
    pub dropout: f64,
}

/// Activations (post-dropout) recorded for backpropagation.
#[derive(Debug, Clone)]
pub struct MlpTrace {
    /// `outputs[0]` is the input; `outputs[k + 1]` the output of layer `k`.
    outputs: Vec<Vec<f64>>,
    /// Pre-dropout activations per layer (needed for the derivative).
    activated: Vec<Vec<f64>>,
    masks: Vec<Option<Vec<f64>>>,
}

impl MlpTrace {
    pub fn output(&self) -> &[f64] {
        self.outputs.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

impl Mlp {
    pub fn new<R: Rng>(
        input: usize,
        widths: &[usize],
        activation: Activation,
        dropout: f64,
        rng: &mut R,
    ) -> Self {
        let mut layers = Vec::with_capacity(widths.len());
        let mut prev = input;
        for &w in widths {
            layers.push(Dense::new(prev, w, rng));
            prev = w;
        }
        Mlp {
            layers,
            activation,
            dropout,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Mlp {
            layers: self
                .layers
                .iter()
                .map(|l| Dense::zeros(l.inputs, l.outputs))
                .collect(),
            activation: self.activation,
            dropout: self.dropout,
        }
    }

    pub fn widths(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.outputs).collect()
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    /// Runs the stack; dropout is applied only when `rng` is given.
    pub fn forward<R: Rng>(&self, x: &[f64], mut rng: Option<&mut R>) -> MlpTrace {
        let mut outputs = vec![x.to_vec()];
        let mut activated = Vec::with_capacity(self.layers.len());
        let mut masks = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let z = layer.forward(outputs.last().unwrap());
            let a: Vec<f64> = z.into_iter().map(|v| self.activation.apply(v)).collect();
            let mask = match rng.as_deref_mut() {
                Some(r) if self.dropout > 0.0 => {
                    let keep = 1.0 - self.dropout;
                    Some(
                        (0..a.len())
                            .map(|_| if r.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
                            .collect::<Vec<f64>>(),
                    )
                }
                _ => None,
            };
            let out = match &mask {
                Some(m) => a.iter().zip(m).map(|(v, k)| v * k).collect(),
                None => a.clone(),
            };
            activated.push(a);
            masks.push(mask);
            outputs.push(out);
        }
        MlpTrace {
            outputs,
            activated,
            masks,
        }
    }

    pub fn backward(&self, trace: &MlpTrace, d_out: &[f64], grad: &mut Mlp) -> Vec<f64> {
        let mut d = d_out.to_vec();
        for k in (0..self.layers.len()).rev() {
            if let Some(mask) = &trace.masks[k] {
                d.iter_mut().zip(mask).for_each(|(g, m)| *g *= m);
            }
            for (g, &y) in d.iter_mut().zip(&trace.activated[k]) {
                *g *= self.activation.derivative_from_output(y);
            }
            d = self.layers[k].backward(&trace.outputs[k], &d, &mut grad.layers[k]);
        }
        d
    }
}

/// Single-layer LSTM returning the last hidden state. Gate blocks in the
/// stacked weight matrices are ordered input, forget, cell, output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lstm {
    pub inputs: usize,
    pub hidden: usize,
    /// `[4H][inputs]`
    pub input_weights: Vec<f64>,
    /// `[4H][H]`
    pub recurrent_weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LstmTrace {
    xs: Vec<Vec<f64>>,
    /// h_0 .. h_T (h_0 = 0)
    hs: Vec<Vec<f64>>,
    /// c_0 .. c_T
    cs: Vec<Vec<f64>>,
    /// Gate activations per step: i, f, g, o concatenated.
    gates: Vec<Vec<f64>>,
}

impl LstmTrace {
    pub fn output(&self) -> &[f64] {
        self.hs.last().unwrap()
    }
}

impl Lstm {
    pub fn new<R: Rng>(inputs: usize, hidden: usize, rng: &mut R) -> Self {
        let mut bias = vec![0.0; 4 * hidden];
        bias[hidden..2 * hidden].fill(1.0);
        Lstm {
            inputs,
            hidden,
            input_weights: glorot(rng, inputs, 4 * hidden, 4 * hidden * inputs),
            recurrent_weights: glorot(rng, hidden, 4 * hidden, 4 * hidden * hidden),
            bias,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Lstm {
            inputs: self.inputs,
            hidden: self.hidden,
            input_weights: vec![0.0; self.input_weights.len()],
            recurrent_weights: vec![0.0; self.recurrent_weights.len()],
            bias: vec![0.0; self.bias.len()],
        }
    }

    pub fn forward(&self, sequence: &[&[f64]]) -> LstmTrace {
        let h = self.hidden;
        let mut trace = LstmTrace {
            xs: Vec::with_capacity(sequence.len()),
            hs: vec![vec![0.0; h]],
            cs: vec![vec![0.0; h]],
            gates: Vec::with_capacity(sequence.len()),
        };
        for x in sequence {
            let h_prev = trace.hs.last().unwrap();
            let c_prev = trace.cs.last().unwrap();
            let mut z = self.bias.clone();
            for (r, zr) in z.iter_mut().enumerate() {
                let wx = &self.input_weights[r * self.inputs..(r + 1) * self.inputs];
                let wh = &self.recurrent_weights[r * h..(r + 1) * h];
                *zr += wx.iter().zip(x.iter()).map(|(a, b)| a * b).sum::<f64>()
                    + wh.iter().zip(h_prev).map(|(a, b)| a * b).sum::<f64>();
            }
            let mut gates = vec![0.0; 4 * h];
            let mut c = vec![0.0; h];
            let mut hn = vec![0.0; h];
            for j in 0..h {
                let i = sigmoid(z[j]);
                let f = sigmoid(z[h + j]);
                let g = libm::tanh(z[2 * h + j]);
                let o = sigmoid(z[3 * h + j]);
                gates[j] = i;
                gates[h + j] = f;
                gates[2 * h + j] = g;
                gates[3 * h + j] = o;
                c[j] = f * c_prev[j] + i * g;
                hn[j] = o * libm::tanh(c[j]);
            }
            trace.xs.push(x.to_vec());
            trace.gates.push(gates);
            trace.cs.push(c);
            trace.hs.push(hn);
        }
        trace
    }

    /// Backpropagation through time from the gradient of the last hidden
    /// state.
    pub fn backward(&self, trace: &LstmTrace, d_last: &[f64], grad: &mut Lstm) {
        let h = self.hidden;
        let steps = trace.xs.len();
        let mut dh = d_last.to_vec();
        let mut dc = vec![0.0; h];
        let mut dz = vec![0.0; 4 * h];
        for t in (0..steps).rev() {
            let gates = &trace.gates[t];
            let c = &trace.cs[t + 1];
            let c_prev = &trace.cs[t];
            for j in 0..h {
                let (i, f, g, o) = (gates[j], gates[h + j], gates[2 * h + j], gates[3 * h + j]);
                let tc = libm::tanh(c[j]);
                let d_o = dh[j] * tc;
                dc[j] += dh[j] * o * (1.0 - tc * tc);
                dz[j] = dc[j] * g * i * (1.0 - i);
                dz[h + j] = dc[j] * c_prev[j] * f * (1.0 - f);
                dz[2 * h + j] = dc[j] * i * (1.0 - g * g);
                dz[3 * h + j] = d_o * o * (1.0 - o);
                dc[j] *= f;
            }
            let x = &trace.xs[t];
            let h_prev = &trace.hs[t];
            let mut dh_prev = vec![0.0; h];
            for (r, &g) in dz.iter().enumerate() {
                grad.bias[r] += g;
                let gx = &mut grad.input_weights[r * self.inputs..(r + 1) * self.inputs];
                for (gw, xv) in gx.iter_mut().zip(x) {
                    *gw += g * xv;
                }
                let wh = &self.recurrent_weights[r * h..(r + 1) * h];
                let gh = &mut grad.recurrent_weights[r * h..(r + 1) * h];
                for k in 0..h {
                    gh[k] += g * h_prev[k];
                    dh_prev[k] += g * wh[k];
                }
            }
            dh = dh_prev;
        }
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(learning_rate: f64) -> Self {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// Updates `params` in place; `params` and `grads` must list tensors in
    /// the same order on every call.
    pub fn step(&mut self, params: Vec<&mut Vec<f64>>, grads: Vec<&Vec<f64>>) {
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| vec![0.0; g.len()]).collect();
            self.v = self.m.clone();
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - libm::pow(self.beta1, f64::from(t));
        let bc2 = 1.0 - libm::pow(self.beta2, f64::from(t));
        let lr = self.learning_rate * libm::sqrt(bc2) / bc1;
        for (k, (p, g)) in params.into_iter().zip(grads).enumerate() {
            let m = &mut self.m[k];
            let v = &mut self.v[k];
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                p[i] -= lr * m[i] / (libm::sqrt(v[i]) + self.epsilon);
            }
        }
    }
}

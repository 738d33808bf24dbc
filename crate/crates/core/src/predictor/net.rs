use rand::Rng;
use serde::{Deserialize, Serialize};

/// One-hidden-layer tanh network with parameters in a single vector:
/// hidden weights (row-major), hidden biases, output weights, output biases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub input: usize,
    pub hidden: usize,
    pub output: usize,
    pub params: Vec<f64>,
}

pub(crate) struct Activations {
    pub hidden: Vec<f64>,
    pub out: Vec<f64>,
}

impl Mlp {
    pub fn param_count(input: usize, hidden: usize, output: usize) -> usize {
        hidden * input + hidden + output * hidden + output
    }

    pub fn zeros(input: usize, hidden: usize, output: usize) -> Self {
        Self { input, hidden, output, params: vec![0.0; Self::param_count(input, hidden, output)] }
    }

    /// Uniform in ±sqrt(6 / (fan_in + fan_out)) for weights, zero biases.
    pub fn random(input: usize, hidden: usize, output: usize, rng: &mut impl Rng) -> Self {
        let mut m = Self::zeros(input, hidden, output);
        let l1 = (6.0 / (input + hidden) as f64).sqrt();
        let l2 = (6.0 / (hidden + output) as f64).sqrt();
        let (w1, b1, w2, _) = m.offsets();
        for w in &mut m.params[w1..b1] {
            *w = rng.random_range(-l1..l1);
        }
        for w in &mut m.params[w2..w2 + output * hidden] {
            *w = rng.random_range(-l2..l2);
        }
        m
    }

    pub fn is_consistent(&self) -> bool {
        self.params.len() == Self::param_count(self.input, self.hidden, self.output)
    }

    fn offsets(&self) -> (usize, usize, usize, usize) {
        let b1 = self.hidden * self.input;
        let w2 = b1 + self.hidden;
        let b2 = w2 + self.output * self.hidden;
        (0, b1, w2, b2)
    }

    pub(crate) fn activations(&self, x: &[f64]) -> Activations {
        debug_assert_eq!(x.len(), self.input);
        let (_, b1, w2, b2) = self.offsets();
        let p = &self.params;
        let hidden: Vec<f64> = (0..self.hidden)
            .map(|j| {
                let row = &p[j * self.input..(j + 1) * self.input];
                (p[b1 + j] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()).tanh()
            })
            .collect();
        let out = (0..self.output)
            .map(|k| {
                let row = &p[w2 + k * self.hidden..w2 + (k + 1) * self.hidden];
                p[b2 + k] + row.iter().zip(&hidden).map(|(w, h)| w * h).sum::<f64>()
            })
            .collect();
        Activations { hidden, out }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.activations(x).out
    }

    /// Adds the gradient of `Σ upstream[k]·out[k]` to `grad`.
    pub(crate) fn backward(&self, x: &[f64], act: &Activations, upstream: &[f64], grad: &mut [f64]) {
        let (_, b1, w2, b2) = self.offsets();
        let p = &self.params;
        let mut dh = vec![0.0; self.hidden];
        for (k, &u) in upstream.iter().enumerate() {
            if u == 0.0 {
                continue;
            }
            grad[b2 + k] += u;
            for j in 0..self.hidden {
                grad[w2 + k * self.hidden + j] += u * act.hidden[j];
                dh[j] += u * p[w2 + k * self.hidden + j];
            }
        }
        for j in 0..self.hidden {
            let dz = dh[j] * (1.0 - act.hidden[j] * act.hidden[j]);
            if dz == 0.0 {
                continue;
            }
            grad[b1 + j] += dz;
            for (i, v) in x.iter().enumerate() {
                grad[j * self.input + i] += dz * v;
            }
        }
    }
}

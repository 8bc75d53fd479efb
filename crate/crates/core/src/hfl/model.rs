//! One-hidden-layer ReLU/softmax network on a flat parameter vector.

use rand::Rng;
use serde::Serialize;

use super::data::Dataset;
use crate::error::{domain, Error, Result};

/// Layer widths. Parameters are laid out as `W1 (hidden x input)`, `b1`,
/// `W2 (output x hidden)`, `b2`, all row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Mlp {
    pub input: usize,
    pub hidden: usize,
    pub output: usize,
}

impl Default for Mlp {
    fn default() -> Self {
        Mlp { input: 784, hidden: 20, output: 10 }
    }
}

/// Flattened model weights at round `round`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelState {
    pub m: Vec<f64>,
    pub round: usize,
}

/// Loss and activations of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub loss: f64,
    /// ReLU outputs, `n x hidden`.
    pub hidden: Vec<f64>,
    /// Softmax outputs, `n x output`.
    pub probs: Vec<f64>,
}

impl Mlp {
    pub fn num_params(&self) -> usize {
        self.hidden * self.input + self.hidden + self.output * self.hidden + self.output
    }

    fn offsets(&self) -> (usize, usize, usize) {
        let b1 = self.hidden * self.input;
        let w2 = b1 + self.hidden;
        (b1, w2, w2 + self.output * self.hidden)
    }

    /// Uniform `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` weights and biases.
    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R) -> ModelState {
        let (_, w2, _) = self.offsets();
        let a1 = 1.0 / (self.input as f64).sqrt();
        let a2 = 1.0 / (self.hidden as f64).sqrt();
        let m = (0..self.num_params())
            .map(|i| {
                let a = if i < w2 { a1 } else { a2 };
                rng.random_range(-a..a)
            })
            .collect();
        ModelState { m, round: 0 }
    }

    fn check(&self, model: &ModelState, data: &Dataset) -> Result<()> {
        if model.m.len() != self.num_params() {
            return Err(Error::Dimension { expected: self.num_params(), got: model.m.len() });
        }
        if data.dim != self.input {
            return Err(Error::Dimension { expected: self.input, got: data.dim });
        }
        if data.is_empty() {
            return Err(domain("empty batch"));
        }
        Ok(())
    }

    fn sample_forward(&self, m: &[f64], x: &[f64], hidden: &mut [f64], probs: &mut [f64]) {
        let (b1, w2, b2) = self.offsets();
        for (j, h) in hidden.iter_mut().enumerate() {
            let row = &m[j * self.input..(j + 1) * self.input];
            let z = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + m[b1 + j];
            *h = z.max(0.0);
        }
        let mut top = f64::NEG_INFINITY;
        for (o, p) in probs.iter_mut().enumerate() {
            let row = &m[w2 + o * self.hidden..w2 + (o + 1) * self.hidden];
            *p = row.iter().zip(hidden.iter()).map(|(w, v)| w * v).sum::<f64>() + m[b2 + o];
            top = top.max(*p);
        }
        let mut total = 0.0;
        for p in probs.iter_mut() {
            *p = (*p - top).exp();
            total += *p;
        }
        for p in probs.iter_mut() {
            *p /= total;
        }
    }

    /// Mean cross-entropy over `data` plus `lambda_reg * |m|^2`.
    pub fn forward_and_loss(&self, model: &ModelState, data: &Dataset, lambda_reg: f64) -> Result<ForwardPass> {
        self.check(model, data)?;
        let n = data.len();
        let mut hidden = vec![0.0; n * self.hidden];
        let mut probs = vec![0.0; n * self.output];
        let mut ce = 0.0;
        for i in 0..n {
            let h = &mut hidden[i * self.hidden..(i + 1) * self.hidden];
            let p = &mut probs[i * self.output..(i + 1) * self.output];
            self.sample_forward(&model.m, data.row(i), h, p);
            ce -= p[usize::from(data.labels[i])].max(f64::MIN_POSITIVE).ln();
        }
        let reg = lambda_reg * model.m.iter().map(|w| w * w).sum::<f64>();
        Ok(ForwardPass { loss: ce / n as f64 + reg, hidden, probs })
    }

    /// Gradient of [`Mlp::forward_and_loss`] with respect to the parameters.
    pub fn loss_gradient(&self, model: &ModelState, data: &Dataset, lambda_reg: f64) -> Result<Vec<f64>> {
        self.check(model, data)?;
        let (b1, w2, b2) = self.offsets();
        let m = &model.m;
        let mut g = vec![0.0; self.num_params()];
        let mut hidden = vec![0.0; self.hidden];
        let mut probs = vec![0.0; self.output];
        let mut dh = vec![0.0; self.hidden];
        for i in 0..data.len() {
            let x = data.row(i);
            self.sample_forward(m, x, &mut hidden, &mut probs);
            probs[usize::from(data.labels[i])] -= 1.0;
            dh.iter_mut().for_each(|v| *v = 0.0);
            for (o, &d) in probs.iter().enumerate() {
                g[b2 + o] += d;
                let base = w2 + o * self.hidden;
                for j in 0..self.hidden {
                    g[base + j] += d * hidden[j];
                    dh[j] += d * m[base + j];
                }
            }
            for j in 0..self.hidden {
                if hidden[j] <= 0.0 {
                    continue;
                }
                let d = dh[j];
                g[b1 + j] += d;
                for (gw, &v) in g[j * self.input..(j + 1) * self.input].iter_mut().zip(x) {
                    *gw += d * v;
                }
            }
        }
        let inv = 1.0 / data.len() as f64;
        for (gi, &w) in g.iter_mut().zip(m) {
            *gi = *gi * inv + 2.0 * lambda_reg * w;
        }
        Ok(g)
    }

    /// Fraction of rows whose arg-max prediction equals the label.
    pub fn accuracy(&self, model: &ModelState, data: &Dataset) -> Result<f64> {
        let pass = self.forward_and_loss(model, data, 0.0)?;
        let hits = pass
            .probs
            .chunks_exact(self.output)
            .zip(&data.labels)
            .filter(|(p, &l)| {
                let best = p.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|(k, _)| k);
                best == Some(usize::from(l))
            })
            .count();
        Ok(hits as f64 / data.len() as f64)
    }
}

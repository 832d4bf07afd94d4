//! One-hidden-layer ReLU network trained full-batch with Adam.

use rand_distr::{Distribution, StandardNormal};

use crate::data::{Dataset, Task};
use crate::error::{Error, Result};
use crate::optim::Adam;
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub d: usize,
    pub width: usize,
    pub outputs: usize,
    pub task: Task,
    /// Flat parameter vector: `w1 (width×d) | b1 (width) | w2 (outputs×width) | b2 (outputs)`.
    pub params: Vec<f64>,
    pub initial_loss: f64,
    pub final_loss: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct MlpOptions {
    pub width: usize,
    pub weight_decay: f64,
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
}

struct Layout {
    d: usize,
    h: usize,
    o: usize,
}

impl Layout {
    fn w1(&self) -> std::ops::Range<usize> {
        0..self.h * self.d
    }
    fn b1(&self) -> std::ops::Range<usize> {
        let s = self.h * self.d;
        s..s + self.h
    }
    fn w2(&self) -> std::ops::Range<usize> {
        let s = self.h * self.d + self.h;
        s..s + self.o * self.h
    }
    fn b2(&self) -> std::ops::Range<usize> {
        let s = self.h * self.d + self.h + self.o * self.h;
        s..s + self.o
    }
    fn len(&self) -> usize {
        self.h * self.d + self.h + self.o * self.h + self.o
    }
}

impl MlpModel {
    fn layout(&self) -> Layout {
        Layout { d: self.d, h: self.width, o: self.outputs }
    }

    /// Raw network outputs (logits, or the regression value).
    pub fn forward(&self, x: &[f64], hidden: &mut [f64], out: &mut [f64]) {
        forward(&self.layout(), &self.params, x, hidden, out);
    }

    pub fn predict_proba(&self, x: &[f64], out: &mut [f64]) {
        let mut hidden = vec![0.0; self.width];
        self.forward(x, &mut hidden, out);
        softmax(out);
    }

    pub fn predict_value(&self, x: &[f64]) -> f64 {
        let mut hidden = vec![0.0; self.width];
        let mut out = [0.0];
        self.forward(x, &mut hidden, &mut out);
        out[0]
    }
}

fn forward(l: &Layout, p: &[f64], x: &[f64], hidden: &mut [f64], out: &mut [f64]) {
    let w1 = &p[l.w1()];
    let b1 = &p[l.b1()];
    for j in 0..l.h {
        let row = &w1[j * l.d..(j + 1) * l.d];
        let z = b1[j] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        hidden[j] = z.max(0.0);
    }
    let w2 = &p[l.w2()];
    let b2 = &p[l.b2()];
    for c in 0..l.o {
        let row = &w2[c * l.h..(c + 1) * l.h];
        out[c] = b2[c] + row.iter().zip(hidden.iter()).map(|(a, b)| a * b).sum::<f64>();
    }
}

fn softmax(z: &mut [f64]) {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for v in z.iter_mut() {
        *v = (*v - m).exp();
        s += *v;
    }
    for v in z.iter_mut() {
        *v /= s;
    }
}

/// Mean data loss and its gradient (penalty excluded).
fn loss_and_grad(l: &Layout, p: &[f64], data: &Dataset, task: Task, grad: &mut [f64]) -> f64 {
    grad.iter_mut().for_each(|g| *g = 0.0);
    let n = data.len();
    let mut hidden = vec![0.0; l.h];
    let mut out = vec![0.0; l.o];
    let mut dh = vec![0.0; l.h];
    let mut total = 0.0;
    for i in 0..n {
        let x = data.row(i);
        forward(l, p, x, &mut hidden, &mut out);
        let y = data.target(i);
        match task {
            Task::Classification { .. } => {
                let m = out.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = m + out.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
                total += lse - out[y as usize];
                for c in 0..l.o {
                    out[c] = (out[c] - lse).exp() - if c == y as usize { 1.0 } else { 0.0 };
                }
            }
            Task::Regression => {
                let r = out[0] - y;
                total += r * r;
                out[0] = 2.0 * r;
            }
        }
        // out now holds dLoss/dOutput for this example
        dh.iter_mut().for_each(|v| *v = 0.0);
        let w2s = l.w2().start;
        let b2s = l.b2().start;
        for c in 0..l.o {
            let go = out[c];
            grad[b2s + c] += go;
            for j in 0..l.h {
                grad[w2s + c * l.h + j] += go * hidden[j];
                dh[j] += go * p[w2s + c * l.h + j];
            }
        }
        let b1s = l.b1().start;
        for j in 0..l.h {
            if hidden[j] <= 0.0 {
                continue;
            }
            let gj = dh[j];
            grad[b1s + j] += gj;
            let base = j * l.d;
            for a in 0..l.d {
                grad[base + a] += gj * x[a];
            }
        }
    }
    let inv = 1.0 / n as f64;
    grad.iter_mut().for_each(|g| *g *= inv);
    total * inv
}

pub fn fit_mlp(data: &Dataset, opts: &MlpOptions) -> Result<MlpModel> {
    let task = data.task();
    let outputs = task.num_classes().unwrap_or(1);
    let l = Layout { d: data.dim(), h: opts.width, o: outputs };
    let mut params = vec![0.0; l.len()];
    let mut rng = rng_from_seed(opts.seed);
    let s1 = (2.0 / l.d as f64).sqrt();
    for v in &mut params[l.w1()] {
        *v = s1 * Distribution::<f64>::sample(&StandardNormal, &mut rng);
    }
    let s2 = (1.0 / l.h as f64).sqrt();
    for v in &mut params[l.w2()] {
        *v = s2 * Distribution::<f64>::sample(&StandardNormal, &mut rng);
    }

    let weight_ranges = [l.w1(), l.w2()];
    let mut grad = vec![0.0; l.len()];
    let mut adam = Adam::new(l.len(), opts.lr);
    let mut initial_loss = f64::NAN;
    for epoch in 0..opts.epochs {
        let loss = loss_and_grad(&l, &params, data, task, &mut grad);
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("mlp loss at epoch {epoch}")));
        }
        if epoch == 0 {
            initial_loss = loss;
        }
        for r in &weight_ranges {
            for j in r.clone() {
                grad[j] += opts.weight_decay * params[j];
            }
        }
        adam.step(&mut params, &grad);
    }
    let final_loss = loss_and_grad(&l, &params, data, task, &mut grad);
    if !final_loss.is_finite() || params.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("mlp parameters".into()));
    }
    if opts.epochs == 0 {
        initial_loss = final_loss;
    }
    Ok(MlpModel { d: l.d, width: l.h, outputs, task, params, initial_loss, final_loss })
}

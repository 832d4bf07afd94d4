//! Multinomial logistic regression with class 0 as the reference class,
//! trained by damped Newton. With two classes this is the usual sigmoid
//! model `P(y = 1 | x) = σ(wᵀx + b)`.

use nalgebra::{DMatrix, DVector};

use crate::data::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    pub num_classes: usize,
    pub d: usize,
    pub fit_intercept: bool,
    /// `(num_classes − 1) × (d + intercept)` row-major; row `c` belongs to
    /// class `c + 1`, the last column is the bias when present.
    pub params: Vec<f64>,
    pub iterations: usize,
    pub grad_inf_norm: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    pub l2: f64,
    pub fit_intercept: bool,
    pub tol: f64,
    pub max_iter: usize,
}

impl LogisticModel {
    fn width(&self) -> usize {
        self.d + self.fit_intercept as usize
    }

    /// Weight vector and bias of a binary model.
    pub fn binary_weights(&self) -> Option<(&[f64], f64)> {
        if self.num_classes != 2 {
            return None;
        }
        let b = if self.fit_intercept { self.params[self.d] } else { 0.0 };
        Some((&self.params[..self.d], b))
    }

    /// Logits relative to class 0 for classes `1..K`.
    #[inline]
    fn logits(&self, x: &[f64], out: &mut [f64]) {
        let w = self.width();
        for (c, o) in out.iter_mut().enumerate() {
            let row = &self.params[c * w..(c + 1) * w];
            let mut z: f64 = row[..self.d].iter().zip(x).map(|(a, b)| a * b).sum();
            if self.fit_intercept {
                z += row[self.d];
            }
            *o = z;
        }
    }

    pub fn predict_proba(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.num_classes);
        out[0] = 0.0;
        self.logits(x, &mut out[1..]);
        softmax_in_place(out);
    }
}

fn softmax_in_place(z: &mut [f64]) {
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

/// `log(1 + e^z)` without overflow.
#[inline]
pub(crate) fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

#[inline]
pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

struct Problem<'a> {
    data: &'a Dataset,
    classes: usize,
    d: usize,
    width: usize,
    l2: f64,
    fit_intercept: bool,
}

impl Problem<'_> {
    fn n_params(&self) -> usize {
        (self.classes - 1) * self.width
    }

    fn is_weight(&self, j: usize) -> bool {
        !(self.fit_intercept && j % self.width == self.d)
    }

    fn penalty(&self, theta: &[f64]) -> f64 {
        0.5 * self.l2 * theta.iter().enumerate().filter(|(j, _)| self.is_weight(*j)).map(|(_, v)| v * v).sum::<f64>()
    }

    /// Mean loss plus penalty.
    fn objective(&self, theta: &[f64]) -> f64 {
        let n = self.data.len();
        let mut total = 0.0;
        let mut z = vec![0.0; self.classes];
        for i in 0..n {
            let x = self.data.row(i);
            let y = self.data.target(i) as usize;
            total += if self.classes == 2 {
                let s = self.score(theta, 0, x);
                softplus(s) - if y == 1 { s } else { 0.0 }
            } else {
                z[0] = 0.0;
                for c in 1..self.classes {
                    z[c] = self.score(theta, c - 1, x);
                }
                let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
                lse - z[y]
            };
        }
        total / n as f64 + self.penalty(theta)
    }

    #[inline]
    fn score(&self, theta: &[f64], c: usize, x: &[f64]) -> f64 {
        let row = &theta[c * self.width..(c + 1) * self.width];
        let mut s: f64 = row[..self.d].iter().zip(x).map(|(a, b)| a * b).sum();
        if self.fit_intercept {
            s += row[self.d];
        }
        s
    }

    /// Gradient and Hessian of the objective (upper triangle mirrored).
    fn derivatives(&self, theta: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let p = self.n_params();
        let w = self.width;
        let k = self.classes - 1;
        let n = self.data.len();
        let mut g = DVector::<f64>::zeros(p);
        let mut h = DMatrix::<f64>::zeros(p, p);
        let mut xt = vec![0.0; w];
        let mut probs = vec![0.0; self.classes];
        for i in 0..n {
            let x = self.data.row(i);
            xt[..self.d].copy_from_slice(x);
            if self.fit_intercept {
                xt[self.d] = 1.0;
            }
            let y = self.data.target(i) as usize;
            probs[0] = 0.0;
            for c in 0..k {
                probs[c + 1] = self.score(theta, c, x);
            }
            softmax_in_place(&mut probs);
            for c in 0..k {
                let pc = probs[c + 1];
                let r = pc - if y == c + 1 { 1.0 } else { 0.0 };
                for a in 0..w {
                    g[c * w + a] += r * xt[a];
                }
                for c2 in c..k {
                    let s = if c == c2 { pc * (1.0 - pc) } else { -pc * probs[c2 + 1] };
                    if s == 0.0 {
                        continue;
                    }
                    for a in 0..w {
                        let sa = s * xt[a];
                        let row = c * w + a;
                        let start = if c == c2 { a } else { 0 };
                        for b in start..w {
                            h[(row, c2 * w + b)] += sa * xt[b];
                        }
                    }
                }
            }
        }
        let inv_n = 1.0 / n as f64;
        g *= inv_n;
        h *= inv_n;
        for j in 0..p {
            if self.is_weight(j) {
                g[j] += self.l2 * theta[j];
                h[(j, j)] += self.l2;
            }
        }
        for a in 0..p {
            for b in 0..a {
                h[(a, b)] = h[(b, a)];
            }
        }
        (g, h)
    }
}

/// Damped Newton with Armijo backtracking; falls back to a gradient step
/// when the Hessian cannot be factored or is badly conditioned.
pub fn fit_logistic(data: &Dataset, classes: usize, opts: &NewtonOptions, init: Option<&[f64]>) -> Result<LogisticModel> {
    let d = data.dim();
    let width = d + opts.fit_intercept as usize;
    let prob = Problem { data, classes, d, width, l2: opts.l2, fit_intercept: opts.fit_intercept };
    let p = prob.n_params();
    let mut theta: Vec<f64> = match init {
        Some(t) if t.len() == p => t.to_vec(),
        _ => vec![0.0; p],
    };
    let mut f = prob.objective(&theta);
    let mut grad_norm = f64::INFINITY;
    let mut iterations = 0;
    let mut trial = vec![0.0; p];
    while iterations < opts.max_iter {
        let (g, h) = prob.derivatives(&theta);
        grad_norm = g.amax();
        if !grad_norm.is_finite() {
            return Err(Error::NonFinite("logistic gradient".into()));
        }
        if grad_norm <= opts.tol {
            break;
        }
        iterations += 1;
        let newton = h.cholesky().and_then(|ch| {
            let l = ch.l_dirty();
            let diag = (0..p).map(|i| l[(i, i)] * l[(i, i)]);
            let (lo, hi) = diag.fold((f64::INFINITY, 0.0_f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
            (lo > 1e-14 * hi).then(|| ch.solve(&g))
        });
        let dir = newton.unwrap_or_else(|| g.clone());
        let slope = g.dot(&dir);
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            for j in 0..p {
                trial[j] = theta[j] - step * dir[j];
            }
            let ft = prob.objective(&trial);
            if ft.is_finite() && ft <= f - 1e-4 * step * slope {
                theta.copy_from_slice(&trial);
                f = ft;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // No representable decrease left; the gradient is at round-off level.
            break;
        }
    }
    if !f.is_finite() || theta.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("logistic parameters".into()));
    }
    Ok(LogisticModel {
        num_classes: classes,
        d,
        fit_intercept: opts.fit_intercept,
        params: theta,
        iterations,
        grad_inf_norm: grad_norm,
    })
}

/// Training objective at the model's parameters (mean loss plus penalty).
pub fn training_objective(model: &LogisticModel, data: &Dataset, l2: f64) -> f64 {
    let prob = Problem {
        data,
        classes: model.num_classes,
        d: model.d,
        width: model.width(),
        l2,
        fit_intercept: model.fit_intercept,
    };
    prob.objective(&model.params)
}

/// Gradient infinity-norm of the training objective at the model's parameters.
pub fn training_gradient_norm(model: &LogisticModel, data: &Dataset, l2: f64) -> f64 {
    let prob = Problem {
        data,
        classes: model.num_classes,
        d: model.d,
        width: model.width(),
        l2,
        fit_intercept: model.fit_intercept,
    };
    prob.derivatives(&model.params).0.amax()
}

use std::collections::BTreeMap;
use std::f64::consts::PI;

use super::{Diagnostics, FitMethod, ScalingFit, ALPHA_BOUNDS, BETA_BOUNDS};
use crate::error::{Error, Result};
use crate::optim::Adam;
use crate::stats::CompensatedSum;

#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodConfig {
    pub lr: f64,
    pub steps: usize,
    pub alpha_starts: Vec<f64>,
    pub beta_starts: Vec<f64>,
    pub alpha_bounds: (f64, f64),
    pub beta_bounds: (f64, f64),
    pub sigma2_floor: f64,
    pub min_samples: usize,
    pub grad_tol: f64,
}

impl Default for LikelihoodConfig {
    fn default() -> Self {
        LikelihoodConfig {
            lr: 0.05,
            steps: 500,
            alpha_starts: vec![0.5, 1.0, 2.0],
            beta_starts: vec![1.0, 2.0],
            alpha_bounds: ALPHA_BOUNDS,
            beta_bounds: BETA_BOUNDS,
            sigma2_floor: 1e-18,
            min_samples: 20,
            grad_tol: 1e-6,
        }
    }
}

fn half_ln_2pi() -> f64 {
    0.5 * (2.0 * PI).ln()
}

/// Negative log-density of one sample under `N(c k^{−α}, σ² k^{−β})`.
pub fn nll(delta: f64, k: f64, c: f64, alpha: f64, sigma2: f64, beta: f64) -> Result<f64> {
    if !(sigma2 > 0.0) {
        return Err(Error::InvalidArgument(format!("sigma2 must be positive, got {sigma2}")));
    }
    let ln_k = k.ln();
    let r = delta - c * k.powf(-alpha);
    Ok(half_ln_2pi() + 0.5 * sigma2.ln() - 0.5 * beta * ln_k + r * r * (beta * ln_k).exp() / (2.0 * sigma2))
}

/// Mean of [`nll`] over `(k, Δ)` samples.
pub fn mean_nll(samples: &[(f64, f64)], c: f64, alpha: f64, sigma2: f64, beta: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Insufficient("no samples".into()));
    }
    let mut acc = CompensatedSum::new();
    for &(k, d) in samples {
        acc.add(nll(d, k, c, alpha, sigma2, beta)?);
    }
    Ok(acc.value() / samples.len() as f64)
}

/// Weighted least-squares optimum `Σ k^{β−α} Δ / Σ k^{β−2α}`.
pub fn analytic_c(alpha: f64, beta: f64, samples: &[(f64, f64)]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Insufficient("no samples".into()));
    }
    // Both sums are scaled by exp(−shift) so the largest weight is 1.
    let shift = samples.iter().map(|&(k, _)| (beta - 2.0 * alpha) * k.ln()).fold(f64::NEG_INFINITY, f64::max);
    let mut num = CompensatedSum::new();
    let mut den = CompensatedSum::new();
    for &(k, d) in samples {
        let ln_k = k.ln();
        let w = ((beta - 2.0 * alpha) * ln_k - shift).exp();
        den.add(w);
        num.add(w * (alpha * ln_k).exp() * d);
    }
    let c = num.value() / den.value();
    if !c.is_finite() {
        return Err(Error::NonFinite(format!("analytic c at alpha={alpha}, beta={beta}")));
    }
    Ok(c)
}

/// `Σ k^β (Δ − c k^{−α})² / m`.
pub fn analytic_sigma2(alpha: f64, beta: f64, c: f64, samples: &[(f64, f64)]) -> f64 {
    let mut acc = CompensatedSum::new();
    for &(k, d) in samples {
        let r = d - c * k.powf(-alpha);
        acc.add(k.powf(beta) * r * r);
    }
    acc.value() / samples.len() as f64
}

/// Samples collapsed to per-cardinality count, mean and centred sum of
/// squares. Residual sums at any `c k^{−α}` follow exactly from these
/// without revisiting the raw samples.
#[derive(Debug, Clone)]
pub struct GroupedSamples {
    ln_k: Vec<f64>,
    count: Vec<f64>,
    mean: Vec<f64>,
    ss: Vec<f64>,
    total: f64,
    mean_ln_k: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileEval {
    pub c: f64,
    /// σ² after flooring.
    pub sigma2: f64,
    pub floored: bool,
    pub nll: f64,
    /// Gradient of the profiled mean NLL in `(α, β)`.
    pub grad: [f64; 2],
}

impl GroupedSamples {
    pub fn new(samples: &[(f64, f64)]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Insufficient("no samples".into()));
        }
        let mut groups: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
        for &(k, d) in samples {
            if !(k >= 1.0) || !k.is_finite() {
                return Err(Error::InvalidArgument(format!("cardinality must be >= 1, got {k}")));
            }
            if !d.is_finite() {
                return Err(Error::NonFinite(format!("delta at k={k}")));
            }
            // Positive floats order the same as their bit patterns.
            groups.entry(k.to_bits()).or_default().push(d);
        }
        let mut g = GroupedSamples {
            ln_k: Vec::with_capacity(groups.len()),
            count: Vec::with_capacity(groups.len()),
            mean: Vec::with_capacity(groups.len()),
            ss: Vec::with_capacity(groups.len()),
            total: samples.len() as f64,
            mean_ln_k: 0.0,
        };
        let mut ln_sum = CompensatedSum::new();
        for (bits, ds) in groups {
            let ln_k = f64::from_bits(bits).ln();
            let n = ds.len() as f64;
            let mean = crate::stats::sum(ds.iter().copied()) / n;
            let ss = crate::stats::sum(ds.iter().map(|d| (d - mean) * (d - mean)));
            ln_sum.add(n * ln_k);
            g.ln_k.push(ln_k);
            g.count.push(n);
            g.mean.push(mean);
            g.ss.push(ss);
        }
        g.mean_ln_k = ln_sum.value() / g.total;
        Ok(g)
    }

    pub fn n_cardinalities(&self) -> usize {
        self.ln_k.len()
    }

    pub fn n_samples(&self) -> usize {
        self.total as usize
    }

    pub fn all_zero(&self) -> bool {
        self.mean.iter().all(|&m| m == 0.0) && self.ss.iter().all(|&s| s == 0.0)
    }

    /// Profiled mean NLL at `(α, β)` with `c` and `σ²` at their closed-form
    /// optima. By the envelope theorem the partials of the full NLL at fixed
    /// `(c, σ²)` are the gradient of the profile.
    pub fn profile(&self, alpha: f64, beta: f64, sigma2_floor: f64) -> Result<ProfileEval> {
        let shift = self.ln_k.iter().map(|l| (beta - 2.0 * alpha) * l).fold(f64::NEG_INFINITY, f64::max);
        let mut num = CompensatedSum::new();
        let mut den = CompensatedSum::new();
        for j in 0..self.ln_k.len() {
            let l = self.ln_k[j];
            let w = ((beta - 2.0 * alpha) * l - shift).exp() * self.count[j];
            den.add(w);
            num.add(w * (alpha * l).exp() * self.mean[j]);
        }
        let c = num.value() / den.value();
        if !c.is_finite() {
            return Err(Error::NonFinite(format!("analytic c at alpha={alpha}, beta={beta}")));
        }

        let mut s2 = CompensatedSum::new();
        let mut weighted_mean_res = Vec::with_capacity(self.ln_k.len());
        for j in 0..self.ln_k.len() {
            let l = self.ln_k[j];
            let rbar = self.mean[j] - c * (-alpha * l).exp();
            weighted_mean_res.push(rbar);
            s2.add((beta * l).exp() * (self.ss[j] + self.count[j] * rbar * rbar));
        }
        let raw = s2.value() / self.total;
        let floored = !(raw > sigma2_floor);
        let sigma2 = if floored { sigma2_floor } else { raw };
        let nll = half_ln_2pi() + 0.5 * sigma2.ln() - 0.5 * beta * self.mean_ln_k + raw / (2.0 * sigma2);

        let mut ga = CompensatedSum::new();
        let mut gb = CompensatedSum::new();
        for j in 0..self.ln_k.len() {
            let l = self.ln_k[j];
            let kb = (beta * l).exp();
            let rbar = weighted_mean_res[j];
            ga.add(kb * c * (-alpha * l).exp() * l * self.count[j] * rbar);
            gb.add(kb * l * (self.ss[j] + self.count[j] * rbar * rbar));
        }
        let grad = [ga.value() / (sigma2 * self.total), -0.5 * self.mean_ln_k + gb.value() / (2.0 * sigma2 * self.total)];
        if !nll.is_finite() || !grad.iter().all(|g| g.is_finite()) {
            return Err(Error::NonFinite(format!("profile NLL at alpha={alpha}, beta={beta}")));
        }
        Ok(ProfileEval { c, sigma2, floored, nll, grad })
    }
}

fn projected_norm(grad: [f64; 2], params: [f64; 2], bounds: [(f64, f64); 2]) -> f64 {
    let mut s = 0.0;
    for i in 0..2 {
        let g = grad[i];
        let at_lo = params[i] <= bounds[i].0 && g > 0.0;
        let at_hi = params[i] >= bounds[i].1 && g < 0.0;
        if !(at_lo || at_hi) {
            s += g * g;
        }
    }
    s.sqrt()
}

struct RunResult {
    alpha: f64,
    beta: f64,
    eval: ProfileEval,
    converged: bool,
}

fn run_adam(g: &GroupedSamples, start: [f64; 2], cfg: &LikelihoodConfig) -> Option<RunResult> {
    let bounds = [cfg.alpha_bounds, cfg.beta_bounds];
    let mut p = [start[0].clamp(bounds[0].0, bounds[0].1), start[1].clamp(bounds[1].0, bounds[1].1)];
    let mut adam = Adam::new(2, cfg.lr);
    let mut best: Option<RunResult> = None;
    for _ in 0..=cfg.steps {
        let Ok(eval) = g.profile(p[0], p[1], cfg.sigma2_floor) else { break };
        let converged = projected_norm(eval.grad, p, bounds) < cfg.grad_tol;
        if best.as_ref().is_none_or(|b| eval.nll < b.eval.nll) {
            best = Some(RunResult { alpha: p[0], beta: p[1], eval, converged });
        }
        if converged {
            break;
        }
        adam.step(&mut p, &eval.grad);
        for i in 0..2 {
            p[i] = p[i].clamp(bounds[i].0, bounds[i].1);
        }
    }
    best
}

/// Maximum-likelihood `(c, α, σ², β)` for one point's `(k, Δ)` samples.
pub fn fit_likelihood(point_id: u32, samples: &[(f64, f64)], cfg: &LikelihoodConfig) -> Result<ScalingFit> {
    if samples.len() < cfg.min_samples {
        return Err(Error::Insufficient(format!("{} samples, need at least {}", samples.len(), cfg.min_samples)));
    }
    let g = GroupedSamples::new(samples)?;
    let mut warnings = Vec::new();
    if g.n_cardinalities() == 1 {
        warnings.push(super::warning::SINGLE_CARDINALITY.to_string());
    }
    if g.all_zero() {
        warnings.push(super::warning::ALL_ZERO.to_string());
        return Ok(ScalingFit {
            point_id,
            method: FitMethod::Likelihood,
            c: 0.0,
            alpha: 0.0,
            sigma2: 0.0,
            beta: 0.0,
            diagnostics: Diagnostics { r2: None, nll: None, n_samples: samples.len(), converged: false, warnings },
        });
    }

    let mut best: Option<RunResult> = None;
    for &a0 in &cfg.alpha_starts {
        for &b0 in &cfg.beta_starts {
            if let Some(run) = run_adam(&g, [a0, b0], cfg) {
                if best.as_ref().is_none_or(|b| run.eval.nll < b.eval.nll) {
                    best = Some(run);
                }
            }
        }
    }
    let best = best.ok_or_else(|| Error::NonFinite("likelihood undefined at every start".into()))?;
    if best.eval.floored {
        warnings.push(super::warning::SIGMA2_FLOORED.to_string());
    }
    Ok(ScalingFit {
        point_id,
        method: FitMethod::Likelihood,
        c: best.eval.c,
        alpha: best.alpha,
        sigma2: best.eval.sigma2,
        beta: best.beta,
        diagnostics: Diagnostics {
            r2: None,
            nll: Some(best.eval.nll),
            n_samples: samples.len(),
            converged: best.converged,
            warnings,
        },
    })
}

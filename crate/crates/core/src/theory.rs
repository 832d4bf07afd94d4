//! Numeric checks of the asymptotic contribution formulas: the `1/k²` law
//! for least squares and the `1/k` leading term for M-estimators evaluated
//! on a held-out metric.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, LinearPopulation, TwoGaussian};
use crate::error::{Error, Result};
use crate::fitting::ScalingFit;
use crate::models::{fit_logistic, sigmoid, softplus, Evaluator, LogisticParams, ModelSpec, NewtonOptions};
use crate::rng::{mix, rng_from_seed, streams};
use crate::sampler::{try_sample_contribution, CampaignPoint, PoolSource, Population, SamplingContext};
use crate::stats::{self, CompensatedSum};

fn cholesky(m: &DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m.clone()).ok_or_else(|| Error::Singular(format!("{what} is not positive definite")))
}

/// `xᵀ Σ⁻¹ x`.
pub fn mahalanobis_sq(sigma: &DMatrix<f64>, x: &DVector<f64>) -> Result<f64> {
    let ch = cholesky(sigma, "covariance")?;
    Ok(x.dot(&ch.solve(x)))
}

/// A fixed design `X_D` plus one extra point for ordinary least squares.
#[derive(Debug, Clone)]
pub struct LinearTheoryInstance {
    pub beta_star: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub sigma2_noise: f64,
    /// `k × d` design.
    pub x_d: DMatrix<f64>,
    pub x: DVector<f64>,
    /// `y − xᵀβ*` of the added point.
    pub eps: f64,
}

impl LinearTheoryInstance {
    pub fn new(
        beta_star: DVector<f64>,
        sigma: DMatrix<f64>,
        sigma2_noise: f64,
        x_d: DMatrix<f64>,
        x: DVector<f64>,
        eps: f64,
    ) -> Result<Self> {
        let d = beta_star.len();
        if sigma.shape() != (d, d) || x_d.ncols() != d || x.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: x.len() });
        }
        if x_d.nrows() < d + 5 {
            return Err(Error::InvalidArgument(format!("design needs at least d+5={} rows, has {}", d + 5, x_d.nrows())));
        }
        if !(sigma2_noise >= 0.0) || !eps.is_finite() {
            return Err(Error::InvalidArgument("noise variance must be >= 0 and eps finite".into()));
        }
        let finite = |m: &[f64]| m.iter().all(|v| v.is_finite());
        if !finite(beta_star.as_slice()) || !finite(sigma.as_slice()) || !finite(x_d.as_slice()) || !finite(x.as_slice()) {
            return Err(Error::NonFinite("theory instance".into()));
        }
        cholesky(&sigma, "covariance")?;
        Ok(LinearTheoryInstance { beta_star, sigma, sigma2_noise, x_d, x, eps })
    }

    /// Draws `X_D` with `k` rows from the population's feature distribution.
    pub fn with_random_design(pop: &LinearPopulation, k: usize, x: DVector<f64>, eps: f64, seed: u64) -> Result<Self> {
        let data = pop.draw(k, seed);
        let x_d = DMatrix::from_row_slice(k, pop.dim(), data.features());
        Self::new(pop.beta_star().clone(), pop.covariance().clone(), pop.noise_var(), x_d, x, eps)
    }

    pub fn k(&self) -> usize {
        self.x_d.nrows()
    }

    fn gram(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let a = self.x_d.transpose() * &self.x_d;
        let b = &a + &self.x * self.x.transpose();
        (a, b)
    }
}

/// Leading term `(2σ² − ε²) xᵀΣ⁻¹x / k²`.
pub fn theorem1_prediction(inst: &LinearTheoryInstance, k: f64) -> Result<f64> {
    let q = mahalanobis_sq(&inst.sigma, &inst.x)?;
    Ok((2.0 * inst.sigma2_noise - inst.eps * inst.eps) * q / (k * k))
}

/// Exact `E[Δ | z, X_D]` at finite `k`:
/// `σ² tr((A⁻¹ − B⁻¹)Σ) − (ε² − σ²) xᵀB⁻¹ΣB⁻¹x` with `A = XᵀX`, `B = A + xxᵀ`.
pub fn theorem1_exact(inst: &LinearTheoryInstance) -> Result<f64> {
    let (a, b) = inst.gram();
    let ca = cholesky(&a, "design Gram matrix")?;
    let cb = cholesky(&b, "augmented Gram matrix")?;
    let diff = ca.solve(&inst.sigma) - cb.solve(&inst.sigma);
    let bx = cb.solve(&inst.x);
    let s2 = inst.sigma2_noise;
    Ok(s2 * diff.trace() - (inst.eps * inst.eps - s2) * bx.dot(&(&inst.sigma * &bx)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonteCarloEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl MonteCarloEstimate {
    pub fn from_values(values: &[f64]) -> Result<Self> {
        let mean = stats::mean(values).ok_or_else(|| Error::Insufficient("no draws".into()))?;
        let stderr = stats::variance(values).map(|v| (v / values.len() as f64).sqrt()).unwrap_or(0.0);
        Ok(MonteCarloEstimate { mean, stderr, n: values.len() })
    }
}

const DRAWS_PER_CHUNK: usize = 1000;

/// Monte Carlo over the label noise of `X_D`: each draw refits least squares
/// with and without `z` and differences the exact population MSE
/// `σ² + (β − β*)ᵀΣ(β − β*)`.
pub fn theorem1_oracle(inst: &LinearTheoryInstance, n_draws: usize, seed: u64) -> Result<MonteCarloEstimate> {
    let (a, b) = inst.gram();
    let ca = cholesky(&a, "design Gram matrix")?;
    let cb = cholesky(&b, "augmented Gram matrix")?;
    let sd = inst.sigma2_noise.sqrt();
    let k = inst.k();
    let chunks = n_draws.div_ceil(DRAWS_PER_CHUNK);
    let parts: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = rng_from_seed(mix(seed, streams::NOISE, c as u64));
            let n = DRAWS_PER_CHUNK.min(n_draws - c * DRAWS_PER_CHUNK);
            let mut noise = DVector::zeros(k);
            (0..n)
                .map(|_| {
                    for v in noise.iter_mut() {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        *v = sd * z;
                    }
                    // β̂ − β* for each fit; the population MSE depends only on it.
                    let g = inst.x_d.transpose() * &noise;
                    let u = ca.solve(&g);
                    let v = cb.solve(&(g + &inst.x * inst.eps));
                    u.dot(&(&inst.sigma * &u)) - v.dot(&(&inst.sigma * &v))
                })
                .collect()
        })
        .collect();
    MonteCarloEstimate::from_values(&parts.concat())
}

/// Population-surrogate quantities of a binary logistic model without
/// intercept.
#[derive(Debug, Clone)]
pub struct MEstimatorInstance {
    pub theta_star: DVector<f64>,
    /// Hessian of the mean loss at `θ*`.
    pub v: DMatrix<f64>,
    /// Gradient of the held-out metric at `θ*`.
    pub metric_grad: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MEstimatorConfig {
    pub reference_size: usize,
    pub validation_size: usize,
    pub newton_tol: f64,
}

impl Default for MEstimatorConfig {
    fn default() -> Self {
        MEstimatorConfig { reference_size: 200_000, validation_size: 1000, newton_tol: 1e-10 }
    }
}

/// `∇ℓ(θ; x, y) = −x (y − σ(θᵀx))`.
pub fn logistic_grad(theta: &DVector<f64>, x: &[f64], y: f64) -> DVector<f64> {
    let p = sigmoid(theta.iter().zip(x).map(|(a, b)| a * b).sum());
    DVector::from_iterator(x.len(), x.iter().map(|v| -v * (y - p)))
}

/// Mean logistic loss of `θ` on a binary dataset.
pub fn logistic_mean_loss(theta: &DVector<f64>, data: &Dataset) -> f64 {
    let mut acc = CompensatedSum::new();
    for i in 0..data.len() {
        let z: f64 = theta.iter().zip(data.row(i)).map(|(a, b)| a * b).sum();
        acc.add(softplus(z) - data.target(i) * z);
    }
    acc.value() / data.len() as f64
}

impl MEstimatorInstance {
    /// `θ*` and `V` from `reference`, `∇L(θ*)` from `validation`.
    pub fn logistic(reference: &Dataset, validation: &Dataset, newton_tol: f64) -> Result<Self> {
        if reference.task().num_classes() != Some(2) || validation.task().num_classes() != Some(2) {
            return Err(Error::TaskMismatch("M-estimator instance needs binary classification data".into()));
        }
        let d = reference.dim();
        if validation.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, got: validation.dim() });
        }
        let opts = NewtonOptions { l2: 0.0, fit_intercept: false, tol: newton_tol, max_iter: 200 };
        let model = fit_logistic(reference, 2, &opts, None)?;
        let theta = DVector::from_column_slice(model.binary_weights().expect("binary model").0);
        let mut v = DMatrix::zeros(d, d);
        for i in 0..reference.len() {
            let x = DVector::from_column_slice(reference.row(i));
            let p = sigmoid(theta.dot(&x));
            v += (p * (1.0 - p)) * &x * x.transpose();
        }
        v /= reference.len() as f64;
        let mut g = DVector::zeros(d);
        for i in 0..validation.len() {
            g += logistic_grad(&theta, validation.row(i), validation.target(i));
        }
        g /= validation.len() as f64;
        Self::new(theta, v, g)
    }

    pub fn new(theta_star: DVector<f64>, v: DMatrix<f64>, metric_grad: DVector<f64>) -> Result<Self> {
        let d = theta_star.len();
        if v.shape() != (d, d) || metric_grad.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: metric_grad.len() });
        }
        if (&v - v.transpose()).amax() > 1e-10 * v.amax().max(1.0) {
            return Err(Error::InvalidArgument("V must be symmetric".into()));
        }
        cholesky(&v, "V")?;
        Ok(MEstimatorInstance { theta_star, v, metric_grad })
    }
}

/// `(1/k) ∇L(θ*)ᵀ V⁻¹ ∇ℓ(θ*; x, y)` for the logistic loss.
pub fn theorem2_leading_term(inst: &MEstimatorInstance, x: &[f64], y: f64, k: f64) -> Result<f64> {
    if x.len() != inst.theta_star.len() {
        return Err(Error::DimensionMismatch { expected: inst.theta_star.len(), got: x.len() });
    }
    theorem2_from_gradient(inst, &logistic_grad(&inst.theta_star, x, y), k)
}

/// Leading term for an arbitrary per-point gradient.
pub fn theorem2_from_gradient(inst: &MEstimatorInstance, grad: &DVector<f64>, k: f64) -> Result<f64> {
    let ch = cholesky(&inst.v, "V")?;
    Ok(inst.metric_grad.dot(&ch.solve(grad)) / k)
}

/// Unregularized logistic regression without intercept, the model the
/// M-estimator instance describes.
pub fn theorem2_model(newton_tol: f64) -> ModelSpec {
    ModelSpec::LogisticRegression(LogisticParams { l2: 0.0, fit_intercept: false, tol: newton_tol, max_iter: 200 })
}

/// Sampled `E[Δ]` for `z = (x, y)` over `n` fresh i.i.d. preceding sets of
/// size `k`, with loss measured on `validation`. Failed fits are skipped and
/// counted in the second return value.
pub fn theorem2_sampled(
    population: &TwoGaussian,
    validation: &Dataset,
    x: &[f64],
    y: f64,
    k: usize,
    n: usize,
    newton_tol: f64,
    seed: u64,
) -> Result<(MonteCarloEstimate, usize)> {
    let pop = Population::TwoGaussian(population.clone());
    let model = theorem2_model(newton_tol);
    let ctx = SamplingContext {
        pool: PoolSource::Population(&pop),
        evaluator: Evaluator::TestSet(validation),
        model: &model,
        balanced: false,
    };
    let z = CampaignPoint { id: 0, x: x.to_vec(), y, pool_index: None };
    let draws: Vec<Option<f64>> = (0..n as u64)
        .into_par_iter()
        .map(|i| try_sample_contribution(&ctx, &z, k, mix(seed, streams::SUBSET, i)).ok())
        .collect();
    let ok: Vec<f64> = draws.iter().flatten().copied().collect();
    Ok((MonteCarloEstimate::from_values(&ok)?, n - ok.len()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlphaRateReport {
    pub n_points: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    pub expected_alpha: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Median and interquartile range of fitted `α`, and whether the median is
/// within `tolerance` of `expected_alpha`.
pub fn alpha_rate_check(fits: &[ScalingFit], expected_alpha: f64, tolerance: f64) -> Result<AlphaRateReport> {
    let alphas: Vec<f64> = fits.iter().map(|f| f.alpha).collect();
    let median = stats::median(&alphas).ok_or_else(|| Error::Insufficient("no fits".into()))?;
    let q1 = stats::quantile(&alphas, 0.25).expect("nonempty");
    let q3 = stats::quantile(&alphas, 0.75).expect("nonempty");
    Ok(AlphaRateReport {
        n_points: fits.len(),
        median,
        q1,
        q3,
        iqr: q3 - q1,
        expected_alpha,
        tolerance,
        pass: (median - expected_alpha).abs() <= tolerance,
    })
}

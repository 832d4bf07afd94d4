//! Per-point scaling-law fits.
//!
//! Two estimators recover `ψ_k(z) ≈ c / k^α`: ordinary least squares on
//! `log |ψ̂_k|` against `log k` (needs many samples per cardinality), and a
//! Gaussian likelihood `Δ | k ~ N(c k^{−α}, σ² k^{−β})` fit directly to the
//! raw samples.

mod likelihood;
mod loglinear;
mod report;
mod variance;

pub use likelihood::{
    analytic_c, analytic_sigma2, fit_likelihood, mean_nll, nll, GroupedSamples, LikelihoodConfig, ProfileEval,
};
pub use loglinear::{fit_loglinear, LogLinearFit};
pub use report::{per_cardinality_means, r2_report, R2Report};
pub use variance::{fit_variance_law, VarianceLaw};

use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampler::{estimate_variance, SampleStore};

pub const ALPHA_BOUNDS: (f64, f64) = (0.0, 10.0);
pub const BETA_BOUNDS: (f64, f64) = (0.0, 8.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    Loglinear,
    Likelihood,
    Amortized,
}

impl std::fmt::Display for FitMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FitMethod::Loglinear => "loglinear",
            FitMethod::Likelihood => "likelihood",
            FitMethod::Amortized => "amortized",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    pub r2: Option<f64>,
    pub nll: Option<f64>,
    pub n_samples: usize,
    pub converged: bool,
    #[serde(default)]
    pub warnings: Vec<String>,
}

/// Fitted `(c, α, σ², β)` for one point. Serialized as one flat JSON object
/// per line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub point_id: u32,
    pub method: FitMethod,
    pub c: f64,
    pub alpha: f64,
    pub sigma2: f64,
    pub beta: f64,
    #[serde(flatten)]
    pub diagnostics: Diagnostics,
}

pub mod warning {
    pub const SINGLE_CARDINALITY: &str = "single_cardinality";
    pub const ALL_ZERO: &str = "all_zero_deltas";
    pub const SIGN_UNSTABLE: &str = "sign_unstable";
    pub const DROPPED_ZERO: &str = "dropped_zero_means";
    pub const ALPHA_CLAMPED: &str = "alpha_clamped";
    pub const NO_VARIANCE_LAW: &str = "no_variance_law";
    pub const SIGMA2_FLOORED: &str = "sigma2_floored";
}

impl ScalingFit {
    /// Wraps a log-space fit. Variance parameters come from `variance` when
    /// available and are zero otherwise.
    pub fn from_loglinear(point_id: u32, fit: &LogLinearFit, variance: Option<&VarianceLaw>, n_samples: usize) -> Self {
        let mut warnings = Vec::new();
        if fit.dropped > 0 {
            warnings.push(format!("{}:{}", warning::DROPPED_ZERO, fit.dropped));
        }
        if fit.sign_unstable {
            warnings.push(warning::SIGN_UNSTABLE.to_string());
        }
        let alpha = fit.alpha.clamp(ALPHA_BOUNDS.0, ALPHA_BOUNDS.1);
        if alpha != fit.alpha {
            warnings.push(warning::ALPHA_CLAMPED.to_string());
        }
        let (sigma2, beta) = match variance {
            Some(v) => (v.sigma2, v.beta.clamp(BETA_BOUNDS.0, BETA_BOUNDS.1)),
            None => {
                warnings.push(warning::NO_VARIANCE_LAW.to_string());
                (0.0, 0.0)
            }
        };
        ScalingFit {
            point_id,
            method: FitMethod::Loglinear,
            c: fit.sign_c * fit.log_abs_c.exp(),
            alpha,
            sigma2,
            beta,
            diagnostics: Diagnostics { r2: Some(fit.r2), nll: None, n_samples, converged: true, warnings },
        }
    }

    pub fn has_warning(&self, w: &str) -> bool {
        self.diagnostics.warnings.iter().any(|x| x == w || x.starts_with(&format!("{w}:")))
    }
}

/// `c · k^{−α}`.
pub fn predict_psi(fit: &ScalingFit, k: f64) -> f64 {
    fit.c * k.powf(-fit.alpha)
}

pub fn write_fits_jsonl<W: Write>(mut out: W, fits: &[ScalingFit]) -> Result<()> {
    for f in fits {
        serde_json::to_writer(&mut out, f)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_fits_jsonl<R: BufRead>(input: R) -> Result<Vec<ScalingFit>> {
    let mut out = Vec::new();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

/// Fits one point of a store. Log-space fits use the means at every grid
/// value with records and a variance law where two or more variances exist.
pub fn fit_point(store: &SampleStore, point_id: u32, method: FitMethod, cfg: &LikelihoodConfig) -> Result<ScalingFit> {
    let samples: Vec<(f64, f64)> = store.samples(point_id).into_iter().map(|(k, d)| (k as f64, d)).collect();
    if samples.is_empty() {
        return Err(Error::NoRecords { point_id, k: 0 });
    }
    match method {
        FitMethod::Likelihood => fit_likelihood(point_id, &samples, cfg),
        FitMethod::Loglinear => {
            let grid: Vec<u32> =
                store.meta().grid.iter().copied().filter(|&k| !store.deltas_at(point_id, k).is_empty()).collect();
            let means = per_cardinality_means(store, point_id, &grid)?;
            let fit = fit_loglinear(&means)?;
            let vars: Vec<(f64, f64)> =
                grid.iter().filter_map(|&k| estimate_variance(store, point_id, k).ok().map(|(v, _)| (k as f64, v))).collect();
            let law = fit_variance_law(&vars).ok();
            Ok(ScalingFit::from_loglinear(point_id, &fit, law.as_ref(), samples.len()))
        }
        FitMethod::Amortized => Err(Error::InvalidArgument("amortized fits come from a trained network".into())),
    }
}

/// [`fit_point`] for every point in the store, in point-id order.
pub fn fit_store(store: &SampleStore, method: FitMethod, cfg: &LikelihoodConfig) -> Vec<(u32, Result<ScalingFit>)> {
    store.point_ids().into_par_iter().map(|id| (id, fit_point(store, id, method, cfg))).collect()
}

#[cfg(test)]
pub(crate) fn simple_fit(point_id: u32, c: f64, alpha: f64) -> ScalingFit {
    ScalingFit {
        point_id,
        method: FitMethod::Likelihood,
        c,
        alpha,
        sigma2: 1.0,
        beta: 1.0,
        diagnostics: Diagnostics { r2: Some(1.0), nll: None, n_samples: 0, converged: true, warnings: vec![] },
    }
}

use serde::Serialize;

use super::{fit_loglinear, predict_psi, ScalingFit};
use crate::error::Result;
use crate::sampler::{estimate_psi, SampleStore};
use crate::stats::r_squared;

/// `(k, ψ̂_k)` for every cardinality in `grid`.
pub fn per_cardinality_means(store: &SampleStore, point_id: u32, grid: &[u32]) -> Result<Vec<(f64, f64)>> {
    grid.iter().map(|&k| Ok((k as f64, estimate_psi(store, point_id, k)?.mean))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct R2Report {
    /// Log-space fit quality of each point's own means; `None` when the
    /// point has fewer than two non-zero means.
    pub per_point: Vec<(u32, Option<f64>)>,
    /// Predictions against `ψ̂_k` across points at each fixed `k`.
    pub per_cardinality: Vec<(u32, f64)>,
    /// Pooled over all `(point, k)` pairs in the original space.
    pub overall: f64,
}

pub fn r2_report(store: &SampleStore, fits: &[ScalingFit], grid: &[u32]) -> Result<R2Report> {
    let mut means = Vec::with_capacity(fits.len());
    for f in fits {
        means.push(per_cardinality_means(store, f.point_id, grid)?);
    }
    let per_point = fits.iter().zip(&means).map(|(f, m)| (f.point_id, fit_loglinear(m).ok().map(|l| l.r2))).collect();

    let mut per_cardinality = Vec::with_capacity(grid.len());
    for (j, &k) in grid.iter().enumerate() {
        let obs: Vec<f64> = means.iter().map(|m| m[j].1).collect();
        let pred: Vec<f64> = fits.iter().map(|f| predict_psi(f, k as f64)).collect();
        per_cardinality.push((k, r_squared(&obs, &pred)));
    }

    let mut obs = Vec::new();
    let mut pred = Vec::new();
    for (f, m) in fits.iter().zip(&means) {
        for &(k, psi) in m {
            obs.push(psi);
            pred.push(predict_psi(f, k));
        }
    }
    Ok(R2Report { per_point, per_cardinality, overall: r_squared(&obs, &pred) })
}

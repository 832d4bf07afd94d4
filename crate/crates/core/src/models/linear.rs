use nalgebra::{DMatrix, DVector};

use crate::data::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub coef: Vec<f64>,
    pub intercept: f64,
    /// Set when the normal equations were singular and a tiny ridge was added.
    pub ridge_used: bool,
}

impl LinearModel {
    #[inline]
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept + self.coef.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }
}

/// Relative pivot size under which the normal equations count as singular.
const RANK_TOL: f64 = 1e-12;

/// Least squares through the normal equations. With `ridge_fallback`, a
/// singular system is regularized by `1e-8 · trace(XᵀX) / p`.
pub fn fit_ols(data: &Dataset, fit_intercept: bool, ridge_fallback: bool) -> Result<LinearModel> {
    let d = data.dim();
    let p = d + fit_intercept as usize;
    let mut xtx = DMatrix::<f64>::zeros(p, p);
    let mut xty = DVector::<f64>::zeros(p);
    let mut row = vec![0.0; p];
    for i in 0..data.len() {
        row[..d].copy_from_slice(data.row(i));
        if fit_intercept {
            row[d] = 1.0;
        }
        let y = data.target(i);
        for a in 0..p {
            let ra = row[a];
            xty[a] += ra * y;
            for b in a..p {
                xtx[(a, b)] += ra * row[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            xtx[(a, b)] = xtx[(b, a)];
        }
    }

    let solve = |m: DMatrix<f64>| -> Option<DVector<f64>> {
        let lu = m.full_piv_lu();
        let u = lu.u();
        let diag: Vec<f64> = (0..p).map(|i| u[(i, i)].abs()).collect();
        let max = diag.iter().cloned().fold(0.0, f64::max);
        if max == 0.0 || diag.iter().any(|&v| v <= RANK_TOL * max) {
            return None;
        }
        lu.solve(&xty)
    };

    let (beta, ridge_used) = match solve(xtx.clone()) {
        Some(b) if data.len() >= p => (b, false),
        _ if ridge_fallback => {
            let lambda = (1e-8 * xtx.trace() / p as f64).max(f64::MIN_POSITIVE);
            let mut reg = xtx;
            for a in 0..p {
                reg[(a, a)] += lambda;
            }
            let b = reg.cholesky().ok_or_else(|| Error::Singular("ridge-regularized normal equations".into()))?;
            (b.solve(&xty), true)
        }
        _ => {
            return Err(Error::Singular(format!("normal equations with {} rows and {p} parameters", data.len())));
        }
    };
    if beta.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("least-squares coefficients".into()));
    }
    let coef = beta.rows(0, d).iter().copied().collect();
    let intercept = if fit_intercept { beta[d] } else { 0.0 };
    Ok(LinearModel { coef, intercept, ridge_used })
}

use crate::error::{Error, Result};
use crate::stats::fit_line;

/// Least-squares fit of `log |ψ̂_k| = log |c| − α log k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLinearFit {
    pub alpha: f64,
    pub log_abs_c: f64,
    /// Majority sign of the inputs (ties count as positive).
    pub sign_c: f64,
    /// Coefficient of determination of the log-space regression.
    pub r2: f64,
    /// Inputs with `ψ̂ = 0`, which have no logarithm.
    pub dropped: usize,
    /// Inputs disagree in sign.
    pub sign_unstable: bool,
}

pub fn fit_loglinear(pairs: &[(f64, f64)]) -> Result<LogLinearFit> {
    let usable: Vec<(f64, f64)> = pairs.iter().copied().filter(|&(_, psi)| psi != 0.0).collect();
    let dropped = pairs.len() - usable.len();
    if usable.len() < 2 {
        return Err(Error::Insufficient(format!("log-linear fit needs 2 non-zero means, have {}", usable.len())));
    }
    if let Some(&(k, psi)) = usable.iter().find(|(k, psi)| !(*k > 0.0) || !psi.is_finite()) {
        return Err(Error::InvalidArgument(format!("log-linear fit: invalid pair (k={k}, psi={psi})")));
    }
    let x: Vec<f64> = usable.iter().map(|(k, _)| k.ln()).collect();
    let y: Vec<f64> = usable.iter().map(|(_, psi)| psi.abs().ln()).collect();
    let line = fit_line(&x, &y).ok_or_else(|| Error::Insufficient("log-linear fit needs two distinct k".into()))?;
    let positive = usable.iter().filter(|(_, p)| *p > 0.0).count();
    let negative = usable.len() - positive;
    Ok(LogLinearFit {
        alpha: -line.slope,
        log_abs_c: line.intercept,
        sign_c: if negative > positive { -1.0 } else { 1.0 },
        r2: line.r2,
        dropped,
        sign_unstable: positive > 0 && negative > 0,
    })
}

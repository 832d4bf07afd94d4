use crate::error::{Error, Result};
use crate::stats::fit_line;

/// `var(Δ | k) ≈ σ² / k^β` fitted in log-log space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceLaw {
    pub sigma2: f64,
    pub beta: f64,
    pub r2: f64,
}

pub fn fit_variance_law(per_k_variances: &[(f64, f64)]) -> Result<VarianceLaw> {
    let usable: Vec<(f64, f64)> =
        per_k_variances.iter().copied().filter(|&(k, v)| v > 0.0 && v.is_finite() && k > 0.0).collect();
    if usable.len() < 2 {
        return Err(Error::Insufficient(format!("variance law needs 2 positive variances, have {}", usable.len())));
    }
    let x: Vec<f64> = usable.iter().map(|(k, _)| k.ln()).collect();
    let y: Vec<f64> = usable.iter().map(|(_, v)| v.ln()).collect();
    let line = fit_line(&x, &y).ok_or_else(|| Error::Insufficient("variance law needs two distinct k".into()))?;
    Ok(VarianceLaw { sigma2: line.intercept.exp(), beta: -line.slope, r2: line.r2 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_inverse_square() {
        let v = fit_variance_law(&[(10.0, 0.04), (100.0, 0.0004)]).unwrap();
        assert!((v.sigma2 - 4.0).abs() < 1e-10);
        assert!((v.beta - 2.0).abs() < 1e-12);
        assert!((v.r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_variance_has_zero_exponent() {
        let v = fit_variance_law(&[(10.0, 3.0), (50.0, 3.0), (100.0, 3.0)]).unwrap();
        assert!(v.beta.abs() < 1e-12);
    }

    #[test]
    fn needs_two_positive() {
        assert!(fit_variance_law(&[(10.0, 0.0), (100.0, 1.0)]).is_err());
    }
}

use nalgebra::{DMatrix, DVector};

use crate::linalg;
use crate::{Error, Result};

/// Time after which the continuous model stays within `eps` of consensus:
/// `ln((n - 1) dist0_sq / eps) / (2 Re lambda_2)`, or 0 when already there.
pub fn time_to_eps_consensus(lambda2_re: f64, n: usize, dist0_sq: f64, eps: f64) -> Result<f64> {
    if !(lambda2_re > 0.0 && lambda2_re.is_finite()) {
        return Err(Error::InvalidArgument(format!("Re lambda_2 = {lambda2_re} must be positive")));
    }
    if n < 2 {
        return Err(Error::InvalidArgument("need at least two agents".into()));
    }
    if !(eps > 0.0) || !(dist0_sq >= 0.0) {
        return Err(Error::InvalidArgument(format!("eps = {eps} and dist0_sq = {dist0_sq} must be positive")));
    }
    let spread = (n - 1) as f64 * dist0_sq;
    if eps >= spread {
        return Ok(0.0);
    }
    Ok((spread / eps).ln() / (2.0 * lambda2_re))
}

/// Inverts [`time_to_eps_consensus`]: the `dist0_sq` for which `T(eps) = time`.
pub fn dist0_sq_from_anchor(lambda2_re: f64, n: usize, time: f64, eps: f64) -> f64 {
    eps * (2.0 * lambda2_re * time).exp() / (n - 1) as f64
}

/// Consensus value `w^T x0 / w^T 1` of `dx/dtau = -L x`, with `w` the left null vector of `L`.
pub fn consensus_value(laplacian: &DMatrix<f64>, x0: &[f64]) -> Result<f64> {
    let w = linalg::left_null_vector(laplacian)?;
    Ok(w.dot(&DVector::from_column_slice(x0)) / w.sum())
}

/// `||x0 - x* 1||^2`.
pub fn dist0_sq(x0: &[f64], x_star: f64) -> f64 {
    x0.iter().map(|v| (v - x_star).powi(2)).sum()
}

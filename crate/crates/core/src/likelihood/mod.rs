//! Gaussian conditional log-likelihood, the residual score `e(z)` and the
//! likelihood-ratio statistic.
//!
//! The `Σ log q(x_i)` term of the full log-likelihood does not depend on the
//! parameters and is dropped everywhere; it cancels in every difference the
//! crate computes.

mod expansion;

pub use expansion::{
    analytic_ratio_derivatives, density_ratio_minus_one, fd_check_derivatives, ratio_distance,
    taylor_terms, FdReport, FdSteps, RatioDerivatives, Reparameterization, TaylorTerms,
};

use crate::error::{Error, Result};
use crate::model::{Dataset, MlpParams, RegressionSpec};

/// Absolute slack tolerated when the fitted supremum falls below the
/// log-likelihood at the true parameter.
pub const LR_SLACK: f64 = 1e-6;

/// Residual sum of squares `Σ (y_i − F_θ(x_i))²`, accumulated in row order.
pub fn residual_sum_of_squares(theta: &MlpParams, data: &Dataset) -> Result<f64> {
    if theta.input_dim() != data.input_dim {
        return Err(Error::Dimension { expected: data.input_dim, got: theta.input_dim() });
    }
    Ok(data
        .rows()
        .map(|(x, y)| {
            let r = y - theta.forward_unchecked(x);
            r * r
        })
        .sum())
}

/// `−(n/2)·log(2πσ²) − Σ (y_i − F_θ(x_i))² / (2σ²)`.
pub fn conditional_loglik(theta: &MlpParams, data: &Dataset) -> Result<f64> {
    if !(data.sigma2 > 0.0) {
        return Err(Error::Config(format!("likelihood needs sigma2 > 0, got {}", data.sigma2)));
    }
    let rss = residual_sum_of_squares(theta, data)?;
    Ok(loglik_from_rss(rss, data.len(), data.sigma2))
}

pub(crate) fn loglik_from_rss(rss: f64, n: usize, sigma2: f64) -> f64 {
    -0.5 * n as f64 * (2.0 * std::f64::consts::PI * sigma2).ln() - rss / (2.0 * sigma2)
}

/// `e(z) = (y − F_{θ⁰}(x)) / σ²`.
pub fn residual_score(spec: &RegressionSpec, x: &[f64], y: f64) -> f64 {
    (y - spec.regression(x)) / spec.sigma2
}

/// `2λ` from a fitted supremum and the log-likelihood at the truth.
pub fn lr_from_logliks(sup_loglik: f64, true_loglik: f64) -> Result<f64> {
    let two_lambda = 2.0 * (sup_loglik - true_loglik);
    if two_lambda < -2.0 * LR_SLACK {
        return Err(Error::Optimizer(format!(
            "supremum {sup_loglik} is below the true-parameter log-likelihood {true_loglik}"
        )));
    }
    Ok(two_lambda)
}

/// `2λ_n^k = 2·(sup_loglik − l_n(θ⁰))`.
pub fn lr_statistic(sup_loglik: f64, spec: &RegressionSpec, data: &Dataset) -> Result<f64> {
    let truth = conditional_loglik(&spec.theta0, data)?;
    lr_from_logliks(sup_loglik, truth)
}

//! Information density `iota(x; y) = log f_{Y|X}(y|x) / f_Y(y)` and its
//! `y`-derivatives, plus derivatives of log posterior set probabilities.

use crate::channel::{EventSet, PosteriorOracle, ScalarChannel};
use crate::error::{CmeError, Result};
use crate::identities::{conditional_cumulant, tre_mean};
use crate::polybasis::{normal_log_pdf, std_normal_cdf, std_normal_pdf};

/// `iota(x; y) = log phi_{sigma^2}(y - x) - log f_Y(y)`.
pub fn info_density(ch: &ScalarChannel, x: f64, y: f64) -> Result<f64> {
    let v = normal_log_pdf(y - x, ch.sigma2()) - ch.log_density(y);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(CmeError::numeric("information density is not finite", v))
    }
}

/// `d^k/dy^k iota(x; y)`: `(x - E[X|Y=y]) / sigma^2` for `k = 1` and
/// `-kappa_{X|Y=y}(k) / sigma^{2k}` for `k >= 2`.
pub fn info_density_dy(ch: &ScalarChannel, x: f64, y: f64, k: usize) -> Result<f64> {
    let s2 = ch.sigma2();
    match k {
        0 => info_density(ch, x, y),
        1 => Ok((x - tre_mean(ch, y)?) / s2),
        _ => Ok(-conditional_cumulant(ch, k, y)? / s2.powi(k as i32)),
    }
}

/// `d/dy log P(X in A | Y = y) = (E[X | Y, X in A] - E[X | Y]) / sigma^2`.
pub fn log_set_prob_grad(oracle: &PosteriorOracle, set: &EventSet, y: f64) -> Result<f64> {
    let s2 = oracle.channel().sigma2();
    let on_set = oracle.posterior_moment_on_set(set, 1, y)?;
    let all = oracle.posterior_moment_on_set(&EventSet::full(), 1, y)?;
    Ok((on_set - all) / s2)
}

/// `d^2/dy^2 log P(X in A | Y = y) = (Var(X | Y, X in A) - Var(X | Y)) / sigma^4`.
pub fn log_set_prob_hess(oracle: &PosteriorOracle, set: &EventSet, y: f64) -> Result<f64> {
    let s2 = oracle.channel().sigma2();
    let on_set = oracle.posterior_variance_on_set(set, y)?;
    let all = oracle.posterior_variance_on_set(&EventSet::full(), y)?;
    Ok((on_set - all) / (s2 * s2))
}

/// Closed form of [`log_set_prob_hess`] for `X ~ N(0, 1)` and `A = (-inf, t]`:
/// `-(beta phi(beta)/Phi(beta) + (phi(beta)/Phi(beta))^2) / (sigma^2 (1 + sigma^2))`
/// with `beta = (t - y/(1+sigma^2)) / sqrt(sigma^2/(1+sigma^2))`.
pub fn truncated_gaussian_hess(sigma2: f64, t: f64, y: f64) -> f64 {
    let beta = (t - y / (1.0 + sigma2)) / (sigma2 / (1.0 + sigma2)).sqrt();
    let lam = std_normal_pdf(beta) / std_normal_cdf(beta);
    -(beta * lam + lam * lam) / (sigma2 * (1.0 + sigma2))
}

//! Lanczos generalised derivatives
//! `D_h^{(n)} f(x) = (c_n / h^n) int_{-1}^{1} f(x + h t) P_n(t) dt`
//! and their error budget.

use std::f64::consts::PI;

use crate::channel::ScalarChannel;
use crate::error::{CmeError, Result};
use crate::polybasis::{factorial, gamma_n_plus_three_halves, legendre};
use crate::quadrature::GaussLegendre;

/// `c_n = (1/2) sqrt(2^{2n+2} / pi) Gamma(n + 3/2)`.
pub fn lanczos_constant(n: usize) -> f64 {
    0.5 * (2f64.powi(2 * n as i32 + 2) / PI).sqrt() * gamma_n_plus_three_halves(n)
}

/// Order-`n` operator with step `h`, integrated by 64-node Gauss–Legendre.
#[derive(Debug, Clone)]
pub struct LanczosOperator {
    order: usize,
    h: f64,
    offsets: Vec<f64>,
    weights: Vec<f64>,
}

impl LanczosOperator {
    pub fn new(order: usize, h: f64) -> Result<Self> {
        if order == 0 {
            return Err(CmeError::Argument("Lanczos order must be >= 1".into()));
        }
        if !(h > 0.0) || !h.is_finite() {
            return Err(CmeError::Argument(format!(
                "Lanczos step must be > 0, got {h}"
            )));
        }
        let rule = GaussLegendre::n64();
        let scale = lanczos_constant(order) / h.powi(order as i32);
        let offsets = rule.nodes.iter().map(|t| h * t).collect();
        let weights = rule
            .nodes
            .iter()
            .zip(&rule.weights)
            .map(|(&t, &w)| scale * w * legendre(order, t))
            .collect();
        Ok(LanczosOperator {
            order,
            h,
            offsets,
            weights,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn step(&self) -> f64 {
        self.h
    }

    /// `D_h^{(n)} f(x)`. The integrand is taken relative to `f(x)`, which the
    /// Legendre weight annihilates, to limit cancellation for small `h`.
    pub fn apply<F: FnMut(f64) -> f64>(&self, mut f: F, x: f64) -> f64 {
        let f0 = f(x);
        self.offsets
            .iter()
            .zip(&self.weights)
            .map(|(&d, &w)| w * (f(x + d) - f0))
            .sum()
    }

    /// Fallible variant for integrands that can fail.
    pub fn try_apply<F: FnMut(f64) -> Result<f64>>(&self, mut f: F, x: f64) -> Result<f64> {
        let f0 = f(x)?;
        let mut acc = 0.0;
        for (&d, &w) in self.offsets.iter().zip(&self.weights) {
            acc += w * (f(x + d)? - f0);
        }
        Ok(acc)
    }
}

/// `D_h^{(n)} f(x)` for the given operator.
pub fn lanczos_derivative<F: FnMut(f64) -> f64>(f: F, op: &LanczosOperator, x: f64) -> f64 {
    op.apply(f, x)
}

/// Error constants of `D_h^{(k)}`: the approximation error is at most
/// `alpha_k M_{k+2} h^2` and a perturbation of sup-size `eps` adds at most
/// `beta_k eps / h^k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LanczosErrorBudget {
    pub k: usize,
    pub alpha: f64,
    pub beta: f64,
}

impl LanczosErrorBudget {
    pub fn new(k: usize) -> Self {
        let c = lanczos_constant(k);
        let alpha = c / factorial(k + 2) * 2.0 / ((2 * k + 1) as f64).sqrt();
        LanczosErrorBudget {
            k,
            alpha,
            beta: factorial(k + 2) * alpha,
        }
    }

    /// `alpha_k M h^2 + beta_k eps / h^k`, where `M` bounds `|f^{(k+2)}|` near `x`.
    pub fn bound(&self, m_bound: f64, h: f64, eps: f64) -> f64 {
        self.alpha * m_bound * h * h + self.beta * eps / h.powi(self.k as i32)
    }
}

/// `h = eps^{1/(k+2)}` for `eps > 0`, else `default_h`.
pub fn choose_step(k: usize, eps: f64, default_h: f64) -> f64 {
    if eps > 0.0 {
        eps.powf(1.0 / (k as f64 + 2.0))
    } else {
        default_h
    }
}

/// Conditional mean from the Lanczos first derivative of `log f_Y`:
/// `y + sigma^2 D_h^{(1)} log f_Y(y)`.
pub fn lanczos_conditional_mean(ch: &ScalarChannel, op: &LanczosOperator, y: f64) -> f64 {
    y + ch.sigma2() * op.apply(|t| ch.log_density(t), y)
}

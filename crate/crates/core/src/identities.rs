//! Identities linking the conditional mean, conditional moments and
//! conditional cumulants to derivatives of the output density `f_Y`.
//!
//! Every derivative in `y` is taken analytically through the channel's
//! density derivatives; nothing here differentiates numerically.

use crate::channel::{Prior, ScalarChannel, MAX_DERIVATIVE_ORDER};
use crate::error::{CmeError, Result};
use crate::polybasis::{
    bell_complete, bell_partial, binomial, factorial, hermite_g_all, PartialBellTable,
};
use crate::quadrature::{cumulative_simpson, trapezoid};

/// `E[X | Y = y] = y + sigma^2 f_Y'(y) / f_Y(y)`.
pub fn tre_mean(ch: &ScalarChannel, y: f64) -> Result<f64> {
    let r = ch.density_ratios(y, 1)?;
    let v = y + ch.sigma2() * r[1];
    finite(v, "conditional mean")
}

/// `d^j/dy^j E[X | Y = y]` for `j = 0..=kmax`, from derivatives of `log f_Y`.
pub fn ce_derivatives(ch: &ScalarChannel, y: f64, kmax: usize) -> Result<Vec<f64>> {
    check_order(kmax + 1)?;
    let l = ch.log_density_derivatives(y, kmax + 1)?;
    let s2 = ch.sigma2();
    let mut out: Vec<f64> = (0..=kmax).map(|j| s2 * l[j + 1]).collect();
    out[0] += y;
    if kmax >= 1 {
        out[1] += 1.0;
    }
    Ok(out)
}

/// `Var(X | Y = y) = sigma^2 d/dy E[X | Y = y]`.
pub fn hatsell_nolte_variance(ch: &ScalarChannel, y: f64) -> Result<f64> {
    let d = ce_derivatives(ch, y, 1)?;
    finite(ch.sigma2() * d[1], "conditional variance")
}

/// `sigma^{2k} [sum_m C(k,m) r_{k-m} G_m(y/sigma) / sigma^m]` where
/// `r_j = f^{(j)}(y) / f(y)`. Shared by the exact identity and the
/// empirical-Bayes estimator.
pub fn generalized_tre_from_ratios(ratios: &[f64], sigma2: f64, k: usize, y: f64) -> f64 {
    let s = sigma2.sqrt();
    let g = hermite_g_all(k, y / s);
    let mut acc = 0.0;
    let mut sm = 1.0;
    for m in 0..=k {
        acc += binomial(k, m) * ratios[k - m] * g[m] / sm;
        sm *= s;
    }
    sigma2.powi(k as i32) * acc
}

/// `E[X^k | Y = y]` from derivatives of `f_Y` up to order `k`.
pub fn moment_via_generalized_tre(ch: &ScalarChannel, k: usize, y: f64) -> Result<f64> {
    if k == 0 {
        return Ok(1.0);
    }
    let r = ch.density_ratios(y, k)?;
    finite(
        generalized_tre_from_ratios(&r, ch.sigma2(), k, y),
        "conditional moment",
    )
}

/// `E[X^k | Y = y]` and its `y`-derivative, both analytic.
pub fn moment_and_slope(ch: &ScalarChannel, k: usize, y: f64) -> Result<(f64, f64)> {
    if k == 0 {
        return Ok((1.0, 0.0));
    }
    let r = ch.density_ratios(y, k + 1)?;
    let s2 = ch.sigma2();
    let s = s2.sqrt();
    let g = hermite_g_all(k, y / s);
    let mut n = 0.0;
    let mut dn = 0.0;
    let mut sm = 1.0;
    for m in 0..=k {
        let c = binomial(k, m);
        n += c * r[k - m] * g[m] / sm;
        dn += c * r[k - m + 1] * g[m] / sm;
        if m >= 1 {
            dn += c * r[k - m] * m as f64 * g[m - 1] / (sm * s);
        }
        sm *= s;
    }
    let scale = s2.powi(k as i32);
    Ok((scale * n, scale * (dn - r[1] * n)))
}

/// `E[X^{k+1} | Y] = sigma^2 d/dy E[X^k | Y] + E[X^k | Y] E[X | Y]`.
pub fn jaffer_step(ch: &ScalarChannel, k: usize, y: f64) -> Result<f64> {
    let (mk, dmk) = moment_and_slope(ch, k, y)?;
    let m1 = tre_mean(ch, y)?;
    finite(ch.sigma2() * dmk + mk * m1, "conditional moment")
}

/// `E[X^k | Y = y] = sigma^{2k} B_k(E^{(0)}[X/sigma^2|Y], ..., E^{(k-1)}[X/sigma^2|Y])`.
pub fn moment_via_bell(ch: &ScalarChannel, k: usize, y: f64) -> Result<f64> {
    if k == 0 {
        return Ok(1.0);
    }
    let s2 = ch.sigma2();
    let d: Vec<f64> = ce_derivatives(ch, y, k - 1)?
        .into_iter()
        .map(|v| v / s2)
        .collect();
    finite(
        s2.powi(k as i32) * bell_complete(k, &d)?,
        "conditional moment",
    )
}

/// `d^k/dy^k E[X | Y]` from conditional moments `E[X^j | Y]`, `j = 1..=k+1`:
/// `sigma^2 sum_m c_m B_{k+1,m}(E[X/sigma^2|Y], E[(X/sigma^2)^2|Y], ...)`.
pub fn ce_derivative_from_moments(moments: &[f64], sigma2: f64, k: usize) -> Result<f64> {
    if moments.len() < k + 1 {
        return Err(CmeError::Argument(format!(
            "order {k} needs {} conditional moments, got {}",
            k + 1,
            moments.len()
        )));
    }
    let scaled: Vec<f64> = moments
        .iter()
        .take(k + 1)
        .enumerate()
        .map(|(j, m)| m / sigma2.powi(j as i32 + 1))
        .collect();
    let mut acc = 0.0;
    for m in 1..=k + 1 {
        let c = if m % 2 == 1 { 1.0 } else { -1.0 } * factorial(m - 1);
        acc += c * bell_partial(k + 1, m, &scaled)?;
    }
    Ok(sigma2 * acc)
}

/// `d^k/dy^k E[X | Y = y]` through the Bell form over conditional moments
/// (moments from the generalized-TRE identity).
pub fn ce_derivative(ch: &ScalarChannel, k: usize, y: f64) -> Result<f64> {
    check_order(k + 1)?;
    let moments = (1..=k + 1)
        .map(|j| moment_via_generalized_tre(ch, j, y))
        .collect::<Result<Vec<f64>>>()?;
    ce_derivative_from_moments(&moments, ch.sigma2(), k)
}

/// Conditional cumulants `kappa_{X|Y=y}(1..=K)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CumulantVector {
    pub y: f64,
    pub sigma2: f64,
    /// `values[j]` is `kappa(j + 1)`.
    pub values: Vec<f64>,
}

/// `kappa_{X|Y=y}(k)` for `1 <= k <= 13` through derivatives of `log f_Y`:
/// `kappa(1) = y + sigma^2 (log f)'`, `kappa(2) = sigma^2 + sigma^4 (log f)''`,
/// `kappa(k) = sigma^{2k} (log f)^{(k)}` for `k >= 3`.
pub fn conditional_cumulant(ch: &ScalarChannel, k: usize, y: f64) -> Result<f64> {
    Ok(conditional_cumulants(ch, y, k)?.values[k - 1])
}

pub fn conditional_cumulants(ch: &ScalarChannel, y: f64, kmax: usize) -> Result<CumulantVector> {
    if kmax == 0 {
        return Err(CmeError::Argument("cumulant order starts at 1".into()));
    }
    check_order(kmax)?;
    let l = ch.log_density_derivatives(y, kmax)?;
    let s2 = ch.sigma2();
    let mut values: Vec<f64> = (1..=kmax).map(|k| s2.powi(k as i32) * l[k]).collect();
    values[0] += y;
    if kmax >= 2 {
        values[1] += s2;
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(CmeError::numeric("non-finite conditional cumulant", *v));
    }
    Ok(CumulantVector {
        y,
        sigma2: s2,
        values,
    })
}

/// Second path: `kappa(k) = sigma^{2(k-1)} d^{k-1}/dy^{k-1} E[X | Y]` with the
/// derivative from the Bell form over conditional moments.
pub fn conditional_cumulant_via_moments(ch: &ScalarChannel, k: usize, y: f64) -> Result<f64> {
    if k == 0 {
        return Err(CmeError::Argument("cumulant order starts at 1".into()));
    }
    let d = ce_derivative(ch, k - 1, y)?;
    Ok(ch.sigma2().powi(k as i32 - 1) * d)
}

/// Growth bound `|kappa(k)| <= a_k |y|^k + b_k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CumulantBound {
    pub k: usize,
    pub a: f64,
    pub b: f64,
}

impl CumulantBound {
    pub fn at(&self, y: f64) -> f64 {
        self.a * y.abs().powi(self.k as i32) + self.b
    }

    pub fn holds(&self, kappa: f64, y: f64) -> bool {
        kappa.abs() <= self.at(y)
    }
}

pub fn cumulant_bound(prior: &Prior, k: usize) -> Result<CumulantBound> {
    if k == 0 {
        return Err(CmeError::Argument("cumulant order starts at 1".into()));
    }
    let kf = k as f64;
    let e = (kf / 2.0 - 1.0).max(1.0);
    let kk = kf.powf(kf);
    let a = kk * 2f64.powf(kf - 1.0) * (2f64.powf(e) + 2.0);
    let m2 = prior.raw_moment(2)?;
    let mk = prior.abs_moment(k as u32)?;
    let b = kk * (2f64.powf(e + kf) * m2.powf(kf / 2.0) + mk);
    Ok(CumulantBound { k, a, b })
}

/// Posterior form of the bound: `|kappa(k)| <= 2^{k-1} k^k E[|X|^k | Y = y]`.
pub fn cumulant_posterior_bound(abs_moment: f64, k: usize) -> f64 {
    let kf = k as f64;
    2f64.powf(kf - 1.0) * kf.powf(kf) * abs_moment
}

/// Reconstructs `f_Y` on `grid` from the conditional mean alone:
/// `f_Y(y) = c exp(int_0^y (m(t) - t) / sigma^2 dt)`, with the integral by
/// composite Simpson and `c` fixed by trapezoid normalisation over the grid.
pub fn inverse_tre_density<M: FnMut(f64) -> f64>(
    mut m: M,
    sigma2: f64,
    grid: &[f64],
) -> Result<Vec<f64>> {
    if grid.len() < 3 || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(CmeError::Argument(
            "grid must be increasing with at least three points".into(),
        ));
    }
    if !(sigma2 > 0.0) {
        return Err(CmeError::Argument(format!(
            "sigma2 must be > 0, got {sigma2}"
        )));
    }
    let cum = cumulative_simpson(grid, |t| (m(t) - t) / sigma2);
    // the lower limit of the exponent only changes c, so the running
    // integral starts at the first grid point and is shifted by its maximum
    let top = cum.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = cum.iter().map(|c| (c - top).exp()).collect();
    let edge = raw[0].max(raw[raw.len() - 1]);
    if !(edge < 1e-8) {
        return Err(CmeError::numeric(
            "reconstructed density does not decay at the grid ends; the mean function is inconsistent with the noise level or the grid is too short",
            edge,
        ));
    }
    let mass = trapezoid(grid, &raw);
    if !(mass > 0.0) || !mass.is_finite() {
        return Err(CmeError::numeric("reconstructed density has no mass", mass));
    }
    Ok(raw.into_iter().map(|v| v / mass).collect())
}

/// Pointwise check of `0 <= d/dy E[X | Y = y] <= R^2 / sigma^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeCheck {
    pub lower: f64,
    pub value: f64,
    pub upper: f64,
}

impl SlopeCheck {
    pub fn holds(&self, tol: f64) -> bool {
        self.value >= self.lower - tol && self.value <= self.upper + tol
    }
}

pub fn slope_trace_bounds(ch: &ScalarChannel, y: f64, radius: f64) -> Result<SlopeCheck> {
    let support = ch.prior().support_radius().ok_or_else(|| {
        CmeError::Contract("slope bounds need a prior with bounded support".into())
    })?;
    if radius < support {
        return Err(CmeError::Contract(format!(
            "radius {radius} is smaller than the support radius {support}"
        )));
    }
    let d = ce_derivatives(ch, y, 1)?;
    Ok(SlopeCheck {
        lower: 0.0,
        value: d[1],
        upper: radius * radius / ch.sigma2(),
    })
}

fn check_order(k: usize) -> Result<()> {
    if k > MAX_DERIVATIVE_ORDER || k >= PartialBellTable::shared().max_n() {
        return Err(CmeError::Capability(format!(
            "order {k} exceeds the supported maximum {MAX_DERIVATIVE_ORDER}"
        )));
    }
    Ok(())
}

fn finite(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(CmeError::numeric(format!("non-finite {what}"), v))
    }
}

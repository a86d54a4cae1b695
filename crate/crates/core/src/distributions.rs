//! Exact laws of the estimator `X^ = E[X|Y]` and of the error `X - g(Y)`
//! for matched, mismatched and linear estimators `g`.

use crate::analytic::CeInverter;
use crate::channel::ScalarChannel;
use crate::error::{CmeError, Result};
use crate::identities::{ce_derivatives, hatsell_nolte_variance, tre_mean};
use crate::polybasis::normal_pdf;
use crate::quadrature::{breakpoints, integrate_adaptive, AdaptiveSpec};

/// Number of `Y` standard deviations used to model the estimator range.
pub const RANGE_SDS: f64 = 10.0;
const SOLVE_TOL: f64 = 1e-14;

fn spec() -> AdaptiveSpec {
    AdaptiveSpec {
        abs_tol: 1e-12,
        rel_tol: 1e-12,
        max_intervals: 20_000,
    }
}

/// `(E[X|Y=E[Y]-10 sd_Y], E[X|Y=E[Y]+10 sd_Y])`.
pub fn estimator_range(ch: &ScalarChannel) -> Result<(f64, f64)> {
    let (m, s) = (ch.y_mean(), ch.y_sd());
    Ok((
        tre_mean(ch, m - RANGE_SDS * s)?,
        tre_mean(ch, m + RANGE_SDS * s)?,
    ))
}

/// Distribution of `X^ = E[X | Y]` through `X^{-1}`.
#[derive(Debug, Clone)]
pub struct EstimatorDistribution {
    inverter: CeInverter,
    range: (f64, f64),
}

impl EstimatorDistribution {
    pub fn new(ch: &ScalarChannel) -> Result<Self> {
        Ok(EstimatorDistribution {
            inverter: CeInverter::new(ch),
            range: estimator_range(ch)?,
        })
    }

    pub fn range(&self) -> (f64, f64) {
        self.range
    }

    fn preimage(&self, x: f64) -> Result<f64> {
        let (lo, hi) = self.range;
        if !(x > lo && x < hi) {
            return Err(CmeError::Range(format!(
                "{x} is outside the estimator range ({lo}, {hi})"
            )));
        }
        self.inverter.solve(x, SOLVE_TOL)
    }

    /// `F_Y(X^{-1}(x))`.
    pub fn cdf(&self, x: f64) -> Result<f64> {
        Ok(self.inverter.channel().cdf(self.preimage(x)?))
    }

    /// `sigma^2 f_Y(X^{-1}(x)) / Var(X | Y = X^{-1}(x))`.
    pub fn pdf(&self, x: f64) -> Result<f64> {
        let ch = self.inverter.channel();
        let y = self.preimage(x)?;
        let var = hatsell_nolte_variance(ch, y)?;
        let v = ch.sigma2() * ch.log_density(y).exp() / var;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(CmeError::numeric("estimator density is not finite", v))
        }
    }

    /// `int pdf` over the modelled range.
    pub fn total_mass(&self) -> Result<f64> {
        let (lo, hi) = self.range;
        let pts = breakpoints(lo, hi, (hi - lo) / 64.0, &[]);
        integrate_adaptive(
            |x| {
                if x > lo && x < hi {
                    self.pdf(x).unwrap_or(0.0)
                } else {
                    0.0
                }
            },
            &pts,
            spec(),
        )
    }
}

pub fn estimator_pdf(ch: &ScalarChannel, x: f64) -> Result<f64> {
    EstimatorDistribution::new(ch)?.pdf(x)
}

pub fn estimator_cdf(ch: &ScalarChannel, x: f64) -> Result<f64> {
    EstimatorDistribution::new(ch)?.cdf(x)
}

/// Estimator law tabulated on a uniform grid strictly inside the range.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorLaw {
    pub x: Vec<f64>,
    pub pdf: Vec<f64>,
    pub cdf: Vec<f64>,
}

impl EstimatorLaw {
    pub fn on_grid(ch: &ScalarChannel, points: usize) -> Result<Self> {
        if points < 2 {
            return Err(CmeError::Argument("need at least two grid points".into()));
        }
        let d = EstimatorDistribution::new(ch)?;
        let (lo, hi) = d.range();
        let x: Vec<f64> = (1..=points)
            .map(|i| lo + (hi - lo) * i as f64 / (points + 1) as f64)
            .collect();
        let pdf = x.iter().map(|&v| d.pdf(v)).collect::<Result<Vec<_>>>()?;
        let cdf = x.iter().map(|&v| d.cdf(v)).collect::<Result<Vec<_>>>()?;
        Ok(EstimatorLaw { x, pdf, cdf })
    }
}

/// Estimator `g` whose error law is computed.
#[derive(Debug, Clone)]
pub enum Estimator {
    /// Conditional mean under the true prior.
    Matched,
    /// Conditional mean under another prior at the same noise level.
    Mismatched(ScalarChannel),
    /// `g(y) = slope * y + intercept`.
    Linear { slope: f64, intercept: f64 },
}

#[derive(Debug, Clone)]
enum InvertibleMap {
    Mean(CeInverter),
    Linear { slope: f64, intercept: f64 },
}

impl InvertibleMap {
    fn range(&self) -> (f64, f64) {
        match self {
            InvertibleMap::Mean(inv) => inv.range(),
            InvertibleMap::Linear { .. } => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    /// `(g^{-1}(v), 1 / g'(g^{-1}(v)))`, or `None` when `v` is outside the range.
    fn inverse(&self, v: f64) -> Result<Option<(f64, f64)>> {
        let (lo, hi) = self.range();
        if !(v > lo && v < hi) {
            return Ok(None);
        }
        match self {
            InvertibleMap::Linear { slope, intercept } => {
                Ok(Some(((v - intercept) / slope, 1.0 / slope.abs())))
            }
            InvertibleMap::Mean(inv) => match inv.solve(v, SOLVE_TOL) {
                Ok(y) => {
                    let slope = ce_derivatives(inv.channel(), y, 1)?[1];
                    if slope > 0.0 {
                        Ok(Some((y, 1.0 / slope)))
                    } else {
                        Ok(None)
                    }
                }
                // v inside the exact range but beyond what the floating-point
                // mean resolves: the preimage is so far out that the noise
                // density there is zero
                Err(CmeError::Range(_)) => Ok(None),
                Err(e) => Err(e),
            },
        }
    }
}

/// Law of `W = X - g(Y)`.
#[derive(Debug, Clone)]
pub struct ErrorLaw {
    ch: ScalarChannel,
    g: InvertibleMap,
}

impl ErrorLaw {
    pub fn new(ch: &ScalarChannel, g: &Estimator) -> Result<Self> {
        let map = match g {
            Estimator::Matched => InvertibleMap::Mean(CeInverter::new(ch)),
            Estimator::Mismatched(q) => {
                if (q.sigma2() - ch.sigma2()).abs() > 1e-15 * ch.sigma2() {
                    return Err(CmeError::Contract(
                        "mismatched estimator must use the true noise variance".into(),
                    ));
                }
                InvertibleMap::Mean(CeInverter::new(q))
            }
            Estimator::Linear { slope, intercept } => {
                if *slope == 0.0 || !slope.is_finite() || !intercept.is_finite() {
                    return Err(CmeError::Contract(
                        "linear estimator is not invertible".into(),
                    ));
                }
                InvertibleMap::Linear {
                    slope: *slope,
                    intercept: *intercept,
                }
            }
        };
        Ok(ErrorLaw {
            ch: ch.clone(),
            g: map,
        })
    }

    fn term(&self, x: f64, w: f64) -> Result<f64> {
        Ok(match self.g.inverse(x - w)? {
            Some((y, jac)) => normal_pdf(y - x, self.ch.sigma2()) * jac,
            None => 0.0,
        })
    }

    /// `f_W(w) = E_X[phi_sigma(g^{-1}(X - w) - X) |d g^{-1}(X - w)/dw| 1{X - w in range g}]`.
    pub fn pdf(&self, w: f64) -> Result<f64> {
        match self.ch.atoms() {
            Some((x, p)) => {
                let mut acc = 0.0;
                for (xi, pi) in x.iter().zip(&p) {
                    acc += pi * self.term(*xi, w)?;
                }
                Ok(acc)
            }
            None => {
                let prior = self.ch.prior();
                let (mean, var) = (
                    prior.raw_moment(1)?,
                    prior.raw_moment(2)? - prior.raw_moment(1)?.powi(2),
                );
                let sd = var.sqrt();
                let pts = breakpoints(mean - 12.0 * sd, mean + 12.0 * sd, sd, &[]);
                let mut err = None;
                let v = integrate_adaptive(
                    |x| match self.term(x, w) {
                        Ok(t) => normal_pdf(x - mean, var) * t,
                        Err(e) => {
                            err.get_or_insert(e);
                            0.0
                        }
                    },
                    &pts,
                    spec(),
                )?;
                match err {
                    Some(e) => Err(e),
                    None => Ok(v),
                }
            }
        }
    }

    /// Interval carrying all of the error mass.
    pub fn support(&self) -> (f64, f64) {
        let (glo, ghi) = self.g.range();
        match self.ch.atoms() {
            Some((x, _)) if glo.is_finite() && ghi.is_finite() => {
                let xmin = x.iter().copied().fold(f64::INFINITY, f64::min);
                let xmax = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                (xmin - ghi, xmax - glo)
            }
            _ => {
                let prior = self.ch.prior();
                let m = prior.raw_moment(1).unwrap_or(0.0);
                let s = (prior.raw_moment(2).unwrap_or(1.0) - m * m).max(0.0).sqrt();
                let scale = match &self.g {
                    InvertibleMap::Linear { slope, intercept } => {
                        (1.0 + slope.abs()) * (s + self.ch.sigma()) + intercept.abs() + m.abs()
                    }
                    InvertibleMap::Mean(_) => 2.0 * (s + self.ch.sigma()) + m.abs(),
                };
                (-14.0 * scale, 14.0 * scale)
            }
        }
    }

    /// `(int f_W, int w f_W, int w^2 f_W)` over the support.
    pub fn moments(&self) -> Result<(f64, f64, f64)> {
        let (lo, hi) = self.support();
        let mut extra: Vec<f64> = vec![0.0];
        if let Some((x, _)) = self.ch.atoms() {
            for a in x {
                for b in x {
                    extra.push(a - b);
                }
            }
        }
        let pts = breakpoints(lo, hi, (hi - lo) / 32.0, &extra);
        let integrate = |power: i32| -> Result<f64> {
            let mut err = None;
            let v = integrate_adaptive(
                |w| match self.pdf(w) {
                    Ok(p) => p * w.powi(power),
                    Err(e) => {
                        err.get_or_insert(e);
                        0.0
                    }
                },
                &pts,
                spec(),
            )?;
            match err {
                Some(e) => Err(e),
                None => Ok(v),
            }
        };
        Ok((integrate(0)?, integrate(1)?, integrate(2)?))
    }
}

pub fn error_pdf(ch: &ScalarChannel, g: &Estimator, w: f64) -> Result<f64> {
    ErrorLaw::new(ch, g)?.pdf(w)
}

/// Closed-form error density of the matched estimator for the two-point prior.
pub fn two_point_error_pdf(p: f64, sigma2: f64, w: f64) -> f64 {
    let phi = |u: f64| normal_pdf(u, sigma2);
    let odds = (1.0 - p) / p;
    if w > 0.0 && w < 2.0 {
        let u = 0.5 * sigma2 * ((2.0 - w) / w * odds).ln();
        phi(u - 1.0) * sigma2 * p / (1.0 - (1.0 - w) * (1.0 - w))
    } else if w < 0.0 && w > -2.0 {
        let u = 0.5 * sigma2 * (-w / (2.0 + w) * odds).ln();
        phi(u + 1.0) * sigma2 * (1.0 - p) / (1.0 - (1.0 + w) * (1.0 + w))
    } else {
        0.0
    }
}

/// Closed-form error density of the linear estimator `y / (1 + sigma^2)`
/// (the conditional mean under a standard Gaussian prior) applied to the
/// two-point prior.
pub fn two_point_linear_error_pdf(p: f64, sigma2: f64, w: f64) -> f64 {
    let c = 1.0 + sigma2;
    normal_pdf(c * (1.0 - w) - 1.0, sigma2) * c * p
        + normal_pdf(c * (-1.0 - w) + 1.0, sigma2) * c * (1.0 - p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::Prior;
    use crate::mmse::mmse_exact;
    use std::f64::consts::PI;

    fn ch(prior: Prior, s2: f64) -> ScalarChannel {
        ScalarChannel::new(prior, s2).unwrap()
    }

    #[test]
    fn gaussian_estimator_is_gaussian() {
        let s2 = 1.0;
        let c = ch(Prior::gaussian(0.0, 1.0).unwrap(), s2);
        let d = EstimatorDistribution::new(&c).unwrap();
        let v = 1.0 / (1.0 + s2);
        assert!((d.pdf(0.0).unwrap() - ((1.0 + s2) / (2.0 * PI)).sqrt()).abs() < 1e-12);
        for i in -20..=20 {
            let x = 0.1 * i as f64;
            assert!((d.pdf(x).unwrap() - normal_pdf(x, v)).abs() < 1e-10);
            assert!((d.pdf(x).unwrap() - d.pdf(-x).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn two_point_estimator_pdf() {
        let c = ch(Prior::two_point(0.5).unwrap(), 1.0);
        let d = EstimatorDistribution::new(&c).unwrap();
        for i in -9..=9 {
            let x = 0.1 * i as f64;
            let y = x.atanh();
            let want = c.marginal_density(y, 0).unwrap() / (1.0 - x * x);
            assert!((d.pdf(x).unwrap() - want).abs() < 1e-10);
        }
        assert!(d.pdf(1.0).is_err());
    }

    #[test]
    fn laws_normalise_and_cdf_is_monotone() {
        for c in [
            ch(Prior::two_point(0.5).unwrap(), 1.0),
            ch(Prior::two_point(0.2).unwrap(), 0.5),
            ch(
                Prior::uniform_atoms(vec![-6.0, -3.0, 0.0, 3.0, 6.0]).unwrap(),
                1.0,
            ),
            ch(Prior::gaussian(0.0, 1.0).unwrap(), 1.0),
        ] {
            let d = EstimatorDistribution::new(&c).unwrap();
            assert!((d.total_mass().unwrap() - 1.0).abs() < 1e-6);
            let law = EstimatorLaw::on_grid(&c, 201).unwrap();
            assert!(law.pdf.iter().all(|p| *p >= 0.0));
            assert!(law.cdf.windows(2).all(|w| w[1] >= w[0]));
            // endpoint limits, approached through the output window
            let (ylo, yhi) = c.y_window(5.0);
            let lo = tre_mean(&c, ylo).unwrap();
            let hi = tre_mean(&c, yhi).unwrap();
            assert!(d.cdf(lo).unwrap() < 1e-6);
            assert!(d.cdf(hi).unwrap() > 1.0 - 1e-6);
            if !c.is_discrete() {
                let (lo, hi) = d.range();
                let eps = 1e-3 * (hi - lo);
                assert!(d.cdf(lo + eps).unwrap() < 1e-6);
                assert!(d.cdf(hi - eps).unwrap() > 1.0 - 1e-6);
            }
        }
    }

    #[test]
    fn two_point_error_matches_closed_form() {
        for &p in &[0.2, 0.4, 0.5] {
            let c = ch(Prior::two_point(p).unwrap(), 1.0);
            let law = ErrorLaw::new(&c, &Estimator::Matched).unwrap();
            for i in -199..=199 {
                let w = 0.01 * i as f64;
                let got = law.pdf(w).unwrap();
                let want = two_point_error_pdf(p, 1.0, w);
                assert!((got - want).abs() < 1e-8, "p={p} w={w}: {got} vs {want}");
            }
            if p == 0.5 {
                for i in 1..100 {
                    let w = 0.02 * i as f64;
                    assert!((law.pdf(w).unwrap() - law.pdf(-w).unwrap()).abs() < 1e-10);
                }
                assert_eq!(law.pdf(2.5).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn error_moments() {
        for &p in &[0.2, 0.5] {
            let c = ch(Prior::two_point(p).unwrap(), 1.0);
            let law = ErrorLaw::new(&c, &Estimator::Matched).unwrap();
            let (m0, m1, m2) = law.moments().unwrap();
            assert!((m0 - 1.0).abs() < 1e-5);
            assert!(m1.abs() < 1e-5);
            assert!((m2 - mmse_exact(&c).unwrap()).abs() < 1e-4);
        }
    }

    #[test]
    fn linear_mismatch_matches_closed_form() {
        let s2 = 0.8;
        for &p in &[0.3, 0.5] {
            let c = ch(Prior::two_point(p).unwrap(), s2);
            let lin = ErrorLaw::new(
                &c,
                &Estimator::Linear {
                    slope: 1.0 / (1.0 + s2),
                    intercept: 0.0,
                },
            )
            .unwrap();
            let q = ch(Prior::gaussian(0.0, 1.0).unwrap(), s2);
            let mis = ErrorLaw::new(&c, &Estimator::Mismatched(q)).unwrap();
            for i in -40..=40 {
                let w = 0.1 * i as f64;
                let want = two_point_linear_error_pdf(p, s2, w);
                assert!((lin.pdf(w).unwrap() - want).abs() < 1e-12);
                assert!((mis.pdf(w).unwrap() - want).abs() < 1e-9);
            }
            let (m0, _, _) = lin.moments().unwrap();
            assert!((m0 - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn gaussian_prior_error_law() {
        // W = X - E[X|Y] ~ N(0, s2/(1+s2)) for X ~ N(0,1)
        let s2 = 1.0;
        let c = ch(Prior::gaussian(0.0, 1.0).unwrap(), s2);
        let law = ErrorLaw::new(&c, &Estimator::Matched).unwrap();
        for &w in &[-1.0, 0.0, 0.4] {
            assert!((law.pdf(w).unwrap() - normal_pdf(w, s2 / (1.0 + s2))).abs() < 1e-8);
        }
    }

    #[test]
    fn contract_errors() {
        let c = ch(Prior::two_point(0.5).unwrap(), 1.0);
        assert!(ErrorLaw::new(
            &c,
            &Estimator::Linear {
                slope: 0.0,
                intercept: 0.0
            }
        )
        .is_err());
        let q = ch(Prior::gaussian(0.0, 1.0).unwrap(), 2.0);
        assert!(ErrorLaw::new(&c, &Estimator::Mismatched(q)).is_err());
    }
}

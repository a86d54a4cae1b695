//! Prior laws, the scalar Gaussian channel `Y = X + N` with its marginal
//! density and analytic derivatives, and the brute-force posterior oracle.

use crate::error::{CmeError, Result};
use crate::polybasis::{hermite_he_into, log_sum_exp, normal_log_pdf, std_normal_cdf};
use crate::quadrature::{breakpoints, integrate_adaptive, AdaptiveSpec};

/// Highest density derivative order supported by the channel.
pub const MAX_DERIVATIVE_ORDER: usize = 13;

const PROB_SUM_TOL: f64 = 1e-12;

/// Input law of the channel.
#[derive(Debug, Clone, PartialEq)]
pub enum Prior {
    DiscreteAtoms {
        points: Vec<f64>,
        probs: Vec<f64>,
    },
    Gaussian {
        mean: f64,
        variance: f64,
    },
    /// `P(X = +1) = p`, `P(X = -1) = 1 - p`.
    TwoPoint {
        p: f64,
    },
    /// Uniform on the sphere of the given radius in `R^dim`.
    SphereUniform {
        radius: f64,
        dim: usize,
    },
}

impl Prior {
    pub fn atoms(points: Vec<f64>, probs: Vec<f64>) -> Result<Prior> {
        let p = Prior::DiscreteAtoms { points, probs };
        p.validate()?;
        Ok(p)
    }

    pub fn uniform_atoms(points: Vec<f64>) -> Result<Prior> {
        let n = points.len();
        if n == 0 {
            return Err(CmeError::Argument("no atoms given".into()));
        }
        Prior::atoms(points, vec![1.0 / n as f64; n])
    }

    pub fn gaussian(mean: f64, variance: f64) -> Result<Prior> {
        let p = Prior::Gaussian { mean, variance };
        p.validate()?;
        Ok(p)
    }

    pub fn two_point(p: f64) -> Result<Prior> {
        let pr = Prior::TwoPoint { p };
        pr.validate()?;
        Ok(pr)
    }

    pub fn sphere(radius: f64, dim: usize) -> Result<Prior> {
        let p = Prior::SphereUniform { radius, dim };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Prior::DiscreteAtoms { points, probs } => {
                if points.is_empty() || points.len() != probs.len() {
                    return Err(CmeError::Argument(format!(
                        "atoms need matching non-empty points/probs, got {} and {}",
                        points.len(),
                        probs.len()
                    )));
                }
                if points.iter().any(|x| !x.is_finite()) {
                    return Err(CmeError::Argument("atom locations must be finite".into()));
                }
                if probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
                    return Err(CmeError::Argument("atom probabilities must be >= 0".into()));
                }
                let s: f64 = probs.iter().sum();
                if (s - 1.0).abs() > PROB_SUM_TOL {
                    return Err(CmeError::Argument(format!(
                        "atom probabilities sum to {s}, not 1"
                    )));
                }
                Ok(())
            }
            Prior::Gaussian { mean, variance } => {
                if !mean.is_finite() || !(*variance > 0.0) || !variance.is_finite() {
                    return Err(CmeError::Argument(format!(
                        "Gaussian prior needs finite mean and variance > 0, got ({mean}, {variance})"
                    )));
                }
                Ok(())
            }
            Prior::TwoPoint { p } => {
                if !(*p > 0.0 && *p < 1.0) {
                    return Err(CmeError::Argument(format!(
                        "two-point prior needs 0 < p < 1, got {p}"
                    )));
                }
                Ok(())
            }
            Prior::SphereUniform { radius, dim } => {
                if !(*radius > 0.0) || !radius.is_finite() || *dim == 0 {
                    return Err(CmeError::Argument(format!(
                        "sphere prior needs radius > 0 and dim >= 1, got ({radius}, {dim})"
                    )));
                }
                Ok(())
            }
        }
    }

    /// Scalar atoms and probabilities when the law is discrete on the line.
    pub fn scalar_atoms(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        match self {
            Prior::DiscreteAtoms { points, probs } => Some((points.clone(), probs.clone())),
            Prior::TwoPoint { p } => Some((vec![-1.0, 1.0], vec![1.0 - p, *p])),
            Prior::SphereUniform { radius, dim: 1 } => {
                Some((vec![-radius, *radius], vec![0.5, 0.5]))
            }
            _ => None,
        }
    }

    /// `E[X^k]` for scalar laws.
    pub fn raw_moment(&self, k: u32) -> Result<f64> {
        if let Some((x, p)) = self.scalar_atoms() {
            return Ok(x.iter().zip(&p).map(|(x, p)| p * x.powi(k as i32)).sum());
        }
        match self {
            Prior::Gaussian { mean, variance } => Ok(gaussian_raw_moment(*mean, *variance, k)),
            _ => Err(CmeError::Capability("raw_moment of a vector prior".into())),
        }
    }

    /// `E[|X|^k]` for scalar laws.
    pub fn abs_moment(&self, k: u32) -> Result<f64> {
        if let Some((x, p)) = self.scalar_atoms() {
            return Ok(x
                .iter()
                .zip(&p)
                .map(|(x, p)| p * x.abs().powi(k as i32))
                .sum());
        }
        match self {
            Prior::Gaussian { mean, variance } => {
                let rule = crate::quadrature::GaussHermite::n64();
                Ok(rule.expect_normal(*mean, *variance, |x| x.abs().powi(k as i32)))
            }
            _ => Err(CmeError::Capability("abs_moment of a vector prior".into())),
        }
    }

    /// Smallest `R` with `|X| <= R` almost surely, if bounded.
    pub fn support_radius(&self) -> Option<f64> {
        match self {
            Prior::Gaussian { .. } => None,
            Prior::SphereUniform { radius, .. } => Some(*radius),
            _ => self.scalar_atoms().map(|(x, p)| {
                x.iter()
                    .zip(&p)
                    .filter(|(_, &p)| p > 0.0)
                    .fold(0.0f64, |m, (x, _)| m.max(x.abs()))
            }),
        }
    }

    pub fn is_symmetric(&self) -> bool {
        match self {
            Prior::Gaussian { mean, .. } => *mean == 0.0,
            Prior::SphereUniform { .. } => true,
            _ => {
                let (x, p) = self.scalar_atoms().expect("discrete");
                x.iter().zip(&p).all(|(xi, pi)| {
                    x.iter()
                        .zip(&p)
                        .any(|(xj, pj)| (xi + xj).abs() < 1e-12 && (pi - pj).abs() < 1e-12)
                })
            }
        }
    }
}

fn gaussian_raw_moment(mean: f64, var: f64, k: u32) -> f64 {
    // E[(m + s Z)^k] = sum_j C(k, 2j) m^{k-2j} var^j (2j-1)!!
    let mut acc = 0.0;
    let mut j = 0;
    while 2 * j <= k {
        let c = crate::polybasis::binomial(k as usize, 2 * j as usize);
        let dfact: f64 = (1..=j).map(|i| (2 * i - 1) as f64).product();
        acc += c * mean.powi((k - 2 * j) as i32) * var.powi(j as i32) * dfact;
        j += 1;
    }
    acc
}

#[derive(Debug, Clone, PartialEq)]
enum Law {
    Atoms { x: Vec<f64>, logp: Vec<f64> },
    Gaussian { mean: f64, var: f64 },
}

/// Scalar channel `Y = X + N` with `N ~ N(0, sigma2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarChannel {
    prior: Prior,
    sigma2: f64,
    law: Law,
}

impl ScalarChannel {
    pub fn new(prior: Prior, sigma2: f64) -> Result<Self> {
        prior.validate()?;
        if !(sigma2 > 0.0) || !sigma2.is_finite() {
            return Err(CmeError::Argument(format!(
                "noise variance must be > 0, got {sigma2}"
            )));
        }
        let law = if let Some((x, p)) = prior.scalar_atoms() {
            let (x, logp): (Vec<f64>, Vec<f64>) = x
                .into_iter()
                .zip(p)
                .filter(|(_, p)| *p > 0.0)
                .map(|(x, p)| (x, p.ln()))
                .unzip();
            Law::Atoms { x, logp }
        } else {
            match &prior {
                Prior::Gaussian { mean, variance } => Law::Gaussian {
                    mean: *mean,
                    var: *variance,
                },
                _ => {
                    return Err(CmeError::Capability(
                        "a sphere prior of dimension > 1 needs a vector channel".into(),
                    ))
                }
            }
        };
        Ok(ScalarChannel { prior, sigma2, law })
    }

    pub fn prior(&self) -> &Prior {
        &self.prior
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn sigma(&self) -> f64 {
        self.sigma2.sqrt()
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self.law, Law::Atoms { .. })
    }

    /// Atom locations of a discrete prior (positive-mass atoms only).
    pub fn atoms(&self) -> Option<(&[f64], Vec<f64>)> {
        match &self.law {
            Law::Atoms { x, logp } => Some((x, logp.iter().map(|l| l.exp()).collect())),
            _ => None,
        }
    }

    /// `E[Y]`.
    pub fn y_mean(&self) -> f64 {
        self.prior.raw_moment(1).expect("scalar prior")
    }

    /// Standard deviation of `Y`.
    pub fn y_sd(&self) -> f64 {
        let m1 = self.prior.raw_moment(1).expect("scalar prior");
        let m2 = self.prior.raw_moment(2).expect("scalar prior");
        ((m2 - m1 * m1).max(0.0) + self.sigma2).sqrt()
    }

    /// Interval holding all but a negligible amount of the mass of `Y`.
    pub fn y_window(&self, sds: f64) -> (f64, f64) {
        match &self.law {
            Law::Atoms { x, .. } => {
                let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                (lo - sds * self.sigma(), hi + sds * self.sigma())
            }
            Law::Gaussian { mean, var } => {
                let s = (var + self.sigma2).sqrt();
                (mean - sds * s, mean + sds * s)
            }
        }
    }

    /// `log f_Y(y)`.
    pub fn log_density(&self, y: f64) -> f64 {
        match &self.law {
            Law::Atoms { x, logp } => {
                let terms: Vec<f64> = x
                    .iter()
                    .zip(logp)
                    .map(|(xi, lp)| lp + normal_log_pdf(y - xi, self.sigma2))
                    .collect();
                log_sum_exp(&terms)
            }
            Law::Gaussian { mean, var } => normal_log_pdf(y - mean, var + self.sigma2),
        }
    }

    /// Posterior atom weights `P(X = x_i | Y = y)` for discrete priors.
    pub fn posterior_weights(&self, y: f64) -> Option<Vec<f64>> {
        match &self.law {
            Law::Atoms { x, logp } => {
                let s2 = self.sigma2;
                let l: Vec<f64> = x
                    .iter()
                    .zip(logp)
                    .map(|(xi, lp)| lp - 0.5 * (y - xi) * (y - xi) / s2)
                    .collect();
                let m = l.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let w: Vec<f64> = l.iter().map(|v| (v - m).exp()).collect();
                let total: f64 = w.iter().sum();
                Some(w.into_iter().map(|v| v / total).collect())
            }
            _ => None,
        }
    }

    /// Ratios `f_Y^{(j)}(y) / f_Y(y)` for `j = 0..=kmax`.
    pub fn density_ratios(&self, y: f64, kmax: usize) -> Result<Vec<f64>> {
        check_order(kmax)?;
        let mut out = vec![0.0; kmax + 1];
        let mut he = Vec::with_capacity(kmax + 1);
        match &self.law {
            Law::Atoms { x, .. } => {
                let w = self.posterior_weights(y).expect("discrete");
                let s = self.sigma();
                for (xi, wi) in x.iter().zip(&w) {
                    if *wi == 0.0 {
                        continue;
                    }
                    hermite_he_into(kmax, (y - xi) / s, &mut he);
                    for (o, h) in out.iter_mut().zip(&he) {
                        *o += wi * h;
                    }
                }
                scale_ratios(&mut out, s);
            }
            Law::Gaussian { mean, var } => {
                let s = (var + self.sigma2).sqrt();
                hermite_he_into(kmax, (y - mean) / s, &mut he);
                out.copy_from_slice(&he);
                scale_ratios(&mut out, s);
            }
        }
        Ok(out)
    }

    /// `f_Y^{(k)}(y)`.
    pub fn marginal_density(&self, y: f64, k: usize) -> Result<f64> {
        let r = self.density_ratios(y, k)?;
        Ok(self.log_density(y).exp() * r[k])
    }

    /// `(log f_Y)^{(j)}(y)` for `j = 0..=kmax`; entry 0 is `log f_Y(y)`.
    pub fn log_density_derivatives(&self, y: f64, kmax: usize) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(kmax + 1);
        out.push(self.log_density(y));
        if kmax == 0 {
            return Ok(out);
        }
        match &self.law {
            Law::Gaussian { mean, var } => {
                let v = var + self.sigma2;
                out.push(-(y - mean) / v);
                if kmax >= 2 {
                    out.push(-1.0 / v);
                }
                out.resize(kmax + 1, 0.0);
            }
            Law::Atoms { .. } => {
                let r = self.density_ratios(y, kmax)?;
                let l = crate::polybasis::moments_to_cumulants(&r[1..])?;
                out.extend(l);
            }
        }
        Ok(out)
    }

    /// `F_Y(y)`.
    pub fn cdf(&self, y: f64) -> f64 {
        match &self.law {
            Law::Atoms { x, logp } => x
                .iter()
                .zip(logp)
                .map(|(xi, lp)| lp.exp() * std_normal_cdf((y - xi) / self.sigma()))
                .sum(),
            Law::Gaussian { mean, var } => std_normal_cdf((y - mean) / (var + self.sigma2).sqrt()),
        }
    }

    /// Same channel with a different noise variance.
    pub fn with_sigma2(&self, sigma2: f64) -> Result<ScalarChannel> {
        ScalarChannel::new(self.prior.clone(), sigma2)
    }
}

fn check_order(k: usize) -> Result<()> {
    if k > MAX_DERIVATIVE_ORDER {
        return Err(CmeError::Capability(format!(
            "derivative order {k} exceeds {MAX_DERIVATIVE_ORDER}"
        )));
    }
    Ok(())
}

// phi^{(j)}(u) = (-1)^j s^{-j} He_j(u/s) phi(u)
fn scale_ratios(r: &mut [f64], s: f64) {
    let mut f = 1.0;
    for v in r.iter_mut() {
        *v *= f;
        f *= -1.0 / s;
    }
}

/// Finite union of closed intervals and isolated atoms on the line.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EventSet {
    pub intervals: Vec<(f64, f64)>,
    pub atoms: Vec<f64>,
}

impl EventSet {
    pub fn full() -> Self {
        EventSet::interval(f64::NEG_INFINITY, f64::INFINITY)
    }

    pub fn interval(lo: f64, hi: f64) -> Self {
        EventSet {
            intervals: vec![(lo, hi)],
            atoms: vec![],
        }
    }

    pub fn atoms(points: Vec<f64>) -> Self {
        EventSet {
            intervals: vec![],
            atoms: points,
        }
    }

    /// `R \ (lo, hi)`.
    pub fn outside(lo: f64, hi: f64) -> Self {
        EventSet {
            intervals: vec![(f64::NEG_INFINITY, lo), (hi, f64::INFINITY)],
            atoms: vec![],
        }
    }

    pub fn union(mut self, other: EventSet) -> Self {
        self.intervals.extend(other.intervals);
        self.atoms.extend(other.atoms);
        self
    }

    pub fn contains(&self, x: f64) -> bool {
        self.intervals.iter().any(|&(a, b)| x >= a && x <= b)
            || self
                .atoms
                .iter()
                .any(|a| (a - x).abs() <= 1e-12 * (1.0 + x.abs()))
    }
}

/// Reference implementation of Bayes' rule over the prior.
#[derive(Debug, Clone)]
pub struct PosteriorOracle {
    channel: ScalarChannel,
    spec: AdaptiveSpec,
    window_sds: f64,
}

impl PosteriorOracle {
    pub fn new(channel: &ScalarChannel) -> Self {
        PosteriorOracle {
            channel: channel.clone(),
            spec: AdaptiveSpec {
                abs_tol: 1e-10,
                rel_tol: 1e-13,
                max_intervals: 4000,
            },
            window_sds: 16.0,
        }
    }

    pub fn with_spec(mut self, spec: AdaptiveSpec) -> Self {
        self.spec = spec;
        self
    }

    pub fn channel(&self) -> &ScalarChannel {
        &self.channel
    }

    /// `E[g(X) | Y = y]`.
    pub fn expectation<G: Fn(f64) -> f64>(&self, y: f64, g: G) -> Result<f64> {
        self.expectation_on_set(y, &EventSet::full(), g)
            .map(|(e, _)| e)
    }

    /// `(E[g(X) | Y = y, X in A], P(X in A | Y = y))`.
    pub fn expectation_on_set<G: Fn(f64) -> f64>(
        &self,
        y: f64,
        set: &EventSet,
        g: G,
    ) -> Result<(f64, f64)> {
        match &self.channel.law {
            Law::Atoms { x, logp } => {
                if !x
                    .iter()
                    .zip(logp)
                    .any(|(xi, lp)| lp.is_finite() && set.contains(*xi))
                {
                    return Err(CmeError::Domain("set has zero prior mass".into()));
                }
                let w = self.channel.posterior_weights(y).expect("discrete");
                let mut mass = 0.0;
                let mut acc = 0.0;
                for (xi, wi) in x.iter().zip(&w) {
                    if set.contains(*xi) {
                        mass += wi;
                        acc += wi * g(*xi);
                    }
                }
                if mass <= 0.0 {
                    return Err(CmeError::numeric("posterior set mass underflowed", mass));
                }
                Ok((acc / mass, mass))
            }
            Law::Gaussian { mean, var } => {
                if !set.intervals.iter().any(|(a, b)| b > a) {
                    return Err(CmeError::Domain("set has zero prior mass".into()));
                }
                let s2 = self.channel.sigma2;
                let (mean, var) = (*mean, *var);
                // The integrand is a product of two Gaussian factors in x; the
                // window is placed around its peak.
                let centre = (var * y + s2 * mean) / (var + s2);
                let sd = (var * s2 / (var + s2)).sqrt();
                let lo = centre - self.window_sds * sd;
                let hi = centre + self.window_sds * sd;
                let log_peak = normal_log_pdf(centre - mean, var) + normal_log_pdf(y - centre, s2);
                let weight = |x: f64| {
                    (normal_log_pdf(x - mean, var) + normal_log_pdf(y - x, s2) - log_peak).exp()
                };
                let total = integrate_adaptive(weight, &breakpoints(lo, hi, sd, &[]), self.spec)?;
                let mut mass = 0.0;
                let mut acc = 0.0;
                for &(a, b) in &set.intervals {
                    let (a, b) = (a.max(lo), b.min(hi));
                    if b <= a {
                        continue;
                    }
                    let pts = breakpoints(a, b, sd, &[]);
                    mass += integrate_adaptive(weight, &pts, self.spec)?;
                    acc += integrate_adaptive(|x| weight(x) * g(x), &pts, self.spec)?;
                }
                if mass <= 0.0 {
                    return Err(CmeError::numeric("posterior set mass underflowed", mass));
                }
                Ok((acc / mass, mass / total))
            }
        }
    }

    /// `E[X^k | Y = y]`.
    pub fn posterior_moment(&self, k: u32, y: f64) -> Result<f64> {
        self.expectation(y, |x| x.powi(k as i32))
    }

    /// `E[X^j | Y = y]` for `j = 1..=kmax`.
    pub fn posterior_moments(&self, kmax: u32, y: f64) -> Result<Vec<f64>> {
        (1..=kmax).map(|k| self.posterior_moment(k, y)).collect()
    }

    /// `Var(X | Y = y)` as a centred second moment.
    pub fn posterior_variance(&self, y: f64) -> Result<f64> {
        let m = self.posterior_moment(1, y)?;
        self.expectation(y, |x| (x - m) * (x - m))
    }

    /// `P(X in A | Y = y)`.
    pub fn posterior_set_probability(&self, set: &EventSet, y: f64) -> Result<f64> {
        self.expectation_on_set(y, set, |_| 1.0).map(|(_, p)| p)
    }

    /// `E[X^k | Y = y, X in A]`.
    pub fn posterior_moment_on_set(&self, set: &EventSet, k: u32, y: f64) -> Result<f64> {
        self.expectation_on_set(y, set, |x| x.powi(k as i32))
            .map(|(e, _)| e)
    }

    /// `Var(X | Y = y, X in A)`.
    pub fn posterior_variance_on_set(&self, set: &EventSet, y: f64) -> Result<f64> {
        let m = self.posterior_moment_on_set(set, 1, y)?;
        self.expectation_on_set(y, set, |x| (x - m) * (x - m))
            .map(|(e, _)| e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polybasis::std_normal_pdf;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn three_atoms() -> ScalarChannel {
        ScalarChannel::new(Prior::uniform_atoms(vec![-2.0, 0.0, 2.0]).unwrap(), 1.0).unwrap()
    }

    fn test_channels() -> Vec<ScalarChannel> {
        vec![
            ScalarChannel::new(Prior::two_point(0.5).unwrap(), 1.0).unwrap(),
            ScalarChannel::new(Prior::two_point(0.3).unwrap(), 0.5).unwrap(),
            three_atoms(),
            ScalarChannel::new(Prior::uniform_atoms(vec![-3.0, 0.0, 3.0]).unwrap(), 1.0).unwrap(),
            ScalarChannel::new(Prior::gaussian(0.0, 1.0).unwrap(), 1.0).unwrap(),
            ScalarChannel::new(Prior::gaussian(0.5, 2.0).unwrap(), 0.7).unwrap(),
        ]
    }

    #[test]
    fn density_examples() {
        let ch = ScalarChannel::new(Prior::two_point(0.5).unwrap(), 1.0).unwrap();
        assert!((ch.marginal_density(0.0, 0).unwrap() - std_normal_pdf(1.0)).abs() < 1e-15);
        let ch = ScalarChannel::new(Prior::gaussian(0.0, 1.0).unwrap(), 1.0).unwrap();
        assert!((ch.marginal_density(0.0, 0).unwrap() - 1.0 / (4.0 * PI).sqrt()).abs() < 1e-15);
        assert!(three_atoms().marginal_density(0.0, 1).unwrap().abs() < 1e-16);
    }

    #[test]
    fn prior_validation() {
        assert!(Prior::atoms(vec![0.0, 1.0], vec![0.5, 0.6]).is_err());
        assert!(Prior::gaussian(0.0, 0.0).is_err());
        assert!(Prior::two_point(1.0).is_err());
        assert!(Prior::sphere(-1.0, 2).is_err());
        assert!(ScalarChannel::new(Prior::two_point(0.5).unwrap(), 0.0).is_err());
        assert!(matches!(
            ScalarChannel::new(Prior::sphere(1.0, 3).unwrap(), 1.0),
            Err(CmeError::Capability(_))
        ));
        let ch = three_atoms();
        assert!(matches!(
            ch.marginal_density(0.0, 14),
            Err(CmeError::Capability(_))
        ));
    }

    #[test]
    fn density_integrates_to_one() {
        for ch in test_channels() {
            let (lo, hi) = ch.y_window(10.0);
            let v = integrate_adaptive(
                |y| ch.marginal_density(y, 0).unwrap(),
                &breakpoints(lo, hi, 0.5, &[]),
                AdaptiveSpec::default(),
            )
            .unwrap();
            assert!((v - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for ch in test_channels() {
            for &y in &[-2.7, -0.4, 0.3, 1.9] {
                for k in 1..=6 {
                    let h = 1e-4;
                    let fd = (ch.marginal_density(y + h, k - 1).unwrap()
                        - ch.marginal_density(y - h, k - 1).unwrap())
                        / (2.0 * h);
                    let exact = ch.marginal_density(y, k).unwrap();
                    let scale = exact.abs().max(ch.marginal_density(y, 0).unwrap());
                    assert!((fd - exact).abs() <= 1e-6 * scale, "k={k} y={y}");
                }
            }
        }
    }

    #[test]
    fn log_density_derivatives_match_differences() {
        for ch in test_channels() {
            let y = 0.8;
            let l = ch.log_density_derivatives(y, 4).unwrap();
            let h = 1e-4;
            for k in 1..=4 {
                let up = ch.log_density_derivatives(y + h, k - 1).unwrap()[k - 1];
                let dn = ch.log_density_derivatives(y - h, k - 1).unwrap()[k - 1];
                assert!(((up - dn) / (2.0 * h) - l[k]).abs() < 1e-6 * (1.0 + l[k].abs()));
            }
        }
    }

    #[test]
    fn tails_do_not_underflow() {
        let ch = three_atoms();
        let r = ch.density_ratios(60.0, 3).unwrap();
        assert!(r.iter().all(|v| v.is_finite()));
        assert!(ch.log_density(60.0).is_finite());
        let o = PosteriorOracle::new(&ch);
        assert!((o.posterior_moment(1, 60.0).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn oracle_examples() {
        let ch = ScalarChannel::new(Prior::two_point(0.5).unwrap(), 1.0).unwrap();
        let o = PosteriorOracle::new(&ch);
        assert!((o.posterior_moment(1, 1.0).unwrap() - 1f64.tanh()).abs() < 1e-14);
        assert!((o.posterior_moment(2, 0.7).unwrap() - 1.0).abs() < 1e-14);
        assert!(
            (o.posterior_set_probability(&EventSet::atoms(vec![1.0]), 0.0)
                .unwrap()
                - 0.5)
                .abs()
                < 1e-15
        );
        let g = ScalarChannel::new(Prior::gaussian(0.0, 1.0).unwrap(), 1.0).unwrap();
        let og = PosteriorOracle::new(&g);
        assert!((og.posterior_moment(1, 2.0).unwrap() - 1.0).abs() < 1e-10);
        assert!((og.posterior_variance(2.0).unwrap() - 0.5).abs() < 1e-10);
        assert!(
            (og.posterior_set_probability(&EventSet::full(), 0.3)
                .unwrap()
                - 1.0)
                .abs()
                < 1e-12
        );
    }

    #[test]
    fn truncated_gaussian_set() {
        let g = ScalarChannel::new(Prior::gaussian(0.0, 1.0).unwrap(), 1.0).unwrap();
        let o = PosteriorOracle::new(&g);
        let t = 0.4;
        let a = EventSet::interval(f64::NEG_INFINITY, t);
        for &y in &[-2.0, 0.0, 1.5] {
            let m = y / 2.0;
            let s = 0.5f64.sqrt();
            let beta = (t - m) / s;
            let lam = std_normal_pdf(beta) / std_normal_cdf(beta);
            let p = o.posterior_set_probability(&a, y).unwrap();
            assert!((p - std_normal_cdf(beta)).abs() < 1e-10);
            let mean = o.posterior_moment_on_set(&a, 1, y).unwrap();
            assert!((mean - (m - s * lam)).abs() < 1e-9);
            let var = o.posterior_variance_on_set(&a, y).unwrap();
            assert!((var - s * s * (1.0 - beta * lam - lam * lam)).abs() < 1e-9);
        }
        assert!(matches!(
            o.posterior_set_probability(&EventSet::atoms(vec![0.0]), 0.0),
            Err(CmeError::Domain(_))
        ));
    }

    #[test]
    fn tower_property() {
        for ch in test_channels() {
            let o = PosteriorOracle::new(&ch);
            let (lo, hi) = ch.y_window(10.0);
            let v = integrate_adaptive(
                |y| o.posterior_moment(1, y).unwrap() * ch.marginal_density(y, 0).unwrap(),
                &breakpoints(lo, hi, 0.5, &[]),
                AdaptiveSpec::default(),
            )
            .unwrap();
            assert!((v - ch.prior().raw_moment(1).unwrap()).abs() < 1e-6);
        }
    }

    #[test]
    fn gaussian_raw_moments() {
        assert!((gaussian_raw_moment(1.0, 2.0, 2) - 3.0).abs() < 1e-15);
        assert!((gaussian_raw_moment(0.0, 1.0, 4) - 3.0).abs() < 1e-15);
        assert!((gaussian_raw_moment(1.0, 1.0, 3) - 4.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn jensen_and_nonnegative_variance(y in -6.0f64..6.0, idx in 0usize..6) {
            let ch = &test_channels()[idx];
            let o = PosteriorOracle::new(ch);
            let m1 = o.posterior_moment(1, y).unwrap();
            let m2 = o.posterior_moment(2, y).unwrap();
            prop_assert!(m2 - m1 * m1 >= -1e-12);
            prop_assert!(o.posterior_variance(y).unwrap() >= 0.0);
        }
    }
}

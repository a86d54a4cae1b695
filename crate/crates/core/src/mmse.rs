//! Minimum mean squared error of the scalar channel, its information-density
//! representations and the Gaussian Poincaré lower bound.

use rayon::prelude::*;

use crate::channel::{PosteriorOracle, Prior, ScalarChannel};
use crate::error::{CmeError, Result};
use crate::identities::{hatsell_nolte_variance, tre_mean};
use crate::infodensity::info_density;
use crate::polybasis::normal_pdf;
use crate::quadrature::{breakpoints, integrate_adaptive, AdaptiveSpec, GaussHermite};

const WINDOW_SDS: f64 = 12.0;

fn spec() -> AdaptiveSpec {
    AdaptiveSpec {
        abs_tol: 1e-13,
        rel_tol: 1e-12,
        max_intervals: 20_000,
    }
}

/// Runs an integrand that can fail through adaptive quadrature.
fn integrate_fallible<F: FnMut(f64) -> Result<f64>>(mut f: F, pts: &[f64]) -> Result<f64> {
    let mut err = None;
    let v = integrate_adaptive(
        |t| match f(t) {
            Ok(v) => v,
            Err(e) => {
                err.get_or_insert(e);
                0.0
            }
        },
        pts,
        spec(),
    )?;
    match err {
        Some(e) => Err(e),
        None => Ok(v),
    }
}

fn y_breakpoints(ch: &ScalarChannel) -> Vec<f64> {
    let (lo, hi) = ch.y_window(WINDOW_SDS);
    let extra: Vec<f64> = ch.atoms().map(|(x, _)| x.to_vec()).unwrap_or_default();
    breakpoints(lo, hi, ch.sigma(), &extra)
}

/// Expectation over the prior: a finite sum for atoms, 64-node Gauss–Hermite
/// for a Gaussian prior.
fn prior_expectation<F: Fn(f64) -> Result<f64> + Sync>(ch: &ScalarChannel, f: F) -> Result<f64> {
    match ch.prior() {
        Prior::Gaussian { mean, variance } => {
            let gh = GaussHermite::n64();
            let mut err = None;
            let v = gh.expect_normal(*mean, *variance, |x| match f(x) {
                Ok(v) => v,
                Err(e) => {
                    err.get_or_insert(e);
                    0.0
                }
            });
            match err {
                Some(e) => Err(e),
                None => Ok(v),
            }
        }
        _ => {
            let (x, p) = ch
                .atoms()
                .ok_or_else(|| CmeError::Capability("unsupported scalar prior".into()))?;
            let terms = x
                .par_iter()
                .zip(p.par_iter())
                .map(|(xi, pi)| f(*xi).map(|v| pi * v))
                .collect::<Result<Vec<f64>>>()?;
            Ok(terms.iter().sum())
        }
    }
}

fn check_second_moment(ch: &ScalarChannel) -> Result<()> {
    let m2 = ch.prior().raw_moment(2)?;
    if m2.is_finite() {
        Ok(())
    } else {
        Err(CmeError::Domain("prior has no finite second moment".into()))
    }
}

/// `int Var(X | Y = y) f_Y(y) dy` with the posterior oracle's variance.
pub fn mmse_exact(ch: &ScalarChannel) -> Result<f64> {
    check_second_moment(ch)?;
    let oracle = PosteriorOracle::new(ch);
    integrate_fallible(
        |y| Ok(oracle.posterior_variance(y)? * ch.log_density(y).exp()),
        &y_breakpoints(ch),
    )
}

/// `sigma^4 E[(d/dy iota(X; Y))^2] = E[(X - E[X|Y])^2]`, prior outside and the
/// noise integral inside.
pub fn mmse_gradient_rep(ch: &ScalarChannel) -> Result<f64> {
    check_second_moment(ch)?;
    let s2 = ch.sigma2();
    let s = ch.sigma();
    prior_expectation(ch, |x| {
        let pts = breakpoints(x - WINDOW_SDS * s, x + WINDOW_SDS * s, s, &[]);
        integrate_fallible(
            |y| {
                let d = x - tre_mean(ch, y)?;
                Ok(normal_pdf(y - x, s2) * d * d)
            },
            &pts,
        )
    })
}

/// `-sigma^4 E[d^2/dy^2 iota(X; Y)] = E[Var(X | Y)]` with the analytic
/// second derivative of `log f_Y`.
pub fn mmse_hessian_rep(ch: &ScalarChannel) -> Result<f64> {
    check_second_moment(ch)?;
    integrate_fallible(
        |y| Ok(hatsell_nolte_variance(ch, y)? * ch.log_density(y).exp()),
        &y_breakpoints(ch),
    )
}

/// `(gradient_rep, hessian_rep)`.
pub fn mmse_reps(ch: &ScalarChannel) -> Result<(f64, f64)> {
    Ok((mmse_gradient_rep(ch)?, mmse_hessian_rep(ch)?))
}

/// `Var(iota(x; x + N))` over the noise, 64-node Gauss–Hermite centred at `x`.
pub fn info_density_conditional_variance(ch: &ScalarChannel, x: f64) -> Result<f64> {
    let gh = GaussHermite::n64();
    let mut err = None;
    let mut eval = |y: f64| match info_density(ch, x, y) {
        Ok(v) => v,
        Err(e) => {
            err.get_or_insert(e);
            0.0
        }
    };
    let mean = gh.expect_normal(x, ch.sigma2(), &mut eval);
    let var = gh.expect_normal(x, ch.sigma2(), |y| {
        let d = eval(y) - mean;
        d * d
    });
    match err {
        Some(e) => Err(e),
        None => Ok(var),
    }
}

/// `sigma^2 E_X[Var(iota(X; X + N) | X)]`.
pub fn poincare_lower_bound(ch: &ScalarChannel) -> Result<f64> {
    check_second_moment(ch)?;
    Ok(ch.sigma2() * prior_expectation(ch, |x| info_density_conditional_variance(ch, x))?)
}

/// `sigma^2 / (1 + sigma^2)` for a standard Gaussian prior.
pub fn gaussian_mmse(sigma2: f64) -> f64 {
    sigma2 / (1.0 + sigma2)
}

/// Poincaré bound for a standard Gaussian prior.
pub fn gaussian_poincare(sigma2: f64) -> f64 {
    sigma2 / (1.0 + sigma2) - 0.5 * sigma2 / ((1.0 + sigma2) * (1.0 + sigma2))
}

/// All MMSE quantities at one noise level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmseReport {
    pub sigma2: f64,
    pub mmse_exact: f64,
    pub mmse_gradient_rep: f64,
    pub mmse_hessian_rep: f64,
    pub poincare_lower: f64,
}

impl MmseReport {
    pub fn compute(ch: &ScalarChannel) -> Result<Self> {
        let (g, h) = mmse_reps(ch)?;
        Ok(MmseReport {
            sigma2: ch.sigma2(),
            mmse_exact: mmse_exact(ch)?,
            mmse_gradient_rep: g,
            mmse_hessian_rep: h,
            poincare_lower: poincare_lower_bound(ch)?,
        })
    }

    /// Largest disagreement between the three representations.
    pub fn spread(&self) -> f64 {
        let v = [
            self.mmse_exact,
            self.mmse_gradient_rep,
            self.mmse_hessian_rep,
        ];
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        hi - lo
    }
}

/// `(sigma2, mmse, lower_bound)` rows over noise levels, in input order.
pub fn mmse_curve(prior: &Prior, sigma2s: &[f64]) -> Result<Vec<(f64, f64, f64)>> {
    sigma2s
        .par_iter()
        .map(|&s2| {
            let ch = ScalarChannel::new(prior.clone(), s2)?;
            Ok((s2, mmse_exact(&ch)?, poincare_lower_bound(&ch)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn gauss(s2: f64) -> ScalarChannel {
        ScalarChannel::new(Prior::gaussian(0.0, 1.0).unwrap(), s2).unwrap()
    }

    fn test_priors() -> Vec<Prior> {
        vec![
            Prior::gaussian(0.0, 1.0).unwrap(),
            Prior::two_point(0.5).unwrap(),
            Prior::two_point(0.2).unwrap(),
            Prior::uniform_atoms(vec![-2.0, 0.0, 2.0]).unwrap(),
            Prior::atoms(vec![-1.0, 0.5, 3.0], vec![0.3, 0.3, 0.4]).unwrap(),
        ]
    }

    #[test]
    fn gaussian_values() {
        let ch = gauss(1.0);
        assert!((mmse_exact(&ch).unwrap() - 0.5).abs() < 1e-8);
        assert!((poincare_lower_bound(&ch).unwrap() - 0.375).abs() < 1e-6);
        let (g, h) = mmse_reps(&ch).unwrap();
        assert!((g - 0.5).abs() < 1e-8 && (h - 0.5).abs() < 1e-8);
        for &x in &[-2.0, 0.0, 1.3] {
            let want = (0.5 + x * x) / 4.0;
            assert!((info_density_conditional_variance(&ch, x).unwrap() - want).abs() < 1e-10);
        }
    }

    #[test]
    fn gaussian_curve() {
        let mut worst = 0.0f64;
        for i in 0..20 {
            let s2 = 10f64.powf(-2.0 + 4.0 * i as f64 / 19.0);
            let ch = gauss(s2);
            worst = worst.max((mmse_exact(&ch).unwrap() - gaussian_mmse(s2)).abs());
            worst = worst.max((poincare_lower_bound(&ch).unwrap() - gaussian_poincare(s2)).abs());
        }
        assert!(worst <= 1e-10, "{worst}");
    }

    #[test]
    fn point_mass_has_zero_mmse() {
        let ch = ScalarChannel::new(Prior::atoms(vec![1.5], vec![1.0]).unwrap(), 1.0).unwrap();
        assert!(mmse_exact(&ch).unwrap().abs() < 1e-15);
        assert!(poincare_lower_bound(&ch).unwrap().abs() < 1e-12);
    }

    #[test]
    fn representations_agree_and_bound_holds() {
        for prior in test_priors() {
            for &s2 in &[0.25, 1.0, 4.0] {
                let ch = ScalarChannel::new(prior.clone(), s2).unwrap();
                let r = MmseReport::compute(&ch).unwrap();
                assert!(r.spread() <= 1e-5, "{prior:?} s2={s2}: {r:?}");
                assert!(
                    r.poincare_lower <= r.mmse_exact + 1e-6,
                    "{prior:?} s2={s2}: {r:?}"
                );
            }
        }
    }

    #[test]
    fn bound_over_noise_levels() {
        let s2s = [0.1, 0.5, 1.0, 5.0, 100.0];
        for prior in [
            Prior::gaussian(0.0, 1.0).unwrap(),
            Prior::two_point(0.5).unwrap(),
        ] {
            for (_, m, lb) in mmse_curve(&prior, &s2s).unwrap() {
                assert!(lb <= m + 1e-6);
            }
        }
    }

    #[test]
    fn two_point_vanishes_at_low_noise() {
        let ch = ScalarChannel::new(Prior::two_point(0.5).unwrap(), 0.01).unwrap();
        assert!(mmse_exact(&ch).unwrap() < 1e-12);
    }

    #[test]
    fn two_point_monte_carlo() {
        let ch = ScalarChannel::new(Prior::two_point(0.5).unwrap(), 1.0).unwrap();
        let exact = mmse_exact(&ch).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let n = 1_000_000;
        let (mut s, mut ss) = (0.0, 0.0);
        for i in 0..n {
            let x = if i % 2 == 0 { 1.0 } else { -1.0 };
            let y: f64 = x + noise.sample(&mut rng);
            let e = (x - y.tanh()).powi(2);
            s += e;
            ss += e * e;
        }
        let mean = s / n as f64;
        let se = ((ss / n as f64 - mean * mean) / n as f64).sqrt();
        assert!(
            (mean - exact).abs() < 3.0 * se,
            "{mean} vs {exact} (se {se})"
        );
    }
}

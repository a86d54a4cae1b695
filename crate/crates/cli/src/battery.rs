//! Scalar identity battery: every closed-form route checked against the
//! posterior oracle on a grid of outputs.

use cme_core::analytic::CeInverter;
use cme_core::distributions::EstimatorDistribution;
use cme_core::identities::{
    conditional_cumulant, hatsell_nolte_variance, jaffer_step, moment_via_bell,
    moment_via_generalized_tre, tre_mean,
};
use cme_core::mmse::MmseReport;
use cme_core::multivar::CheckResult;
use cme_core::polybasis::moments_to_cumulants;
use cme_core::{PosteriorOracle, Prior, Result, ScalarChannel};
use rayon::prelude::*;

const KMAX: usize = 4;

fn priors() -> Result<Vec<(&'static str, Prior)>> {
    Ok(vec![
        ("two-point", Prior::two_point(0.5)?),
        ("skewed-two-point", Prior::two_point(0.2)?),
        ("three-atoms", Prior::uniform_atoms(vec![-2.0, 0.0, 2.0])?),
        (
            "five-atoms",
            Prior::uniform_atoms(vec![-6.0, -3.0, 0.0, 3.0, 6.0])?,
        ),
        ("gaussian", Prior::gaussian(0.0, 1.0)?),
    ])
}

fn ys() -> Vec<f64> {
    (0..41).map(|i| -5.0 + 0.25 * i as f64).collect()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

fn max_over<F: Fn(f64) -> Result<f64> + Sync>(ys: &[f64], f: F) -> Result<f64> {
    let v = ys.par_iter().map(|&y| f(y)).collect::<Result<Vec<_>>>()?;
    Ok(v.into_iter().fold(0.0, f64::max))
}

fn prior_checks(name: &str, prior: &Prior) -> Result<Vec<CheckResult>> {
    let ch = ScalarChannel::new(prior.clone(), 1.0)?;
    let oracle = PosteriorOracle::new(&ch);
    let ys = ys();
    let check = |what: &str, residual: f64, tol: f64| CheckResult {
        name: format!("{what}/{name}"),
        residual,
        tol,
    };
    let mut out = Vec::new();

    let r = max_over(&ys, |y| {
        Ok(rel(tre_mean(&ch, y)?, oracle.posterior_moment(1, y)?))
    })?;
    out.push(check("tre-mean", r, 1e-8));
    let r = max_over(&ys, |y| {
        let m = oracle.posterior_moments(KMAX as u32, y)?;
        let mut worst = 0.0f64;
        for k in 1..=KMAX {
            worst = worst.max(rel(moment_via_bell(&ch, k, y)?, m[k - 1]));
        }
        Ok(worst)
    })?;
    out.push(check("moment-bell", r, 1e-6));
    let r = max_over(&ys, |y| {
        let m = oracle.posterior_moments(KMAX as u32, y)?;
        let mut worst = 0.0f64;
        for k in 1..=KMAX {
            worst = worst.max(rel(moment_via_generalized_tre(&ch, k, y)?, m[k - 1]));
        }
        Ok(worst)
    })?;
    out.push(check("moment-generalized-tre", r, 1e-6));
    let r = max_over(&ys, |y| {
        let m = oracle.posterior_moments(KMAX as u32, y)?;
        let mut worst = 0.0f64;
        for (k, &next) in m.iter().enumerate().skip(1) {
            worst = worst.max(rel(jaffer_step(&ch, k, y)?, next));
        }
        Ok(worst)
    })?;
    out.push(check("moment-recursion", r, 1e-6));
    let r = max_over(&ys, |y| {
        Ok(rel(
            hatsell_nolte_variance(&ch, y)?,
            oracle.posterior_variance(y)?,
        ))
    })?;
    out.push(check("variance-derivative", r, 1e-8));
    let r = max_over(&ys, |y| {
        let c = moments_to_cumulants(&oracle.posterior_moments(KMAX as u32, y)?)?;
        let mut worst = 0.0f64;
        for k in 1..=KMAX {
            worst = worst.max(rel(conditional_cumulant(&ch, k, y)?, c[k - 1]));
        }
        Ok(worst)
    })?;
    out.push(check("cumulants", r, 1e-5));

    let inv = CeInverter::new(&ch);
    let dist = EstimatorDistribution::new(&ch)?;
    let (lo, hi) = dist.range();
    let xs: Vec<f64> = (1..=41).map(|i| lo + (hi - lo) * i as f64 / 42.0).collect();
    let r = max_over(
        &xs,
        |x| Ok((tre_mean(&ch, inv.solve(x, 1e-12)?)? - x).abs()),
    )?;
    out.push(check("inverse-roundtrip", r, 1e-9));
    out.push(check(
        "estimator-mass",
        (dist.total_mass()? - 1.0).abs(),
        1e-6,
    ));

    let rep = MmseReport::compute(&ch)?;
    out.push(check("mmse-representations", rep.spread(), 1e-5));
    out.push(check(
        "mmse-lower-bound",
        (rep.poincare_lower - rep.mmse_exact).max(0.0),
        1e-12,
    ));
    Ok(out)
}

pub fn scalar_battery() -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    for (name, prior) in priors()? {
        out.extend(prior_checks(name, &prior)?);
    }
    let ch = ScalarChannel::new(Prior::two_point(0.5)?, 1.0)?;
    let r = max_over(&ys(), |y| Ok((tre_mean(&ch, y)? - y.tanh()).abs()))?;
    out.push(CheckResult {
        name: "tanh-closed-form/two-point".into(),
        residual: r,
        tol: 1e-10,
    });
    Ok(out)
}

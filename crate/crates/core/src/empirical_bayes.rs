//! Empirical-Bayes estimation of conditional moments and cumulants from
//! output samples alone: a Gaussian-kernel density estimate with exact
//! derivatives, the plug-in moment estimator, the Lanczos cumulant estimator
//! and a seeded consistency experiment.

use std::f64::consts::PI;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use rayon::prelude::*;

use crate::channel::{Prior, ScalarChannel};
use crate::error::{CmeError, Result};
use crate::identities::{
    conditional_cumulant, generalized_tre_from_ratios, moment_via_generalized_tre,
};
use crate::lanczos::LanczosOperator;
use crate::polybasis::factorial;

/// Highest kernel derivative order supported by [`kde_density`].
pub const MAX_KDE_ORDER: usize = 8;
/// Kernel terms with `exp(-z^2/2)` below `e^{-CUTOFF}` times the largest are dropped.
const CUTOFF: f64 = 80.0;

/// Observations `Y_1..Y_n` with the assumed noise variance and the seed that
/// produced them (`None` for external data).
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    observations: Vec<f64>,
    sigma2: f64,
    seed: Option<u64>,
}

impl SampleSet {
    pub fn new(observations: Vec<f64>, sigma2: f64, seed: Option<u64>) -> Result<Self> {
        if observations.len() < 2 {
            return Err(CmeError::Argument("need at least two observations".into()));
        }
        if observations.iter().any(|y| !y.is_finite()) {
            return Err(CmeError::Argument("observations must be finite".into()));
        }
        if !(sigma2 > 0.0) || !sigma2.is_finite() {
            return Err(CmeError::Argument(format!(
                "noise variance must be > 0, got {sigma2}"
            )));
        }
        Ok(SampleSet {
            observations,
            sigma2,
            seed,
        })
    }

    /// `n` draws of `Y = X + N` from a ChaCha8 stream selected by `stream`.
    pub fn draw_stream(
        prior: &Prior,
        sigma2: f64,
        n: usize,
        seed: u64,
        stream: u64,
    ) -> Result<Self> {
        let ch = ScalarChannel::new(prior.clone(), sigma2)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let noise = Normal::new(0.0, ch.sigma()).expect("positive sd");
        let observations: Vec<f64> = match ch.atoms() {
            Some((x, p)) => {
                let idx = WeightedIndex::new(&p)
                    .map_err(|e| CmeError::Argument(format!("prior weights: {e}")))?;
                (0..n)
                    .map(|_| x[idx.sample(&mut rng)] + noise.sample(&mut rng))
                    .collect()
            }
            None => match prior {
                Prior::Gaussian { mean, variance } => {
                    let xs = Normal::new(*mean, variance.sqrt()).expect("positive sd");
                    (0..n)
                        .map(|_| xs.sample(&mut rng) + noise.sample(&mut rng))
                        .collect()
                }
                _ => return Err(CmeError::Capability("unsupported scalar prior".into())),
            },
        };
        SampleSet::new(observations, sigma2, Some(seed))
    }

    pub fn draw(prior: &Prior, sigma2: f64, n: usize, seed: u64) -> Result<Self> {
        Self::draw_stream(prior, sigma2, n, seed, 0)
    }

    pub fn observations(&self) -> &[f64] {
        &self.observations
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }
}

/// Gaussian-kernel density estimate `(1/n) sum_i phi((y - Y_i)/a) / a`.
#[derive(Debug, Clone, PartialEq)]
pub struct KdeModel {
    samples: SampleSet,
    sorted: Vec<f64>,
    a: f64,
}

impl KdeModel {
    pub fn new(samples: SampleSet, bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0) || !bandwidth.is_finite() {
            return Err(CmeError::Argument(format!(
                "bandwidth must be > 0, got {bandwidth}"
            )));
        }
        let mut sorted = samples.observations.clone();
        sorted.sort_by(f64::total_cmp);
        Ok(KdeModel {
            samples,
            sorted,
            a: bandwidth,
        })
    }

    pub fn bandwidth(&self) -> f64 {
        self.a
    }

    pub fn samples(&self) -> &SampleSet {
        &self.samples
    }

    pub fn sigma2(&self) -> f64 {
        self.samples.sigma2
    }

    /// `(log c, [S_0, ..., S_rmax])` with `f^(r)(y) = c S_r`. The kernel sums
    /// are shifted by the nearest sample so that they cannot all underflow,
    /// and samples whose shifted weight is below `e^{-80}` are skipped.
    fn scaled_sums(&self, y: f64, rmax: usize) -> (f64, Vec<f64>) {
        let a = self.a;
        let obs = &self.sorted;
        let i = obs.partition_point(|v| *v < y);
        let near = [i.checked_sub(1), (i < obs.len()).then_some(i)]
            .into_iter()
            .flatten()
            .map(|j| (y - obs[j]).abs())
            .fold(f64::INFINITY, f64::min);
        let zmin2 = (near / a).powi(2);
        let reach = a * (zmin2 + 2.0 * CUTOFF).sqrt();
        let lo = obs.partition_point(|v| *v < y - reach);
        let hi = obs.partition_point(|v| *v <= y + reach);
        let mut s = vec![0.0; rmax + 1];
        let mut he = [0.0; MAX_KDE_ORDER + 1];
        for yi in &obs[lo..hi] {
            let z = (y - yi) / a;
            let e = (-0.5 * (z * z - zmin2)).exp();
            s[0] += e;
            if rmax >= 1 {
                he[0] = 1.0;
                he[1] = z;
                s[1] += e * z;
                for j in 1..rmax {
                    he[j + 1] = z * he[j] - j as f64 * he[j - 1];
                    s[j + 1] += e * he[j + 1];
                }
            }
        }
        // phi^(r)(z) = (-1)^r He_r(z) phi(z), chain rule gives a^{-(r+1)}
        let mut f = 1.0;
        for v in s.iter_mut() {
            *v *= f;
            f *= -1.0 / a;
        }
        let logc = -0.5 * zmin2 - (obs.len() as f64).ln() - a.ln() - 0.5 * (2.0 * PI).ln();
        (logc, s)
    }

    /// `f^(r)(y)` for `r = 0..=rmax`.
    pub fn derivatives(&self, y: f64, rmax: usize) -> Result<Vec<f64>> {
        check_kde_order(rmax)?;
        let (logc, s) = self.scaled_sums(y, rmax);
        let c = logc.exp();
        Ok(s.into_iter().map(|v| c * v).collect())
    }

    /// Ratios `f^(r)(y) / f(y)` for `r = 0..=rmax`, computed without forming `f`.
    pub fn ratios(&self, y: f64, rmax: usize) -> Result<Vec<f64>> {
        check_kde_order(rmax)?;
        let (_, s) = self.scaled_sums(y, rmax);
        if !(s[0] > 0.0) || !s[0].is_finite() {
            return Err(CmeError::numeric("kernel density underflow", s[0]));
        }
        Ok(s.iter().map(|v| v / s[0]).collect())
    }
}

fn check_kde_order(r: usize) -> Result<()> {
    if r > MAX_KDE_ORDER {
        return Err(CmeError::Argument(format!(
            "kernel derivative order {r} exceeds {MAX_KDE_ORDER}"
        )));
    }
    Ok(())
}

/// `f^(r)(y)` of the kernel density estimate.
pub fn kde_density(model: &KdeModel, y: f64, r: usize) -> Result<f64> {
    Ok(model.derivatives(y, r)?[r])
}

/// Estimate of `E[X^k | Y = y]` with the density estimate in place of `f_Y`.
pub fn eb_conditional_moment(model: &KdeModel, k: usize, y: f64) -> Result<f64> {
    if k == 0 {
        return Ok(1.0);
    }
    let r = model.ratios(y, k)?;
    let v = generalized_tre_from_ratios(&r, model.sigma2(), k, y);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(CmeError::numeric(
            "estimated conditional moment is not finite",
            v,
        ))
    }
}

/// Estimate of the cumulant of order `op.order() + 1`:
/// `sigma^{2k} D_h^{(k)} m_1(y)` with `m_1` the estimated conditional mean.
pub fn eb_conditional_cumulant(model: &KdeModel, op: &LanczosOperator, y: f64) -> Result<f64> {
    let k = op.order();
    let d = op.try_apply(|t| eb_conditional_moment(model, 1, t), y)?;
    Ok(model.sigma2().powi(k as i32) * d)
}

/// Plug-in cumulant estimate with an arbitrary mean function, used to check
/// the estimator against the exact conditional mean.
pub fn lanczos_cumulant<F: FnMut(f64) -> Result<f64>>(
    mean: F,
    sigma2: f64,
    op: &LanczosOperator,
    y: f64,
) -> Result<f64> {
    Ok(sigma2.powi(op.order() as i32) * op.try_apply(mean, y)?)
}

/// What a schedule is tuned for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EbTarget {
    /// `E[X^k | Y]`.
    Moment(usize),
    /// The cumulant of order `k + 1`, through a Lanczos derivative of order `k`.
    Cumulant(usize),
}

impl EbTarget {
    pub fn order(&self) -> usize {
        match self {
            EbTarget::Moment(k) | EbTarget::Cumulant(k) => *k,
        }
    }
}

/// Bandwidth, evaluation range and Lanczos step for a sample size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EbSchedule {
    pub target: EbTarget,
    pub u: f64,
    pub w: f64,
    pub n: usize,
    pub sigma2: f64,
    /// Kernel bandwidth `n^{-u}`.
    pub a: f64,
    /// Half-width `sigma^2 sqrt(w ln n) / 3` of the evaluation range.
    pub t_n: f64,
    /// Sup-error level of the mean estimate assumed by the cumulant step.
    pub eps_n: Option<f64>,
    /// Lanczos step `eps_n^{1/(k+2)}`.
    pub h: Option<f64>,
}

impl EbSchedule {
    /// Admissible schedule: `u < 1/(2k+4)` (moments) or `u < 1/8` (cumulants),
    /// `0 < w < u`, and for cumulants `h <= t_n / 2`.
    pub fn new(target: EbTarget, u: f64, w: f64, n: usize, sigma2: f64) -> Result<Self> {
        let s = Self::pre_asymptotic(target, u, w, n, sigma2)?;
        if let Some(h) = s.h {
            if h > 0.5 * s.t_n {
                return Err(CmeError::Domain(format!(
                    "schedule not admitted at n={n}: h={h} exceeds t_n/2={}",
                    0.5 * s.t_n
                )));
            }
        }
        Ok(s)
    }

    /// Same parameters without the `h <= t_n / 2` admission check, for
    /// sample sizes below the asymptotic regime.
    pub fn pre_asymptotic(target: EbTarget, u: f64, w: f64, n: usize, sigma2: f64) -> Result<Self> {
        let k = target.order();
        if k == 0 {
            return Err(CmeError::Argument("schedule order must be >= 1".into()));
        }
        let u_max = match target {
            EbTarget::Moment(k) => 1.0 / (2 * k + 4) as f64,
            EbTarget::Cumulant(_) => 1.0 / 8.0,
        };
        if !(u > 0.0 && u < u_max) {
            return Err(CmeError::Argument(format!(
                "u={u} must lie in (0, {u_max})"
            )));
        }
        if !(w > 0.0 && w < u) {
            return Err(CmeError::Argument(format!("w={w} must lie in (0, u={u})")));
        }
        if n < 2 {
            return Err(CmeError::Argument("sample size must be >= 2".into()));
        }
        if !(sigma2 > 0.0) || !sigma2.is_finite() {
            return Err(CmeError::Argument(format!(
                "noise variance must be > 0, got {sigma2}"
            )));
        }
        let nf = n as f64;
        let a = nf.powf(-u);
        let t_n = sigma2 * (w * nf.ln()).sqrt() / 3.0;
        let (eps_n, h) = match target {
            EbTarget::Moment(_) => (None, None),
            EbTarget::Cumulant(k) => {
                // the cumulant step differentiates the first-moment estimate,
                // whose density derivatives run over m = 0, 1
                let delta = (0..=1usize)
                    .map(|m| {
                        (4.0 * factorial(m + 1) / (3.0 * PI * sigma2.powi(m as i32 + 1))).sqrt()
                    })
                    .fold(0.0f64, f64::max);
                let eps = 2.0 * a * delta;
                (Some(eps), Some(eps.powf(1.0 / (k as f64 + 2.0))))
            }
        };
        Ok(EbSchedule {
            target,
            u,
            w,
            n,
            sigma2,
            a,
            t_n,
            eps_n,
            h,
        })
    }

    /// Half-width of the grid on which errors are measured: `t_n` for
    /// moments, `t_n / 2` for cumulants.
    pub fn error_range(&self) -> f64 {
        match self.target {
            EbTarget::Moment(_) => self.t_n,
            EbTarget::Cumulant(_) => 0.5 * self.t_n,
        }
    }
}

/// Settings of [`consistency_experiment`].
#[derive(Debug, Clone)]
pub struct ConsistencyConfig {
    pub prior: Prior,
    pub sigma2: f64,
    pub target: EbTarget,
    pub n_list: Vec<usize>,
    pub seeds: Vec<u64>,
    pub u: f64,
    pub w: f64,
    pub grid_points: usize,
    /// Run cumulant schedules that fail the `h <= t_n / 2` admission check.
    pub pre_asymptotic: bool,
}

/// One `(n, seed)` run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsistencyRow {
    pub n: usize,
    pub seed: u64,
    pub k: usize,
    pub sup_error: f64,
    pub t_n: f64,
    pub a: f64,
    /// Lanczos step; NaN for moment targets.
    pub h: f64,
}

/// Median and quartiles of the sup-error over seeds at one `n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsistencySummary {
    pub n: usize,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let j = (i + 1).min(sorted.len() - 1);
    sorted[i] + (pos - i as f64) * (sorted[j] - sorted[i])
}

/// Uniform grid of `points` values over `[-r, r]`.
pub fn symmetric_grid(r: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![0.0];
    }
    (0..points)
        .map(|i| -r + 2.0 * r * i as f64 / (points - 1) as f64)
        .collect()
}

/// Sup-error of the estimator over the schedule's grid for each `(n, seed)`;
/// seeds run in parallel, each `n` on its own random stream.
pub fn consistency_experiment(cfg: &ConsistencyConfig) -> Result<Vec<ConsistencyRow>> {
    if cfg.n_list.is_empty() || cfg.seeds.is_empty() || cfg.grid_points == 0 {
        return Err(CmeError::Argument("empty n list, seed list or grid".into()));
    }
    let ch = ScalarChannel::new(cfg.prior.clone(), cfg.sigma2)?;
    let k = cfg.target.order();
    let mut rows = Vec::new();
    for &n in &cfg.n_list {
        let sched = if cfg.pre_asymptotic {
            EbSchedule::pre_asymptotic(cfg.target, cfg.u, cfg.w, n, cfg.sigma2)?
        } else {
            EbSchedule::new(cfg.target, cfg.u, cfg.w, n, cfg.sigma2)?
        };
        let grid = symmetric_grid(sched.error_range(), cfg.grid_points);
        let truth = grid
            .iter()
            .map(|&y| match cfg.target {
                EbTarget::Moment(k) => moment_via_generalized_tre(&ch, k, y),
                EbTarget::Cumulant(k) => conditional_cumulant(&ch, k + 1, y),
            })
            .collect::<Result<Vec<f64>>>()?;
        let op = match sched.h {
            Some(h) => Some(LanczosOperator::new(k, h)?),
            None => None,
        };
        let mut batch = cfg
            .seeds
            .par_iter()
            .map(|&seed| {
                let samples = SampleSet::draw_stream(&cfg.prior, cfg.sigma2, n, seed, n as u64)?;
                let model = KdeModel::new(samples, sched.a)?;
                let mut sup = 0.0f64;
                for (&y, &t) in grid.iter().zip(&truth) {
                    let est = match &op {
                        None => eb_conditional_moment(&model, k, y)?,
                        Some(op) => eb_conditional_cumulant(&model, op, y)?,
                    };
                    sup = sup.max((est - t).abs());
                }
                Ok(ConsistencyRow {
                    n,
                    seed,
                    k,
                    sup_error: sup,
                    t_n: sched.t_n,
                    a: sched.a,
                    h: sched.h.unwrap_or(f64::NAN),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.append(&mut batch);
    }
    Ok(rows)
}

/// Per-`n` summaries in the order the sizes first appear.
pub fn summarize(rows: &[ConsistencyRow]) -> Vec<ConsistencySummary> {
    let mut ns: Vec<usize> = Vec::new();
    for r in rows {
        if !ns.contains(&r.n) {
            ns.push(r.n);
        }
    }
    ns.into_iter()
        .map(|n| {
            let mut e: Vec<f64> = rows
                .iter()
                .filter(|r| r.n == n)
                .map(|r| r.sup_error)
                .collect();
            e.sort_by(f64::total_cmp);
            ConsistencySummary {
                n,
                median: quantile(&e, 0.5),
                q25: quantile(&e, 0.25),
                q75: quantile(&e, 0.75),
            }
        })
        .collect()
}

/// Least-squares slope of `ln(err)` against `ln(n)`.
pub fn loglog_slope(points: &[(usize, f64)]) -> f64 {
    let xs: Vec<f64> = points.iter().map(|p| (p.0 as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let m = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / m, ys.iter().sum::<f64>() / m);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

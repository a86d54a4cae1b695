//! `cme`: CSV artifacts and identity-check batteries for the conditional-mean
//! library.

mod args;
mod battery;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use cme_core::analytic::CeInverter;
use cme_core::distributions::{ErrorLaw, Estimator, EstimatorDistribution, EstimatorLaw};
use cme_core::empirical_bayes::{consistency_experiment, summarize, ConsistencyConfig, EbTarget};
use cme_core::identities::{conditional_cumulants, moment_via_bell, tre_mean};
use cme_core::lanczos::{lanczos_conditional_mean, LanczosOperator};
use cme_core::mmse::mmse_curve;
use cme_core::multivar::{vector_battery, CheckResult};
use cme_core::prior_spec::read_prior_spec;
use cme_core::{CmeError, Prior, ScalarChannel};
use rayon::prelude::*;

use args::{Grid, Orders};
use output::{num, Csv};

/// Bad user input detected by the front-end itself.
#[derive(Debug)]
struct Invalid(String);

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

/// Battery or experiment ran but some check did not pass.
#[derive(Debug)]
struct ChecksFailed(usize);

impl std::fmt::Display for ChecksFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} check(s) failed", self.0)
    }
}

impl std::error::Error for ChecksFailed {}

fn invalid(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(Invalid(msg.into()))
}

#[derive(Parser, Debug)]
#[command(
    name = "cme",
    version,
    about = "Conditional-mean identities in Gaussian noise: CSV artifacts and checks"
)]
struct Cli {
    /// Cap on worker threads.
    #[arg(long, env = "CME_THREADS", global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct PriorArgs {
    /// Prior specification file (TOML).
    #[arg(long)]
    prior: Option<PathBuf>,

    /// Noise variance; overrides `sigma2` in the prior file (default 1).
    #[arg(long, allow_hyphen_values = true)]
    sigma2: Option<f64>,
}

#[derive(Args, Debug, Clone)]
struct OutArgs {
    /// Output CSV path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct EbArgs {
    #[command(flatten)]
    prior: PriorArgs,
    /// Sample size; repeat for several sizes.
    #[arg(long = "n", default_values_t = vec![1000usize, 10000, 100000])]
    n: Vec<usize>,
    /// Number of independent seeds.
    #[arg(long, default_value_t = 20)]
    seeds: u64,
    /// First seed; runs use `seed..seed+seeds`.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Schedule exponent of the KDE bandwidth `n^-u`.
    #[arg(long, default_value_t = 0.1)]
    u: f64,
    /// Schedule constant of the evaluation range.
    #[arg(long, default_value_t = 0.05)]
    w: f64,
    /// Evaluation points across the error range.
    #[arg(long, default_value_t = 21)]
    points: usize,
    /// Order of the estimated moment or cumulant.
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum CheckTarget {
    Identities,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Conditional moments E[X^k | Y = y] on a grid of y.
    Moments {
        #[command(flatten)]
        prior: PriorArgs,
        #[arg(long, default_value = "1..4")]
        k: Orders,
        #[arg(long, default_value = "-5:5:201", allow_hyphen_values = true)]
        grid: Grid,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Conditional cumulants on a grid of y.
    Cumulants {
        #[command(flatten)]
        prior: PriorArgs,
        #[arg(long, default_value = "1..4")]
        k: Orders,
        #[arg(long, default_value = "-5:5:201", allow_hyphen_values = true)]
        grid: Grid,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Inverse of the conditional mean on a grid of estimator values.
    Inverse {
        #[command(flatten)]
        prior: PriorArgs,
        /// Estimator values; defaults to interior points of the estimator range.
        #[arg(long, allow_hyphen_values = true)]
        grid: Option<Grid>,
        #[arg(long, default_value_t = 201)]
        points: usize,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Law of the conditional-mean estimator: columns x,pdf,cdf.
    PdfCe {
        #[command(flatten)]
        prior: PriorArgs,
        /// Evaluation points; defaults to interior points of the estimator range.
        #[arg(long, allow_hyphen_values = true)]
        grid: Option<Grid>,
        #[arg(long, default_value_t = 201)]
        points: usize,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Law of the estimation error W = g(Y) - X: columns w,pdf.
    PdfError {
        #[command(flatten)]
        prior: PriorArgs,
        /// `matched`, `linear:SLOPE,INTERCEPT` or `mismatched:PRIOR.toml`.
        #[arg(long, default_value = "matched")]
        estimator: String,
        /// Error values; defaults to interior points of the error support.
        #[arg(long, allow_hyphen_values = true)]
        grid: Option<Grid>,
        #[arg(long, default_value_t = 201)]
        points: usize,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Exact MMSE and its lower bound over noise levels: columns sigma2,mmse,lower_bound.
    Mmse {
        #[arg(long)]
        prior: PathBuf,
        /// Geometric noise-variance grid `lo:hi:points`.
        #[arg(long, default_value = "0.01:100:41")]
        sigma2_grid: Grid,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Empirical-Bayes conditional-moment consistency experiment.
    EbMoments(EbArgs),
    /// Empirical-Bayes conditional-cumulant consistency experiment.
    EbCumulants {
        #[command(flatten)]
        eb: EbArgs,
        /// Run schedules that fail the bandwidth admission check.
        #[arg(long)]
        pre_asymptotic: bool,
    },
    /// Lanczos approximation of the conditional mean for several steps.
    LanczosDemo {
        #[command(flatten)]
        prior: PriorArgs,
        /// Lanczos step; repeat for several curves.
        #[arg(long = "h", default_values_t = vec![0.1f64, 0.5])]
        h: Vec<f64>,
        #[arg(long, default_value = "-5:5:201", allow_hyphen_values = true)]
        grid: Grid,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Vector identity battery: columns name,residual,tol,passed.
    VectorCheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Random evaluation points per prior.
        #[arg(long, default_value_t = 4)]
        points: usize,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Identity batteries with a residual table; exit 0 iff all pass.
    Check {
        target: CheckTarget,
        /// Include the vector battery.
        #[arg(long)]
        all: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

struct Header(Vec<(String, String)>);

impl Header {
    fn new(cmd: &str) -> Self {
        Header(vec![
            ("command".into(), cmd.into()),
            ("version".into(), env!("CARGO_PKG_VERSION").into()),
        ])
    }

    fn add(&mut self, k: &str, v: impl ToString) -> &mut Self {
        self.0.push((k.into(), v.to_string()));
        self
    }
}

fn describe(prior: &Prior) -> String {
    let list = |v: &[f64]| {
        v.iter()
            .map(|x| x.to_string())
            .collect::<Vec<_>>()
            .join(" ")
    };
    match prior {
        Prior::DiscreteAtoms { points, probs } => {
            format!("atoms points=[{}] probs=[{}]", list(points), list(probs))
        }
        Prior::Gaussian { mean, variance } => format!("gaussian mean={mean} variance={variance}"),
        Prior::TwoPoint { p } => format!("two-point p={p}"),
        Prior::SphereUniform { radius, dim } => format!("sphere radius={radius} dim={dim}"),
    }
}

fn check_sigma2(s: f64) -> Result<f64> {
    if s > 0.0 && s.is_finite() {
        Ok(s)
    } else {
        Err(invalid(format!("sigma2 must be finite and > 0, got {s}")))
    }
}

/// Loads the prior, falling back to `default` when no file is given.
fn channel(args: &PriorArgs, default: Option<Prior>, h: &mut Header) -> Result<ScalarChannel> {
    let (prior, file_s2) = match (&args.prior, default) {
        (Some(path), _) => {
            let spec = read_prior_spec(path)?;
            h.add("prior_file", path.display());
            (spec.prior, spec.sigma2)
        }
        (None, Some(p)) => (p, None),
        (None, None) => return Err(invalid("--prior is required")),
    };
    let s2 = check_sigma2(args.sigma2.or(file_s2).unwrap_or(1.0))?;
    h.add("prior", describe(&prior)).add("sigma2", s2);
    Ok(ScalarChannel::new(prior, s2)?)
}

fn check_points(points: usize) -> Result<()> {
    if points < 2 {
        return Err(invalid(format!("--points must be >= 2, got {points}")));
    }
    Ok(())
}

fn interior(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    (1..=points)
        .map(|i| lo + (hi - lo) * i as f64 / (points + 1) as f64)
        .collect()
}

fn run_moments(
    prior: &PriorArgs,
    k: Orders,
    grid: Grid,
    out: &OutArgs,
    cumulants: bool,
) -> Result<()> {
    let name = if cumulants { "cumulants" } else { "moments" };
    let mut h = Header::new(name);
    let ch = channel(prior, None, &mut h)?;
    h.add("k", k).add("grid", grid);
    let max = cme_core::channel::MAX_DERIVATIVE_ORDER;
    if k.last > max {
        return Err(invalid(format!(
            "order {} exceeds the maximum {max}",
            k.last
        )));
    }
    let prefix = if cumulants { "kappa" } else { "m" };
    let names: Vec<String> = k.iter().map(|j| format!("{prefix}{j}")).collect();
    let mut cols = vec!["y"];
    cols.extend(names.iter().map(String::as_str));
    let rows = grid
        .values()
        .par_iter()
        .map(|&y| -> cme_core::Result<Vec<f64>> {
            let mut row = vec![y];
            if cumulants {
                let c = conditional_cumulants(&ch, y, k.last)?;
                row.extend(k.iter().map(|j| c.values[j - 1]));
            } else {
                for j in k.iter() {
                    row.push(moment_via_bell(&ch, j, y)?);
                }
            }
            Ok(row)
        })
        .collect::<cme_core::Result<Vec<_>>>()?;
    let mut csv = Csv::new(&h.0, &cols);
    for r in rows {
        csv.row(&r.into_iter().map(num).collect::<Vec<_>>());
    }
    csv.emit(out.out.as_deref())
}

fn run_inverse(prior: &PriorArgs, grid: Option<Grid>, points: usize, out: &OutArgs) -> Result<()> {
    let mut h = Header::new("inverse");
    let ch = channel(prior, None, &mut h)?;
    let inv = CeInverter::new(&ch);
    let xs = match grid {
        Some(g) => {
            h.add("grid", g);
            g.values()
        }
        None => {
            check_points(points)?;
            let (lo, hi) = EstimatorDistribution::new(&ch)?.range();
            h.add("points", points)
                .add("range", format!("{}:{}", num(lo), num(hi)));
            interior(lo, hi, points)
        }
    };
    let rows = xs
        .par_iter()
        .map(|&x| -> cme_core::Result<[f64; 3]> {
            let y = inv.solve(x, 1e-12)?;
            Ok([x, y, tre_mean(&ch, y)? - x])
        })
        .collect::<cme_core::Result<Vec<_>>>()?;
    let mut csv = Csv::new(&h.0, &["x", "y", "residual"]);
    for r in rows {
        csv.row(&r.map(num));
    }
    csv.emit(out.out.as_deref())
}

fn run_pdf_ce(prior: &PriorArgs, grid: Option<Grid>, points: usize, out: &OutArgs) -> Result<()> {
    let mut h = Header::new("pdf-ce");
    let ch = channel(prior, None, &mut h)?;
    let law = match grid {
        Some(g) => {
            h.add("grid", g);
            let d = EstimatorDistribution::new(&ch)?;
            let x = g.values();
            let pc = x
                .par_iter()
                .map(|&v| Ok((d.pdf(v)?, d.cdf(v)?)))
                .collect::<cme_core::Result<Vec<_>>>()?;
            let (pdf, cdf) = pc.into_iter().unzip();
            EstimatorLaw { x, pdf, cdf }
        }
        None => {
            check_points(points)?;
            h.add("points", points);
            EstimatorLaw::on_grid(&ch, points)?
        }
    };
    let mut csv = Csv::new(&h.0, &["x", "pdf", "cdf"]);
    for i in 0..law.x.len() {
        csv.row(&[num(law.x[i]), num(law.pdf[i]), num(law.cdf[i])]);
    }
    csv.emit(out.out.as_deref())
}

fn parse_estimator(spec: &str, sigma2: f64) -> Result<Estimator> {
    if spec == "matched" {
        return Ok(Estimator::Matched);
    }
    if let Some(rest) = spec.strip_prefix("linear:") {
        let parts: Vec<&str> = rest.split(',').collect();
        let [s, c] = parts.as_slice() else {
            return Err(invalid(format!(
                "linear estimator '{spec}' is not linear:SLOPE,INTERCEPT"
            )));
        };
        let parse = |t: &str| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| invalid(format!("bad number '{t}' in estimator")))
        };
        return Ok(Estimator::Linear {
            slope: parse(s)?,
            intercept: parse(c)?,
        });
    }
    if let Some(path) = spec.strip_prefix("mismatched:") {
        let other = read_prior_spec(Path::new(path))?;
        return Ok(Estimator::Mismatched(ScalarChannel::new(
            other.prior,
            sigma2,
        )?));
    }
    Err(invalid(format!(
        "unknown estimator '{spec}' (expected matched, linear:SLOPE,INTERCEPT or mismatched:FILE)"
    )))
}

fn run_pdf_error(
    prior: &PriorArgs,
    est: &str,
    grid: Option<Grid>,
    points: usize,
    out: &OutArgs,
) -> Result<()> {
    let mut h = Header::new("pdf-error");
    let ch = channel(prior, None, &mut h)?;
    h.add("estimator", est);
    let g = parse_estimator(est, ch.sigma2())?;
    let law = ErrorLaw::new(&ch, &g)?;
    let ws = match grid {
        Some(g) => {
            h.add("grid", g);
            g.values()
        }
        None => {
            check_points(points)?;
            let (lo, hi) = if ch.is_discrete() {
                law.support()
            } else {
                let (m0, m1, m2) = law.moments()?;
                let mean = m1 / m0;
                let sd = (m2 / m0 - mean * mean).max(0.0).sqrt();
                (mean - 8.0 * sd, mean + 8.0 * sd)
            };
            h.add("points", points)
                .add("support", format!("{}:{}", num(lo), num(hi)));
            interior(lo, hi, points)
        }
    };
    let pdf = ws
        .par_iter()
        .map(|&w| law.pdf(w))
        .collect::<cme_core::Result<Vec<_>>>()?;
    let mut csv = Csv::new(&h.0, &["w", "pdf"]);
    for (w, p) in ws.iter().zip(pdf) {
        csv.row(&[num(*w), num(p)]);
    }
    csv.emit(out.out.as_deref())
}

fn run_mmse(prior: &Path, grid: Grid, out: &OutArgs) -> Result<()> {
    let mut h = Header::new("mmse");
    let spec = read_prior_spec(prior)?;
    if grid.lo <= 0.0 {
        return Err(invalid("noise-variance grid must be positive"));
    }
    h.add("prior_file", prior.display())
        .add("prior", describe(&spec.prior))
        .add("sigma2_grid", grid)
        .add("spacing", "geometric");
    let rows = mmse_curve(&spec.prior, &grid.geometric())?;
    let mut csv = Csv::new(&h.0, &["sigma2", "mmse", "lower_bound"]);
    for (s, m, lb) in rows {
        csv.row(&[num(s), num(m), num(lb)]);
    }
    csv.emit(out.out.as_deref())
}

fn run_eb(eb: &EbArgs, cumulant: bool, pre_asymptotic: bool) -> Result<()> {
    let name = if cumulant {
        "eb-cumulants"
    } else {
        "eb-moments"
    };
    let mut h = Header::new(name);
    let ch = channel(&eb.prior, Some(Prior::two_point(0.5)?), &mut h)?;
    if eb.seeds == 0 {
        return Err(invalid("--seeds must be >= 1"));
    }
    if eb.points == 0 {
        return Err(invalid("--points must be >= 1"));
    }
    let target = if cumulant {
        EbTarget::Cumulant(eb.k)
    } else {
        EbTarget::Moment(eb.k)
    };
    let n_list: Vec<String> = eb.n.iter().map(|n| n.to_string()).collect();
    h.add("k", eb.k)
        .add("n", n_list.join(" "))
        .add("seed", eb.seed)
        .add("seeds", eb.seeds)
        .add("u", eb.u)
        .add("w", eb.w)
        .add("points", eb.points);
    if cumulant {
        h.add("pre_asymptotic", pre_asymptotic);
    }
    let cfg = ConsistencyConfig {
        prior: ch.prior().clone(),
        sigma2: ch.sigma2(),
        target,
        n_list: eb.n.clone(),
        seeds: (eb.seed..eb.seed + eb.seeds).collect(),
        u: eb.u,
        w: eb.w,
        grid_points: eb.points,
        pre_asymptotic,
    };
    let rows = consistency_experiment(&cfg)?;
    let mut csv = Csv::new(&h.0, &["n", "seed", "k", "sup_error", "t_n", "a", "h"]);
    for r in &rows {
        csv.row(&[
            r.n.to_string(),
            r.seed.to_string(),
            r.k.to_string(),
            num(r.sup_error),
            num(r.t_n),
            num(r.a),
            num(r.h),
        ]);
    }
    csv.emit(eb.out.out.as_deref())?;
    for s in summarize(&rows) {
        eprintln!(
            "n={} median={:.4e} q25={:.4e} q75={:.4e}",
            s.n, s.median, s.q25, s.q75
        );
    }
    Ok(())
}

fn run_lanczos(prior: &PriorArgs, steps: &[f64], grid: Grid, out: &OutArgs) -> Result<()> {
    let mut h = Header::new("lanczos-demo");
    let ch = channel(prior, Some(Prior::two_point(0.5)?), &mut h)?;
    let list: Vec<String> = steps.iter().map(|s| s.to_string()).collect();
    h.add("h", list.join(" ")).add("grid", grid);
    let ys = grid.values();
    let exact = ys
        .par_iter()
        .map(|&y| tre_mean(&ch, y))
        .collect::<cme_core::Result<Vec<_>>>()?;
    let mut csv = Csv::new(&h.0, &["y", "h", "exact", "approx", "abs_error"]);
    for &step in steps {
        let op = LanczosOperator::new(1, step)?;
        let approx: Vec<f64> = ys
            .par_iter()
            .map(|&y| lanczos_conditional_mean(&ch, &op, y))
            .collect();
        let mut worst = 0.0f64;
        for i in 0..ys.len() {
            let err = (approx[i] - exact[i]).abs();
            worst = worst.max(err);
            csv.row(&[
                num(ys[i]),
                num(step),
                num(exact[i]),
                num(approx[i]),
                num(err),
            ]);
        }
        eprintln!("h={step} max_abs_error={worst:.6e}");
    }
    csv.emit(out.out.as_deref())
}

fn emit_checks(results: &[CheckResult], header: &Header, out: Option<&Path>) -> Result<()> {
    let mut csv = Csv::new(&header.0, &["name", "residual", "tol", "passed"]);
    for r in results {
        csv.row(&[
            r.name.clone(),
            num(r.residual),
            num(r.tol),
            r.passed().to_string(),
        ]);
    }
    csv.emit(out)
}

fn failures(results: &[CheckResult]) -> Result<()> {
    let failed = results.iter().filter(|r| !r.passed()).count();
    if failed > 0 {
        return Err(anyhow::Error::new(ChecksFailed(failed)));
    }
    Ok(())
}

fn run_vector_check(seed: u64, points: usize, out: &OutArgs) -> Result<()> {
    if points == 0 {
        return Err(invalid("--points must be >= 1"));
    }
    let mut h = Header::new("vector-check");
    h.add("seed", seed).add("points", points);
    let results = vector_battery(seed, points)?;
    emit_checks(&results, &h, out.out.as_deref())?;
    failures(&results)
}

fn run_check(all: bool, seed: u64) -> Result<()> {
    let mut results = battery::scalar_battery()?;
    if all {
        results.extend(vector_battery(seed, 4)?);
    }
    let width = results
        .iter()
        .map(|r| r.name.len())
        .max()
        .unwrap_or(4)
        .max(4);
    println!(
        "{:<width$}  {:>12}  {:>9}  status",
        "name", "residual", "tol"
    );
    for r in &results {
        let status = if r.passed() { "PASS" } else { "FAIL" };
        println!(
            "{:<width$}  {:>12.3e}  {:>9.1e}  {status}",
            r.name, r.residual, r.tol
        );
    }
    let max = results.iter().map(|r| r.residual).fold(0.0f64, f64::max);
    let passed = results.iter().filter(|r| r.passed()).count();
    println!("max residual: {max:.3e}");
    println!("{passed} of {} checks passed", results.len());
    failures(&results)
}

fn run(cli: Cli) -> Result<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(invalid("thread count must be >= 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| anyhow!("cannot size thread pool: {e}"))?;
    }
    match &cli.command {
        Command::Moments {
            prior,
            k,
            grid,
            out,
        } => run_moments(prior, *k, *grid, out, false),
        Command::Cumulants {
            prior,
            k,
            grid,
            out,
        } => run_moments(prior, *k, *grid, out, true),
        Command::Inverse {
            prior,
            grid,
            points,
            out,
        } => run_inverse(prior, *grid, *points, out),
        Command::PdfCe {
            prior,
            grid,
            points,
            out,
        } => run_pdf_ce(prior, *grid, *points, out),
        Command::PdfError {
            prior,
            estimator,
            grid,
            points,
            out,
        } => run_pdf_error(prior, estimator, *grid, *points, out),
        Command::Mmse {
            prior,
            sigma2_grid,
            out,
        } => run_mmse(prior, *sigma2_grid, out),
        Command::EbMoments(eb) => run_eb(eb, false, false),
        Command::EbCumulants { eb, pre_asymptotic } => run_eb(eb, true, *pre_asymptotic),
        Command::LanczosDemo {
            prior,
            h,
            grid,
            out,
        } => run_lanczos(prior, h, *grid, out),
        Command::VectorCheck { seed, points, out } => run_vector_check(*seed, *points, out),
        Command::Check {
            target: CheckTarget::Identities,
            all,
            seed,
        } => run_check(*all, *seed),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<Invalid>().is_some() {
        return 2;
    }
    if let Some(e) = err.downcast_ref::<CmeError>() {
        return if e.is_validation() { 2 } else { 3 };
    }
    3
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

//! Gauss–Legendre, Gauss–Hermite and adaptive Gauss–Kronrod rules, plus the
//! composite Simpson and trapezoid rules used on sampled grids.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::error::{CmeError, Result};
use crate::polybasis::legendre_with_derivative;

/// Fixed Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Nodes by Newton iteration on `P_n` from the Chebyshev-like initial guess.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            for _ in 0..100 {
                let (p, dp) = legendre_with_derivative(n, x);
                let dx = p / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, dp) = legendre_with_derivative(n, x);
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        GaussLegendre { nodes, weights }
    }

    /// Shared 64-node rule.
    pub fn n64() -> &'static GaussLegendre {
        static RULE: OnceLock<GaussLegendre> = OnceLock::new();
        RULE.get_or_init(|| GaussLegendre::new(64))
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (b + a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&t, &w)| w * f(mid + half * t))
            .sum::<f64>()
            * half
    }
}

/// Gauss–Hermite rule for the weight `exp(-x^2)`.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    /// Roots of the physicists' Hermite polynomial by Newton iteration on the
    /// orthonormal recurrence, with the classical asymptotic starting values.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Hermite rule needs at least one node");
        let nf = n as f64;
        let pim4 = PI.powf(-0.25);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        let mut z = 0.0f64;
        for i in 0..m {
            z = match i {
                0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
                1 => z - 1.14 * nf.powf(0.426) / z,
                2 => 1.86 * z - 0.86 * nodes[0],
                3 => 1.91 * z - 0.91 * nodes[1],
                _ => 2.0 * z - nodes[i - 2],
            };
            let mut pp = 0.0;
            for _ in 0..200 {
                let mut p1 = pim4;
                let mut p2 = 0.0;
                for j in 1..=n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
                }
                pp = (2.0 * nf).sqrt() * p2;
                let dz = p1 / pp;
                z -= dz;
                if dz.abs() < 1e-15 * (1.0 + z.abs()) {
                    break;
                }
            }
            nodes[i] = z;
            weights[i] = 2.0 / (pp * pp);
        }
        // nodes[0..m] hold descending positive roots; mirror into ascending order
        let mut xs = vec![0.0; n];
        let mut ws = vec![0.0; n];
        for i in 0..m {
            xs[n - 1 - i] = nodes[i];
            xs[i] = -nodes[i];
            ws[n - 1 - i] = weights[i];
            ws[i] = weights[i];
        }
        GaussHermite {
            nodes: xs,
            weights: ws,
        }
    }

    /// Shared 64-node rule.
    pub fn n64() -> &'static GaussHermite {
        static RULE: OnceLock<GaussHermite> = OnceLock::new();
        RULE.get_or_init(|| GaussHermite::new(64))
    }

    /// `E[f(Z)]` for `Z ~ N(mean, var)`.
    pub fn expect_normal<F: FnMut(f64) -> f64>(&self, mean: f64, var: f64, mut f: F) -> f64 {
        let s = (2.0 * var).sqrt();
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(mean + s * x))
            .sum::<f64>()
            / PI.sqrt()
    }
}

// Gauss–Kronrod 7/15 abscissae and weights (symmetric half, descending).
#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.000_000_000_000_000_000_000_000_000_000_000,
];
#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Tolerances and limits for [`integrate_adaptive`].
#[derive(Debug, Clone, Copy)]
pub struct AdaptiveSpec {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for AdaptiveSpec {
    fn default() -> Self {
        AdaptiveSpec {
            abs_tol: 1e-10,
            rel_tol: 1e-12,
            max_intervals: 4000,
        }
    }
}

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Adaptive Gauss–Kronrod (7/15) integration over `[a, b]`, starting from
/// the given interior breakpoints. Returns the estimate or a numeric error
/// carrying the achieved error bound.
pub fn integrate_adaptive<F: FnMut(f64) -> f64>(
    mut f: F,
    breakpoints: &[f64],
    spec: AdaptiveSpec,
) -> Result<f64> {
    if breakpoints.len() < 2 {
        return Err(CmeError::Argument(
            "adaptive quadrature needs at least two breakpoints".into(),
        ));
    }
    let mut pieces: Vec<(f64, f64, f64, f64)> = Vec::new();
    for w in breakpoints.windows(2) {
        if w[1] > w[0] {
            let (v, e) = gk15(&mut f, w[0], w[1]);
            pieces.push((w[0], w[1], v, e));
        }
    }
    loop {
        let total: f64 = pieces.iter().map(|p| p.2).sum();
        let err: f64 = pieces.iter().map(|p| p.3).sum();
        let target = spec.abs_tol.max(spec.rel_tol * total.abs());
        if err <= target {
            return Ok(total);
        }
        if pieces.len() >= spec.max_intervals {
            return Err(CmeError::numeric(
                "adaptive quadrature hit the interval limit",
                err,
            ));
        }
        let (idx, _) = pieces
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("non-empty");
        let (a, b, _, _) = pieces.swap_remove(idx);
        let m = 0.5 * (a + b);
        if !(m > a && m < b) {
            return Err(CmeError::numeric(
                "adaptive quadrature interval underflow",
                err,
            ));
        }
        let (v1, e1) = gk15(&mut f, a, m);
        let (v2, e2) = gk15(&mut f, m, b);
        pieces.push((a, m, v1, e1));
        pieces.push((m, b, v2, e2));
    }
}

/// Uniform breakpoints covering `[lo, hi]` with pieces no wider than `width`,
/// plus the extra points in `extra` that fall inside.
pub fn breakpoints(lo: f64, hi: f64, width: f64, extra: &[f64]) -> Vec<f64> {
    let n = ((hi - lo) / width).ceil().max(1.0) as usize;
    let mut pts: Vec<f64> = (0..=n)
        .map(|i| lo + (hi - lo) * i as f64 / n as f64)
        .collect();
    pts.extend(extra.iter().copied().filter(|&x| x > lo && x < hi));
    pts.sort_by(|a, b| a.total_cmp(b));
    pts.dedup_by(|a, b| (*a - *b).abs() < 1e-14 * (1.0 + b.abs()));
    pts
}

/// Composite trapezoid rule on sampled values over an arbitrary grid.
pub fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    xs.windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .sum()
}

/// Running integral of `f` from `xs[0]` to each grid point, each cell done by
/// Simpson's rule with a midpoint evaluation.
pub fn cumulative_simpson<F: FnMut(f64) -> f64>(xs: &[f64], mut f: F) -> Vec<f64> {
    let mut out = Vec::with_capacity(xs.len());
    if xs.is_empty() {
        return out;
    }
    out.push(0.0);
    let mut prev = f(xs[0]);
    let mut acc = 0.0;
    for w in xs.windows(2) {
        let mid = f(0.5 * (w[0] + w[1]));
        let right = f(w[1]);
        acc += (w[1] - w[0]) / 6.0 * (prev + 4.0 * mid + right);
        out.push(acc);
        prev = right;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_rule_is_exact_for_polynomials() {
        let rule = GaussLegendre::new(64);
        let total: f64 = rule.weights.iter().sum();
        assert!((total - 2.0).abs() < 1e-14);
        for d in 0..=127usize {
            let v = rule.integrate(-1.0, 1.0, |t| t.powi(d as i32));
            let exact = if d % 2 == 1 {
                0.0
            } else {
                2.0 / (d as f64 + 1.0)
            };
            assert!((v - exact).abs() < 1e-14, "degree {d}");
        }
    }

    #[test]
    fn hermite_rule_moments() {
        let rule = GaussHermite::n64();
        let sum: f64 = rule.weights.iter().sum();
        assert!((sum - PI.sqrt()).abs() < 1e-13);
        // standard normal moments 1, 0, 1, 0, 3, 0, 15
        let want = [1.0, 0.0, 1.0, 0.0, 3.0, 0.0, 15.0, 0.0, 105.0];
        for (k, w) in want.iter().enumerate() {
            let v = rule.expect_normal(0.0, 1.0, |z| z.powi(k as i32));
            assert!((v - w).abs() < 1e-11 * (1.0 + w), "moment {k}: {v}");
        }
        for w in rule.nodes.windows(2) {
            assert!(w[1] > w[0]);
        }
    }

    #[test]
    fn adaptive_handles_peaks() {
        let v = integrate_adaptive(
            |x| (-(x * x) / (2.0 * 1e-4)).exp(),
            &[-1.0, 0.3, 1.0],
            AdaptiveSpec::default(),
        )
        .unwrap();
        assert!((v - (2.0 * PI * 1e-4).sqrt()).abs() < 1e-10);
    }

    #[test]
    fn simpson_and_trapezoid() {
        let xs: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
        let cum = cumulative_simpson(&xs, |x| x * x * x);
        assert!((cum[100] - 0.25).abs() < 1e-14);
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x).collect();
        assert!((trapezoid(&xs, &ys) - 1.0).abs() < 1e-14);
    }
}

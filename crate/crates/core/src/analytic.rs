//! Taylor series of the conditional mean, its compositional inverse by
//! Lagrange inversion, and a safeguarded root-finder for `E[X|Y=y] = x`.

use std::f64::consts::E;

use crate::channel::ScalarChannel;
use crate::error::{CmeError, Result};
use crate::identities::{ce_derivatives, conditional_cumulants, tre_mean};
use crate::polybasis::{bell_partial, factorial, rising_factorial};

/// Most terms used by the adaptive truncation of the inverse series.
pub const MAX_SERIES_TERMS: usize = 12;
/// Round-trip error accepted by the adaptive truncation.
pub const TRUNCATION_TOL: f64 = 1e-4;

/// Truncated Taylor series `sum_k coeffs[k] (y - center)^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSeries {
    pub center: f64,
    pub coeffs: Vec<f64>,
    pub radius_lower_bound: Option<f64>,
}

impl PowerSeries {
    pub fn eval(&self, y: f64) -> f64 {
        let d = y - self.center;
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * d + c)
    }

    /// Number of terms beyond the constant.
    pub fn order(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }
}

/// Series of `y -> E[X | Y = y]` about `a` with `terms` coefficients beyond
/// the constant: coefficient `k` is `kappa(k+1) / (k! sigma^{2k})`.
pub fn ce_series(ch: &ScalarChannel, a: f64, terms: usize) -> Result<PowerSeries> {
    if terms > MAX_SERIES_TERMS {
        return Err(CmeError::Capability(format!(
            "series order {terms} exceeds {MAX_SERIES_TERMS}"
        )));
    }
    let kap = conditional_cumulants(ch, a, terms + 1)?.values;
    let s2 = ch.sigma2();
    let coeffs = (0..=terms)
        .map(|k| kap[k] / (factorial(k) * s2.powi(k as i32)))
        .collect();
    let radius_lower_bound = ch
        .prior()
        .support_radius()
        .filter(|r| *r > 0.0)
        .map(|r| s2 / (2.0 * r * E));
    Ok(PowerSeries {
        center: a,
        coeffs,
        radius_lower_bound,
    })
}

/// Inverse series `x -> a + sum_k b_k (x - m_a)^k / k!`.
#[derive(Debug, Clone, PartialEq)]
pub struct InverseSeries {
    pub anchor: f64,
    pub value: f64,
    /// `b[k-1]` is `b_k` in the factorial-normalised convention.
    pub b: Vec<f64>,
}

impl InverseSeries {
    /// Taylor coefficients `b_k / k!`.
    pub fn taylor(&self) -> Vec<f64> {
        self.b
            .iter()
            .enumerate()
            .map(|(i, b)| b / factorial(i + 1))
            .collect()
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.eval_truncated(x, self.b.len())
    }

    /// Partial sum with the first `terms` coefficients.
    pub fn eval_truncated(&self, x: f64, terms: usize) -> f64 {
        let d = x - self.value;
        let t = self.taylor();
        let s = t[..terms.min(t.len())]
            .iter()
            .rev()
            .fold(0.0, |acc, c| acc * d + c);
        self.anchor + d * s
    }

    /// Convergence radius estimated from the last two non-zero Taylor
    /// coefficients; infinite when the series terminates.
    pub fn empirical_radius(&self) -> f64 {
        let t = self.taylor();
        let scale = t.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        let nz: Vec<(usize, f64)> = t
            .iter()
            .enumerate()
            .filter(|(_, c)| c.abs() > 1e-12 * scale)
            .map(|(i, c)| (i + 1, c.abs()))
            .collect();
        // a series whose tail vanishes is treated as a polynomial
        if nz.len() < 2 || nz[nz.len() - 1].0 + 2 < t.len() {
            return f64::INFINITY;
        }
        let (i, ci) = nz[nz.len() - 2];
        let (j, cj) = nz[nz.len() - 1];
        (ci / cj).powf(1.0 / (j - i) as f64)
    }

    /// Distance from `m_a` inside which the truncation error is estimated to
    /// stay below `tol`: half the empirical radius, reduced until the last
    /// non-zero retained term falls under `tol / 2`.
    pub fn trust_radius(&self, tol: f64) -> f64 {
        let rho = self.empirical_radius();
        let t = self.taylor();
        let tail = t
            .iter()
            .enumerate()
            .rev()
            .find(|(_, c)| **c != 0.0)
            .map(|(i, c)| (tol / (2.0 * c.abs())).powf(1.0 / (i + 1) as f64))
            .unwrap_or(f64::INFINITY);
        (0.5 * rho).min(tail)
    }
}

/// Lagrange inversion of a series with non-zero linear term:
/// `b_1 = 1/a_1`, `b_n = b_1^n sum_{k=1}^{n-1} (-1)^k n^{(k)} B_{n-1,k}(c_1, ...)`
/// with `a_k = k! coeffs[k]` and `c_j = a_{j+1} / ((j+1) a_1)`.
pub fn lagrange_invert(s: &PowerSeries) -> Result<InverseSeries> {
    let order = s.order();
    if order == 0 {
        return Err(CmeError::Argument("series has no linear term".into()));
    }
    let a: Vec<f64> = (0..=order).map(|k| factorial(k) * s.coeffs[k]).collect();
    if a[1] == 0.0 || !a[1].is_finite() {
        return Err(CmeError::Domain(
            "vanishing linear coefficient: the series has no inverse".into(),
        ));
    }
    let c: Vec<f64> = (1..order)
        .map(|j| a[j + 1] / ((j + 1) as f64 * a[1]))
        .collect();
    let b1 = 1.0 / a[1];
    let mut b = vec![b1];
    for n in 2..=order {
        let mut acc = 0.0;
        for k in 1..n {
            let sign = if k % 2 == 1 { -1.0 } else { 1.0 };
            acc += sign * rising_factorial(n as f64, k) * bell_partial(n - 1, k, &c)?;
        }
        b.push(b1.powi(n as i32) * acc);
    }
    Ok(InverseSeries {
        anchor: s.center,
        value: s.coeffs[0],
        b,
    })
}

/// Inverts `y -> E[X | Y = y]` by safeguarded Newton/bisection, seeded by
/// the inverse series at an anchor when the target lies in its trust region.
#[derive(Debug, Clone)]
pub struct CeInverter {
    ch: ScalarChannel,
    series: Option<(InverseSeries, f64)>,
    range: (f64, f64),
}

impl CeInverter {
    /// Anchors the initial series at `y = E[Y]`.
    pub fn new(ch: &ScalarChannel) -> Self {
        let anchor = ch.y_mean();
        let series = ce_series(ch, anchor, MAX_SERIES_TERMS)
            .and_then(|s| lagrange_invert(&s))
            .ok()
            .map(|inv| {
                let r = inv.trust_radius(TRUNCATION_TOL);
                (inv, r)
            });
        let range = match ch.atoms() {
            Some((x, _)) => (
                x.iter().copied().fold(f64::INFINITY, f64::min),
                x.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            ),
            None => (f64::NEG_INFINITY, f64::INFINITY),
        };
        CeInverter {
            ch: ch.clone(),
            series,
            range,
        }
    }

    pub fn channel(&self) -> &ScalarChannel {
        &self.ch
    }

    /// Open interval of values taken by the conditional mean.
    pub fn range(&self) -> (f64, f64) {
        self.range
    }

    /// Series answer with the smallest number of terms whose round-trip error
    /// is at most [`TRUNCATION_TOL`]; `None` outside the trust region or when
    /// no truncation qualifies.
    pub fn series_estimate(&self, x: f64) -> Option<(f64, usize)> {
        let (inv, r) = self.series.as_ref()?;
        if (x - inv.value).abs() > *r {
            return None;
        }
        for k in 1..=inv.b.len() {
            let y = inv.eval_truncated(x, k);
            if let Ok(m) = tre_mean(&self.ch, y) {
                if (m - x).abs() <= TRUNCATION_TOL {
                    return Some((y, k));
                }
            }
        }
        None
    }

    /// The `y` with `E[X | Y = y] = x`, to `|E[X|Y=y] - x| <= tol`.
    pub fn solve(&self, x: f64, tol: f64) -> Result<f64> {
        let (lo_x, hi_x) = self.range;
        if !(x > lo_x && x < hi_x) || !x.is_finite() {
            return Err(CmeError::Range(format!(
                "{x} is outside the range ({lo_x}, {hi_x}) of the conditional mean"
            )));
        }
        if lo_x == hi_x {
            return Err(CmeError::Range("conditional mean is constant".into()));
        }
        let g = |y: f64| tre_mean(&self.ch, y).map(|m| m - x);
        let y0 = self
            .series_estimate(x)
            .map(|(y, _)| y)
            .unwrap_or_else(|| self.ch.y_mean());
        let g0 = g(y0)?;
        if g0 == 0.0 {
            return Ok(y0);
        }
        // bracket the root by geometric expansion away from y0
        let mut step = 0.1 * self.ch.y_sd();
        let (mut lo, mut hi) = (y0, y0);
        let (mut glo, mut ghi) = (g0, g0);
        let limit = self.ch.y_mean().abs() + 1e4 * self.ch.y_sd();
        if g0 > 0.0 {
            while glo > 0.0 {
                hi = lo;
                ghi = glo;
                lo -= step;
                step *= 2.0;
                if lo < -limit {
                    return Err(CmeError::Range(format!("no preimage found for {x}")));
                }
                glo = g(lo)?;
            }
        } else {
            while ghi < 0.0 {
                lo = hi;
                glo = ghi;
                hi += step;
                step *= 2.0;
                if hi > limit {
                    return Err(CmeError::Range(format!("no preimage found for {x}")));
                }
                ghi = g(hi)?;
            }
        }
        if glo == 0.0 {
            return Ok(lo);
        }
        if ghi == 0.0 {
            return Ok(hi);
        }
        let mut y = if g0 < 0.0 { lo } else { hi };
        for _ in 0..200 {
            let gy = g(y)?;
            if gy.abs() <= tol {
                return Ok(y);
            }
            if gy < 0.0 {
                lo = y;
            } else {
                hi = y;
            }
            let slope = ce_derivatives(&self.ch, y, 1)?[1];
            let newton = y - gy / slope;
            y = if slope > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if hi - lo <= 4.0 * f64::EPSILON * (1.0 + y.abs()) {
                return Ok(y);
            }
        }
        let achieved = g(y)?.abs();
        Err(CmeError::numeric(
            "conditional-mean inversion did not converge",
            achieved,
        ))
    }
}

/// The `y` with `E[X | Y = y] = x`.
pub fn ce_inverse_eval(ch: &ScalarChannel, x: f64, tol: f64) -> Result<f64> {
    CeInverter::new(ch).solve(x, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::Prior;

    fn two_point(p: f64) -> ScalarChannel {
        ScalarChannel::new(Prior::two_point(p).unwrap(), 1.0).unwrap()
    }

    fn closed_inverse(p: f64, s2: f64, x: f64) -> f64 {
        0.5 * s2 * ((1.0 + x) / (1.0 - x) * (1.0 - p) / p).ln()
    }

    #[test]
    fn gaussian_series_is_linear() {
        let ch = ScalarChannel::new(Prior::gaussian(0.0, 1.0).unwrap(), 1.0).unwrap();
        let s = ce_series(&ch, 0.7, 10).unwrap();
        assert!((s.coeffs[0] - 0.35).abs() < 1e-15);
        assert!((s.coeffs[1] - 0.5).abs() < 1e-15);
        assert!(s.coeffs[2..].iter().all(|c| c.abs() < 1e-10));
        assert!(s.radius_lower_bound.is_none());
        let inv = lagrange_invert(&s).unwrap();
        assert!((inv.b[0] - 2.0).abs() < 1e-14);
        assert!(inv.b[1..].iter().all(|b| b.abs() < 1e-9));
    }

    #[test]
    fn tanh_series() {
        let s = ce_series(&two_point(0.5), 0.0, 9).unwrap();
        // tanh y = y - y^3/3 + 2y^5/15 - 17y^7/315 + 62y^9/2835
        let want = [
            0.0,
            1.0,
            0.0,
            -1.0 / 3.0,
            0.0,
            2.0 / 15.0,
            0.0,
            -17.0 / 315.0,
            0.0,
            62.0 / 2835.0,
        ];
        for (c, w) in s.coeffs.iter().zip(want) {
            assert!((c - w).abs() < 1e-12);
        }
        assert!((s.radius_lower_bound.unwrap() - 1.0 / (2.0 * E)).abs() < 1e-15);
        assert!((s.radius_lower_bound.unwrap() - 0.1839).abs() < 1e-4);
    }

    #[test]
    fn series_accuracy_inside_radius_bound() {
        let ch = two_point(0.5);
        let s = ce_series(&ch, 0.3, 10).unwrap();
        let r = s.radius_lower_bound.unwrap();
        for i in 0..=20 {
            let y = 0.3 - 0.5 * r + r * i as f64 / 20.0;
            assert!((s.eval(y) - tre_mean(&ch, y).unwrap()).abs() < 1e-4);
        }
    }

    #[test]
    fn lagrange_inverts_known_series() {
        // exp(y) - 1 has inverse log(1 + x)
        let s = PowerSeries {
            center: 0.0,
            coeffs: (0..=10)
                .map(|k| if k == 0 { 0.0 } else { 1.0 / factorial(k) })
                .collect(),
            radius_lower_bound: None,
        };
        let inv = lagrange_invert(&s).unwrap();
        for (i, b) in inv.b.iter().enumerate() {
            let n = i + 1;
            let want = if n % 2 == 1 { 1.0 } else { -1.0 } * factorial(n - 1);
            assert!((b - want).abs() < 1e-9 * want.abs(), "b_{n}");
        }
        assert!((inv.empirical_radius() - 1.0).abs() < 0.15);
    }

    #[test]
    fn singular_series_rejected() {
        let s = PowerSeries {
            center: 0.0,
            coeffs: vec![0.0, 0.0, 1.0],
            radius_lower_bound: None,
        };
        assert!(matches!(lagrange_invert(&s), Err(CmeError::Domain(_))));
    }

    #[test]
    fn two_point_inverse_matches_closed_form() {
        for &p in &[0.3, 0.5, 0.7] {
            let ch = two_point(p);
            let inv = lagrange_invert(&ce_series(&ch, 0.0, MAX_SERIES_TERMS).unwrap()).unwrap();
            let r = inv.trust_radius(1e-6);
            assert!(r > 0.05);
            for i in 0..25 {
                let x = inv.value - r + 2.0 * r * i as f64 / 24.0;
                let got = inv.eval(x);
                assert!(
                    (got - closed_inverse(p, 1.0, x)).abs() < 1e-6,
                    "p={p} x={x}"
                );
                assert!((tre_mean(&ch, got).unwrap() - x).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn root_finder_examples() {
        let tp = two_point(0.5);
        assert!((ce_inverse_eval(&tp, 1f64.tanh(), 1e-14).unwrap() - 1.0).abs() < 1e-12);
        let g = ScalarChannel::new(Prior::gaussian(0.0, 1.0).unwrap(), 1.0).unwrap();
        assert!((ce_inverse_eval(&g, 0.5, 1e-14).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(
            ce_inverse_eval(&tp, 1.0, 1e-12),
            Err(CmeError::Range(_))
        ));
        assert!(matches!(
            ce_inverse_eval(&tp, -1.5, 1e-12),
            Err(CmeError::Range(_))
        ));
        let five = ScalarChannel::new(
            Prior::uniform_atoms(vec![-6.0, -3.0, 0.0, 3.0, 6.0]).unwrap(),
            1.0,
        )
        .unwrap();
        let inv = CeInverter::new(&five);
        let mut prev = f64::NEG_INFINITY;
        for i in 1..200 {
            let x = -6.0 + 12.0 * i as f64 / 200.0;
            let y = inv.solve(x, 1e-12).unwrap();
            assert!(y > prev);
            assert!((tre_mean(&five, y).unwrap() - x).abs() <= 1e-12);
            prev = y;
        }
    }

    #[test]
    fn root_finder_agrees_with_series_in_trust_region() {
        let ch = two_point(0.3);
        let inv = CeInverter::new(&ch);
        let (series, r) = inv.series.clone().unwrap();
        for i in 0..=10 {
            let x = series.value + 0.99 * r * (2.0 * i as f64 / 10.0 - 1.0);
            let y = inv.solve(x, 1e-14).unwrap();
            assert!((y - series.eval(x)).abs() < 1e-4);
            assert!((y - closed_inverse(0.3, 1.0, x)).abs() < 1e-10);
            let (ys, k) = inv.series_estimate(x).unwrap();
            assert!(
                k <= MAX_SERIES_TERMS && (tre_mean(&ch, ys).unwrap() - x).abs() <= TRUNCATION_TOL
            );
        }
    }
}

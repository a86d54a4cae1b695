//! Combinatorial polynomials and special functions: partial Bell polynomials,
//! the real Hermite family `G_m`, Legendre polynomials, moment/cumulant maps
//! and the modified Bessel ratio `I_ν/I_{ν-1}`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::error::{CmeError, Result};

/// Highest order held in the shared Bell table. Derivative orders up to 12
/// need `B_{13,k}` for the next cumulant, so one extra row is kept.
pub const MAX_BELL_ORDER: usize = 14;

/// One monomial `coef * x_1^e_1 * x_2^e_2 * ...`; `exps[i]` is the power of `x_{i+1}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Monomial {
    pub exps: Vec<u8>,
    pub coef: u64,
}

/// Partial Bell polynomials `B_{n,k}` stored as monomial lists.
#[derive(Debug, Clone)]
pub struct PartialBellTable {
    max_n: usize,
    // entries[n][k]
    entries: Vec<Vec<Vec<Monomial>>>,
}

impl PartialBellTable {
    /// Builds all `B_{n,k}` with `n <= max_n` from
    /// `B_{n,k} = sum_i C(n-1, i-1) x_i B_{n-i,k-1}`.
    pub fn new(max_n: usize) -> Self {
        let mut maps: Vec<Vec<BTreeMap<Vec<u8>, u64>>> =
            vec![vec![BTreeMap::new(); max_n + 1]; max_n + 1];
        maps[0][0].insert(vec![0u8; max_n], 1);
        for n in 1..=max_n {
            for k in 1..=n {
                let mut acc: BTreeMap<Vec<u8>, u64> = BTreeMap::new();
                for i in 1..=(n - k + 1) {
                    let c = binomial_u64(n as u64 - 1, i as u64 - 1);
                    for (exps, coef) in &maps[n - i][k - 1] {
                        let mut e = exps.clone();
                        e[i - 1] += 1;
                        *acc.entry(e).or_insert(0) += c * coef;
                    }
                }
                maps[n][k] = acc;
            }
        }
        let entries = maps
            .into_iter()
            .map(|row| {
                row.into_iter()
                    .map(|m| {
                        m.into_iter()
                            .map(|(exps, coef)| Monomial { exps, coef })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        PartialBellTable { max_n, entries }
    }

    /// Shared table up to [`MAX_BELL_ORDER`].
    pub fn shared() -> &'static PartialBellTable {
        static TABLE: OnceLock<PartialBellTable> = OnceLock::new();
        TABLE.get_or_init(|| PartialBellTable::new(MAX_BELL_ORDER))
    }

    pub fn max_n(&self) -> usize {
        self.max_n
    }

    pub fn monomials(&self, n: usize, k: usize) -> Result<&[Monomial]> {
        if n > self.max_n || k > n || (k == 0 && n > 0) {
            return Err(CmeError::Argument(format!(
                "Bell index (n={n}, k={k}) outside 0 <= k <= n <= {}",
                self.max_n
            )));
        }
        Ok(&self.entries[n][k])
    }

    /// `B_{n,k}(args)`; `args` must hold at least `n-k+1` values.
    pub fn eval(&self, n: usize, k: usize, args: &[f64]) -> Result<f64> {
        let monos = self.monomials(n, k)?;
        if n == 0 {
            return Ok(1.0);
        }
        let need = n - k + 1;
        if args.len() < need {
            return Err(CmeError::Argument(format!(
                "B_{{{n},{k}}} needs {need} arguments, got {}",
                args.len()
            )));
        }
        let mut total = 0.0;
        for m in monos {
            let mut term = m.coef as f64;
            for (i, &e) in m.exps.iter().enumerate().take(need) {
                if e > 0 {
                    term *= args[i].powi(e as i32);
                }
            }
            total += term;
        }
        Ok(total)
    }

    /// Complete Bell polynomial `B_n = sum_k B_{n,k}`, with `B_0 = 1`.
    pub fn complete(&self, n: usize, args: &[f64]) -> Result<f64> {
        if n == 0 {
            return Ok(1.0);
        }
        (1..=n).map(|k| self.eval(n, k, args)).sum()
    }
}

/// `B_{n,k}(args)` from the shared table; requires `1 <= k <= n <= MAX_BELL_ORDER`.
pub fn bell_partial(n: usize, k: usize, args: &[f64]) -> Result<f64> {
    if k == 0 || n == 0 {
        return Err(CmeError::Argument(format!(
            "bell_partial requires 1 <= k <= n, got (n={n}, k={k})"
        )));
    }
    PartialBellTable::shared().eval(n, k, args)
}

/// Complete Bell polynomial `B_n(args)` from the shared table.
pub fn bell_complete(n: usize, args: &[f64]) -> Result<f64> {
    PartialBellTable::shared().complete(n, args)
}

/// Maps raw moments `mu_1..mu_K` to cumulants `kappa_1..kappa_K`.
pub fn moments_to_cumulants(moments: &[f64]) -> Result<Vec<f64>> {
    let table = PartialBellTable::shared();
    (1..=moments.len())
        .map(|k| {
            let mut acc = 0.0;
            for m in 1..=k {
                let c = if m % 2 == 1 { 1.0 } else { -1.0 } * factorial(m - 1);
                acc += c * table.eval(k, m, moments)?;
            }
            Ok(acc)
        })
        .collect()
}

/// Maps cumulants to raw moments through complete Bell polynomials.
pub fn cumulants_to_moments(cumulants: &[f64]) -> Result<Vec<f64>> {
    (1..=cumulants.len())
        .map(|k| bell_complete(k, cumulants))
        .collect()
}

/// `G_m(t) = (-i)^m He_m(i t)`, evaluated by `G_{m+1} = t G_m + m G_{m-1}`.
pub fn hermite_g(m: usize, t: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, t);
    if m == 0 {
        return prev;
    }
    for j in 1..m {
        let next = t * cur + j as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// `G_0(t), ..., G_mmax(t)`.
pub fn hermite_g_all(mmax: usize, t: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(mmax + 1);
    out.push(1.0);
    if mmax >= 1 {
        out.push(t);
    }
    for j in 1..mmax {
        let next = t * out[j] + j as f64 * out[j - 1];
        out.push(next);
    }
    out
}

/// Probabilists' Hermite polynomials `He_0(x), ..., He_mmax(x)`.
pub fn hermite_he_all(mmax: usize, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(mmax + 1);
    hermite_he_into(mmax, x, &mut out);
    out
}

/// Same as [`hermite_he_all`] but reuses `out`.
pub fn hermite_he_into(mmax: usize, x: f64, out: &mut Vec<f64>) {
    out.clear();
    out.push(1.0);
    if mmax >= 1 {
        out.push(x);
    }
    for j in 1..mmax {
        let next = x * out[j] - j as f64 * out[j - 1];
        out.push(next);
    }
}

/// Legendre polynomial `P_n(t)` by the three-term recurrence.
pub fn legendre(n: usize, t: f64) -> f64 {
    legendre_with_derivative(n, t).0
}

/// `(P_n(t), P_n'(t))`.
pub fn legendre_with_derivative(n: usize, t: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let (mut p0, mut p1) = (1.0, t);
    for j in 1..n {
        let jf = j as f64;
        let p2 = ((2.0 * jf + 1.0) * t * p1 - jf * p0) / (jf + 1.0);
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    let d = if (1.0 - t * t).abs() < 1e-300 {
        // P_n'(±1) = (±1)^{n-1} n(n+1)/2
        let s = if t > 0.0 || n % 2 == 1 { 1.0 } else { -1.0 };
        s * nf * (nf + 1.0) / 2.0
    } else {
        nf * (p0 - t * p1) / (1.0 - t * t)
    };
    (p1, d)
}

/// `n!` as a float.
pub fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, j| acc * j as f64)
}

/// `(2n+1)!! = 1*3*...*(2n+1)`.
pub fn odd_double_factorial(n: usize) -> f64 {
    (0..=n).fold(1.0, |acc, j| acc * (2 * j + 1) as f64)
}

/// `Gamma(n + 3/2) = (2n+1)!! sqrt(pi) / 2^{n+1}`.
pub fn gamma_n_plus_three_halves(n: usize) -> f64 {
    odd_double_factorial(n) * PI.sqrt() / 2f64.powi(n as i32 + 1)
}

/// Rising factorial `n (n+1) ... (n+k-1)`.
pub fn rising_factorial(n: f64, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * (n + j as f64))
}

pub fn binomial(n: usize, k: usize) -> f64 {
    binomial_u64(n as u64, k as u64) as f64
}

fn binomial_u64(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u64 = 1;
    for j in 0..k {
        acc = acc * (n - j) / (j + 1);
    }
    acc
}

/// Standard normal density.
pub fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// Standard normal distribution function.
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-z / std::f64::consts::SQRT_2)
}

/// Density of `N(0, var)` at `u`.
pub fn normal_pdf(u: f64, var: f64) -> f64 {
    (-0.5 * u * u / var).exp() / (2.0 * PI * var).sqrt()
}

/// Log density of `N(0, var)` at `u`.
pub fn normal_log_pdf(u: f64, var: f64) -> f64 {
    -0.5 * u * u / var - 0.5 * (2.0 * PI * var).ln()
}

/// `log(sum exp(v))` without overflow.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

const BESSEL_CF_TOL: f64 = 1e-14;
const BESSEL_SERIES_CUTOFF: f64 = 1e-3;
const BESSEL_CF_MAX_ITER: usize = 10_000_000;

/// `I_nu(t) / I_{nu-1}(t)` for `nu >= 1/2`, `t > 0`.
///
/// Gauss continued fraction `r_nu = 1 / (2 nu / t + r_{nu+1})` evaluated with
/// the modified Lentz method; a short power series covers `t < 1e-3`.
pub fn bessel_ratio(nu: f64, t: f64) -> Result<f64> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(CmeError::Domain(format!(
            "bessel_ratio needs t > 0, got {t}"
        )));
    }
    if !(nu >= 0.5) {
        return Err(CmeError::Domain(format!(
            "bessel_ratio needs nu >= 1/2, got {nu}"
        )));
    }
    if t < BESSEL_SERIES_CUTOFF {
        return Ok(t / (2.0 * nu) * bessel_series_tail(nu, t) / bessel_series_tail(nu - 1.0, t));
    }
    let tiny = 1e-300;
    let b = |j: usize| 2.0 * (nu + j as f64) / t;
    let mut f = b(0);
    let mut c = f;
    let mut d = 0.0;
    for j in 1..BESSEL_CF_MAX_ITER {
        let bj = b(j);
        d += bj;
        if d.abs() < tiny {
            d = tiny;
        }
        d = 1.0 / d;
        c = bj + 1.0 / c;
        if c.abs() < tiny {
            c = tiny;
        }
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < BESSEL_CF_TOL {
            return Ok(1.0 / f);
        }
    }
    Err(CmeError::numeric(
        "Bessel ratio continued fraction did not converge",
        f64::NAN,
    ))
}

// sum_j (t^2/4)^j / (j! (mu+1)_j)
fn bessel_series_tail(mu: f64, t: f64) -> f64 {
    let q = t * t / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for j in 1..30 {
        term *= q / (j as f64 * (mu + j as f64));
        sum += term;
        if term.abs() < 1e-18 * sum.abs() {
            break;
        }
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set_partitions_by_blocks(n: usize) -> Vec<u64> {
        // Stirling numbers of the second kind via explicit enumeration of
        // restricted growth strings.
        let mut counts = vec![0u64; n + 1];
        let mut rgs = vec![0usize; n];
        loop {
            let blocks = rgs.iter().max().map_or(0, |m| m + 1);
            counts[blocks] += 1;
            let mut i = n - 1;
            loop {
                let prefix_max = rgs[..i].iter().copied().max().unwrap_or(0);
                if i > 0 && rgs[i] <= prefix_max {
                    rgs[i] += 1;
                    for r in rgs.iter_mut().skip(i + 1) {
                        *r = 0;
                    }
                    break;
                }
                if i == 0 {
                    return counts;
                }
                i -= 1;
            }
        }
    }

    #[test]
    fn examples() {
        assert_eq!(bell_complete(2, &[2.0, 3.0]).unwrap(), 7.0);
        assert_eq!(bell_partial(3, 3, &[2.0]).unwrap(), 8.0);
        assert_eq!(bell_partial(3, 2, &[1.0, 1.0]).unwrap(), 3.0);
        assert_eq!(hermite_g(0, 3.3), 1.0);
        assert_eq!(hermite_g(1, 2.0), 2.0);
        assert_eq!(hermite_g(2, 2.0), 5.0);
    }

    #[test]
    fn complete_bell_third_order_is_standard_form() {
        let (x1, x2, x3) = (1.3, -0.7, 2.1);
        let want = x1 * x1 * x1 + 3.0 * x1 * x2 + x3;
        assert!((bell_complete(3, &[x1, x2, x3]).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn bell_numbers_and_stirling() {
        let bell = [1u64, 2, 5, 15, 52, 203, 877, 4140];
        for n in 1..=8 {
            let ones = vec![1.0; n];
            assert_eq!(bell_complete(n, &ones).unwrap(), bell[n - 1] as f64);
            let stirling = set_partitions_by_blocks(n);
            for k in 1..=n {
                assert_eq!(bell_partial(n, k, &ones).unwrap(), stirling[k] as f64);
            }
        }
    }

    #[test]
    fn boundary_rows() {
        let args: Vec<f64> = (1..=12).map(|j| 0.3 * j as f64 - 1.0).collect();
        for n in 1..=12 {
            assert_eq!(bell_partial(n, 1, &args).unwrap(), args[n - 1]);
            let d = bell_partial(n, n, &args).unwrap() - args[0].powi(n as i32);
            assert!(d.abs() < 1e-12);
        }
    }

    #[test]
    fn out_of_range_indices() {
        assert!(bell_partial(3, 4, &[1.0]).is_err());
        assert!(bell_partial(0, 0, &[]).is_err());
        assert!(bell_partial(MAX_BELL_ORDER + 1, 1, &[1.0; 20]).is_err());
        assert!(bell_partial(4, 2, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn cumulant_examples() {
        let k = moments_to_cumulants(&[0.0, 1.0, 0.0, 3.0]).unwrap();
        for (a, b) in k.iter().zip([0.0, 1.0, 0.0, 0.0]) {
            assert!((a - b).abs() < 1e-14);
        }
        let k = moments_to_cumulants(&[2.0, 4.0, 8.0]).unwrap();
        for (a, b) in k.iter().zip([2.0, 0.0, 0.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        // Bernoulli(1/2): log MGF = log((1+e^t)/2), derivatives 1/2, 1/4, 0, -1/8
        let k = moments_to_cumulants(&[0.5, 0.5, 0.5, 0.5]).unwrap();
        for (a, b) in k.iter().zip([0.5, 0.25, 0.0, -0.125]) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn hermite_g_matches_imaginary_argument_he() {
        // He_m(i t) evaluated with complex recurrence, then multiplied by (-i)^m.
        for m in 0..10 {
            for &t in &[-2.5, -0.3, 0.0, 1.1, 4.0] {
                let (mut pr, mut pi, mut cr, mut ci) = (1.0, 0.0, 0.0, t);
                let he = if m == 0 {
                    (1.0, 0.0)
                } else {
                    for j in 1..m {
                        // next = (i t) * cur - j * prev
                        let nr = -t * ci - j as f64 * pr;
                        let ni = t * cr - j as f64 * pi;
                        pr = cr;
                        pi = ci;
                        cr = nr;
                        ci = ni;
                    }
                    (cr, ci)
                };
                // multiply by (-i)^m
                let (mut re, mut im) = he;
                for _ in 0..m {
                    let (r2, i2) = (im, -re);
                    re = r2;
                    im = i2;
                }
                assert!(im.abs() < 1e-9 * (1.0 + re.abs()));
                assert!((re - hermite_g(m, t)).abs() < 1e-9 * (1.0 + re.abs()));
            }
        }
    }

    #[test]
    fn legendre_orthogonality() {
        let rule = crate::quadrature::GaussLegendre::new(64);
        for n in 0..10 {
            let v = rule.integrate(-1.0, 1.0, |t| legendre(n, t).powi(2));
            assert!((v - 2.0 / (2 * n + 1) as f64).abs() < 1e-13);
            if n > 0 {
                let cross = rule.integrate(-1.0, 1.0, |t| legendre(n, t) * legendre(n - 1, t));
                assert!(cross.abs() < 1e-14);
            }
        }
        assert_eq!(legendre(0, 0.4), 1.0);
        assert_eq!(legendre(1, 0.4), 0.4);
    }

    #[test]
    fn bessel_examples() {
        assert!((bessel_ratio(0.5, 1.0).unwrap() - 1f64.tanh()).abs() < 1e-14);
        assert!((bessel_ratio(1.5, 1e-4).unwrap() - 1e-4 / 3.0).abs() < 1e-6);
        assert!(bessel_ratio(1.5, 2.0).unwrap() > bessel_ratio(1.5, 1.0).unwrap());
        assert!(bessel_ratio(1.0, 0.0).is_err());
        assert!(bessel_ratio(0.2, 1.0).is_err());
    }

    #[test]
    fn bessel_series_agrees_with_fraction_near_cutoff() {
        for &nu in &[0.5, 1.0, 1.5, 2.5] {
            let below = bessel_ratio(nu, 0.999e-3).unwrap();
            let above = bessel_ratio(nu, 1.001e-3).unwrap();
            assert!(((above - below) / below).abs() < 5e-3);
        }
    }

    #[test]
    fn bessel_ratio_three_halves_closed_form() {
        // I_{3/2}/I_{1/2}(t) = coth t - 1/t
        for &t in &[0.01f64, 0.5, 2.0, 10.0, 200.0] {
            let want = 1.0 / f64::tanh(t) - 1.0 / t;
            assert!((bessel_ratio(1.5, t).unwrap() - want).abs() < 1e-12);
        }
    }

    #[test]
    fn bessel_derivative_identity() {
        for &nu in &[0.5, 1.0, 1.5, 2.5] {
            let mut t = 0.1;
            while t <= 20.0 {
                let h = 1e-5 * (1.0 + t);
                let fd = (bessel_ratio(nu, t + h).unwrap() - bessel_ratio(nu, t - h).unwrap())
                    / (2.0 * h);
                let r = bessel_ratio(nu, t).unwrap();
                let id = 1.0 - (2.0 * nu - 1.0) / t * r - r * r;
                assert!((fd - id).abs() < 1e-6, "nu={nu} t={t}");
                assert!(r > 0.0 && r <= 1.0);
                t += 0.37;
            }
        }
    }

    #[test]
    fn gamma_half_integer() {
        assert!((gamma_n_plus_three_halves(0) - PI.sqrt() / 2.0).abs() < 1e-15);
        assert!((gamma_n_plus_three_halves(2) - 15.0 * PI.sqrt() / 8.0).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn cumulant_moment_round_trip(c in proptest::collection::vec(-1.0f64..1.0, 1..=8)) {
            let m = cumulants_to_moments(&c).unwrap();
            let back = moments_to_cumulants(&m).unwrap();
            for (a, b) in back.iter().zip(&c) {
                let scale = 1.0 + m.iter().fold(0.0f64, |s, v| s.max(v.abs()));
                prop_assert!((a - b).abs() <= 1e-12 * scale);
            }
        }

        #[test]
        fn hermite_g_derivative(m in 1usize..=8, t in -5.0f64..5.0) {
            let h = 1e-5;
            let fd = (hermite_g(m, t + h) - hermite_g(m, t - h)) / (2.0 * h);
            let exact = m as f64 * hermite_g(m - 1, t);
            prop_assert!((fd - exact).abs() <= 1e-8 * (1.0 + exact.abs()));
        }

        #[test]
        fn hermite_g_all_matches_scalar(m in 0usize..=12, t in -4.0f64..4.0) {
            let all = hermite_g_all(m, t);
            prop_assert_eq!(all.len(), m + 1);
            prop_assert!((all[m] - hermite_g(m, t)).abs() <= 1e-12 * (1.0 + all[m].abs()));
        }
    }
}

//! Vector channels `Y = X + N`, `N ~ N(0, K)` in dimension at most four:
//! conditional means, brute-force posterior sums, sphere-prior closed forms
//! and numeric checks of the vector identities.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{CmeError, Result};
use crate::polybasis::{bessel_ratio, log_sum_exp};
use crate::quadrature::{breakpoints, integrate_adaptive, AdaptiveSpec};

/// Largest supported dimension.
pub const MAX_DIM: usize = 4;
/// Residual above which finite differences are refined by Richardson extrapolation.
pub const REFINE_ABOVE: f64 = 1e-4;

/// Prior on `R^n`.
#[derive(Debug, Clone, PartialEq)]
pub enum VectorPrior {
    Atoms {
        points: Vec<DVector<f64>>,
        probs: Vec<f64>,
    },
    /// Uniform on the sphere of the given radius in `R^dim`.
    Sphere { radius: f64, dim: usize },
}

impl VectorPrior {
    pub fn atoms(points: Vec<Vec<f64>>, probs: Vec<f64>) -> Result<Self> {
        let p = VectorPrior::Atoms {
            points: points.into_iter().map(DVector::from_vec).collect(),
            probs,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn sphere(radius: f64, dim: usize) -> Result<Self> {
        let p = VectorPrior::Sphere { radius, dim };
        p.validate()?;
        Ok(p)
    }

    pub fn dim(&self) -> usize {
        match self {
            VectorPrior::Atoms { points, .. } => points.first().map_or(0, |p| p.len()),
            VectorPrior::Sphere { dim, .. } => *dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            VectorPrior::Atoms { points, probs } => {
                if points.is_empty() || points.len() != probs.len() {
                    return Err(CmeError::Argument(
                        "atoms and probabilities must be non-empty and of equal length".into(),
                    ));
                }
                let n = points[0].len();
                if n == 0 || n > MAX_DIM || points.iter().any(|p| p.len() != n) {
                    return Err(CmeError::Argument(format!(
                        "atoms must share a dimension between 1 and {MAX_DIM}"
                    )));
                }
                if points.iter().any(|p| p.iter().any(|v| !v.is_finite())) {
                    return Err(CmeError::Argument("atoms must be finite".into()));
                }
                if probs.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
                    return Err(CmeError::Argument("probabilities must be >= 0".into()));
                }
                let total: f64 = probs.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(CmeError::Argument(format!(
                        "probabilities sum to {total}, not 1"
                    )));
                }
                Ok(())
            }
            VectorPrior::Sphere { radius, dim } => {
                if !(*radius > 0.0) || !radius.is_finite() {
                    return Err(CmeError::Argument(format!(
                        "radius must be > 0, got {radius}"
                    )));
                }
                if *dim == 0 || *dim > MAX_DIM {
                    return Err(CmeError::Argument(format!(
                        "sphere dimension must be between 1 and {MAX_DIM}"
                    )));
                }
                Ok(())
            }
        }
    }
}

/// Channel `Y = X + N` with `N ~ N(0, K)`.
#[derive(Debug, Clone)]
pub struct VectorChannel {
    prior: VectorPrior,
    k: DMatrix<f64>,
    k_inv: DMatrix<f64>,
    log_norm: f64,
}

impl VectorChannel {
    pub fn new(prior: VectorPrior, k: DMatrix<f64>) -> Result<Self> {
        prior.validate()?;
        let n = prior.dim();
        if k.nrows() != n || k.ncols() != n {
            return Err(CmeError::Argument(format!(
                "noise covariance must be {n}x{n}"
            )));
        }
        let asym = (&k - k.transpose()).amax();
        if asym > 1e-12 * k.amax() {
            return Err(CmeError::Argument(
                "noise covariance must be symmetric".into(),
            ));
        }
        let chol = k.clone().cholesky().ok_or_else(|| {
            CmeError::Argument("noise covariance must be positive definite".into())
        })?;
        let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let k_inv = chol.inverse();
        if let VectorPrior::Sphere { .. } = prior {
            let s2 = k[(0, 0)];
            if (&k - DMatrix::identity(n, n) * s2).amax() > 1e-12 * s2 {
                return Err(CmeError::Capability(
                    "sphere priors need an isotropic noise covariance".into(),
                ));
            }
        }
        let log_norm = -0.5 * (n as f64 * (2.0 * std::f64::consts::PI).ln() + log_det);
        Ok(VectorChannel {
            prior,
            k,
            k_inv,
            log_norm,
        })
    }

    /// Isotropic channel `K = sigma2 I`.
    pub fn isotropic(prior: VectorPrior, sigma2: f64) -> Result<Self> {
        let n = prior.dim();
        Self::new(prior, DMatrix::identity(n, n) * sigma2)
    }

    pub fn dim(&self) -> usize {
        self.prior.dim()
    }

    pub fn prior(&self) -> &VectorPrior {
        &self.prior
    }

    pub fn noise_cov(&self) -> &DMatrix<f64> {
        &self.k
    }

    pub fn noise_precision(&self) -> &DMatrix<f64> {
        &self.k_inv
    }

    fn check_point(&self, y: &DVector<f64>) -> Result<()> {
        if y.len() != self.dim() || y.iter().any(|v| !v.is_finite()) {
            return Err(CmeError::Argument(format!(
                "observation must be a finite vector of length {}",
                self.dim()
            )));
        }
        Ok(())
    }

    fn quad_form(&self, d: &DVector<f64>) -> f64 {
        d.dot(&(&self.k_inv * d))
    }

    /// `log phi_K(y - x)`.
    pub fn log_likelihood(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        self.log_norm - 0.5 * self.quad_form(&(y - x))
    }

    /// Posterior atom weights for a discrete prior.
    pub fn posterior_weights(&self, y: &DVector<f64>) -> Result<Vec<f64>> {
        self.check_point(y)?;
        match &self.prior {
            VectorPrior::Atoms { points, probs } => {
                let l: Vec<f64> = points
                    .iter()
                    .zip(probs)
                    .map(|(x, p)| {
                        if *p > 0.0 {
                            p.ln() - 0.5 * self.quad_form(&(y - x))
                        } else {
                            f64::NEG_INFINITY
                        }
                    })
                    .collect();
                let m = log_sum_exp(&l);
                Ok(l.iter().map(|v| (v - m).exp()).collect())
            }
            VectorPrior::Sphere { .. } => Err(CmeError::Capability(
                "posterior weights exist only for discrete priors".into(),
            )),
        }
    }

    /// `log f_Y(y)`.
    pub fn log_density(&self, y: &DVector<f64>) -> Result<f64> {
        self.check_point(y)?;
        match &self.prior {
            VectorPrior::Atoms { points, probs } => {
                let l: Vec<f64> = points
                    .iter()
                    .zip(probs)
                    .filter(|(_, p)| **p > 0.0)
                    .map(|(x, p)| p.ln() + self.log_likelihood(x, y))
                    .collect();
                Ok(log_sum_exp(&l))
            }
            VectorPrior::Sphere { radius, dim } => {
                let s2 = self.k[(0, 0)];
                let r = y.norm();
                let t = radius * r / s2;
                let tilt = SphereTilt::new(*dim, t)?;
                Ok(self.log_norm - 0.5 * (r * r + radius * radius) / s2 + t + tilt.log_mgf)
            }
        }
    }

    /// `grad log f_Y(y)`.
    pub fn score(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_point(y)?;
        match &self.prior {
            VectorPrior::Atoms { points, .. } => {
                let w = self.posterior_weights(y)?;
                let mut g = DVector::zeros(y.len());
                for (x, wi) in points.iter().zip(&w) {
                    g -= (&self.k_inv * (y - x)) * *wi;
                }
                Ok(g)
            }
            VectorPrior::Sphere { radius, dim } => {
                let s2 = self.k[(0, 0)];
                let r = y.norm();
                if r == 0.0 {
                    return Ok(DVector::zeros(y.len()));
                }
                let tilt = SphereTilt::new(*dim, radius * r / s2)?;
                Ok(y * ((radius * tilt.mean_cos / r - 1.0) / s2))
            }
        }
    }

    /// `E[U | Y = y]` and `E[(X - E[X|Y]) (U - E[U|Y])^T | Y = y]` by direct
    /// posterior summation (atoms) or polar quadrature (sphere, `U = X` only).
    pub fn posterior_moments(
        &self,
        u: &UFamily,
        y: &DVector<f64>,
    ) -> Result<(DVector<f64>, DVector<f64>, DMatrix<f64>)> {
        self.check_point(y)?;
        let n = self.dim();
        match &self.prior {
            VectorPrior::Atoms { points, .. } => {
                let w = self.posterior_weights(y)?;
                let us: Vec<DVector<f64>> = points
                    .iter()
                    .map(|x| u.eval(x, &self.k_inv))
                    .collect::<Result<_>>()?;
                let m = us[0].len();
                let mut ex = DVector::zeros(n);
                let mut eu = DVector::zeros(m);
                let mut exu = DMatrix::zeros(n, m);
                for ((x, uv), wi) in points.iter().zip(&us).zip(&w) {
                    ex += x * *wi;
                    eu += uv * *wi;
                    exu += x * uv.transpose() * *wi;
                }
                let cov = exu - &ex * eu.transpose();
                Ok((ex, eu, cov))
            }
            VectorPrior::Sphere { radius, dim } => {
                if *u != UFamily::Identity {
                    return Err(CmeError::Capability(
                        "sphere priors support only U = X".into(),
                    ));
                }
                let s2 = self.k[(0, 0)];
                let r = y.norm();
                let tilt = SphereTilt::new(*dim, radius * r / s2)?;
                let dir = if r > 0.0 { y / r } else { DVector::zeros(n) };
                let ex = &dir * (radius * tilt.mean_cos);
                let pp = &dir * dir.transpose();
                let perp = if n > 1 {
                    (1.0 - tilt.mean_cos2) / (n - 1) as f64
                } else {
                    0.0
                };
                let second = if r > 0.0 {
                    (&pp * tilt.mean_cos2 + (DMatrix::identity(n, n) - &pp) * perp)
                        * (radius * radius)
                } else {
                    DMatrix::identity(n, n) * (radius * radius / n as f64)
                };
                let cov = second - &ex * ex.transpose();
                Ok((ex.clone(), ex, cov))
            }
        }
    }
}

/// `E[c]`, `E[c^2]` and `log E[e^{t (c - 1)}]` for `c = cos(theta)` under the
/// uniform law on the sphere in `R^n`, `theta` the polar angle.
#[derive(Debug, Clone, Copy)]
struct SphereTilt {
    log_mgf: f64,
    mean_cos: f64,
    mean_cos2: f64,
}

impl SphereTilt {
    fn new(n: usize, t: f64) -> Result<Self> {
        if n == 1 {
            // c = +-1 with equal probability
            let w = (-2.0 * t).exp();
            return Ok(SphereTilt {
                log_mgf: (0.5 * (1.0 + w)).ln(),
                mean_cos: (1.0 - w) / (1.0 + w),
                mean_cos2: 1.0,
            });
        }
        let spec = AdaptiveSpec {
            abs_tol: 1e-15,
            rel_tol: 1e-14,
            max_intervals: 4000,
        };
        let pi = std::f64::consts::PI;
        let width = (1.0 / t.max(1e-300).sqrt()).min(pi / 4.0);
        let pts = breakpoints(
            0.0,
            pi,
            pi / 8.0,
            &[width, 2.0 * width, 4.0 * width, 8.0 * width],
        );
        let p = (n - 2) as i32;
        let weight = |th: f64| (t * (th.cos() - 1.0)).exp() * th.sin().powi(p);
        let z = integrate_adaptive(weight, &pts, spec)?;
        let z1 = integrate_adaptive(|th| weight(th) * th.cos(), &pts, spec)?;
        let z2 = integrate_adaptive(|th| weight(th) * th.cos().powi(2), &pts, spec)?;
        let norm = integrate_adaptive(|th| th.sin().powi(p), &pts, spec)?;
        Ok(SphereTilt {
            log_mgf: (z / norm).ln(),
            mean_cos: z1 / z,
            mean_cos2: z2 / z,
        })
    }
}

/// Statistic `U` whose conditional mean is differentiated.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum UFamily {
    /// `U = X`.
    Identity,
    /// `U = prod_i (e_i^T K^{-1} X)^{v_i}`.
    Power(Vec<u32>),
}

impl UFamily {
    fn eval(&self, x: &DVector<f64>, k_inv: &DMatrix<f64>) -> Result<DVector<f64>> {
        match self {
            UFamily::Identity => Ok(x.clone()),
            UFamily::Power(v) => {
                if v.len() != x.len() {
                    return Err(CmeError::Argument(format!(
                        "exponent vector must have length {}",
                        x.len()
                    )));
                }
                let z = k_inv * x;
                Ok(DVector::from_element(
                    1,
                    z.iter()
                        .zip(v)
                        .map(|(zi, vi)| zi.powi(*vi as i32))
                        .product(),
                ))
            }
        }
    }
}

/// `E[X | Y = y] = y + K grad log f_Y(y)`.
pub fn vector_tre_mean(ch: &VectorChannel, y: &DVector<f64>) -> Result<DVector<f64>> {
    let g = ch.score(y)?;
    let m = y + ch.noise_cov() * g;
    if m.iter().all(|v| v.is_finite()) {
        Ok(m)
    } else {
        Err(CmeError::numeric(
            "vector conditional mean is not finite",
            f64::NAN,
        ))
    }
}

/// `R y/|y| I_{n/2}(R|y|) / I_{n/2-1}(R|y|)` for `K = I`.
pub fn sphere_conditional_mean(radius: f64, n: usize, y: &DVector<f64>) -> Result<DVector<f64>> {
    let r = y.norm();
    if r == 0.0 {
        return Ok(DVector::zeros(y.len()));
    }
    let rho = bessel_ratio(0.5 * n as f64, radius * r)?;
    Ok(y * (radius * rho / r))
}

/// `Cov(X_{s1}, X_{s2} | Y = y)` for the sphere prior with `K = I`, with
/// `rho = I_{n/2}/I_{n/2-1}` at `R|y|`:
/// `delta R rho/|y| - R y1 y2 rho/|y|^3 + R^2 y1 y2/|y|^2 (1 - (n-1) rho/(R|y|) - rho^2)`.
pub fn sphere_second_cumulant(
    radius: f64,
    n: usize,
    y: &DVector<f64>,
    s1: usize,
    s2: usize,
) -> Result<f64> {
    if s1 >= y.len() || s2 >= y.len() {
        return Err(CmeError::Argument("coordinate index out of range".into()));
    }
    let r = y.norm();
    if r == 0.0 {
        return Err(CmeError::Domain(
            "the sphere cumulant formula is singular at y = 0".into(),
        ));
    }
    let t = radius * r;
    let rho = bessel_ratio(0.5 * n as f64, t)?;
    let yy = y[s1] * y[s2];
    let diag = if s1 == s2 { radius * rho / r } else { 0.0 };
    Ok(diag - radius * yy * rho / (r * r * r)
        + radius * radius * yy / (r * r) * (1.0 - (n as f64 - 1.0) * rho / t - rho * rho))
}

/// Central-difference Jacobian `J_{ij} = d F_j / d y_i`, steps
/// `1e-4 (1 + |y_i|)`, optionally Richardson-refined.
pub fn fd_jacobian<F: Fn(&DVector<f64>) -> Result<DVector<f64>>>(
    f: F,
    y: &DVector<f64>,
    refine: bool,
) -> Result<DMatrix<f64>> {
    let n = y.len();
    let diff = |scale: f64| -> Result<DMatrix<f64>> {
        let mut cols: Vec<DVector<f64>> = Vec::with_capacity(n);
        for i in 0..n {
            let h = scale * 1e-4 * (1.0 + y[i].abs());
            let mut up = y.clone();
            let mut dn = y.clone();
            up[i] += h;
            dn[i] -= h;
            cols.push((f(&up)? - f(&dn)?) / (2.0 * h));
        }
        Ok(DMatrix::from_columns(&cols).transpose())
    };
    let d1 = diff(1.0)?;
    if !refine {
        return Ok(d1);
    }
    let d2 = diff(0.5)?;
    Ok((d2 * 4.0 - d1) / 3.0)
}

/// `max |J_y E[U|Y=y] - K^{-1} Cov(X, U | Y = y)|` with a finite-difference Jacobian.
pub fn jacobian_identity_check(ch: &VectorChannel, y: &DVector<f64>, u: &UFamily) -> Result<f64> {
    let (_, _, cov) = ch.posterior_moments(u, y)?;
    let want = ch.noise_precision() * cov;
    let mean_u = |t: &DVector<f64>| ch.posterior_moments(u, t).map(|m| m.1);
    let dev = (fd_jacobian(mean_u, y, false)? - &want).amax();
    if dev <= REFINE_ABOVE {
        return Ok(dev);
    }
    Ok((fd_jacobian(mean_u, y, true)? - want).amax())
}

/// `max |E[(X X^T)^k | Y] - (K J + E[X|Y] E[V|Y]^T)|` with `V = (X X^T)^{k-1} X`
/// and `J_{ij} = d E[V_j | Y] / d y_i`.
pub fn matrix_jaffer_check(ch: &VectorChannel, k: u32, y: &DVector<f64>) -> Result<f64> {
    if k == 0 {
        return Err(CmeError::Argument(
            "matrix moment order must be >= 1".into(),
        ));
    }
    let (points, _) = match ch.prior() {
        VectorPrior::Atoms { points, probs } => (points, probs),
        _ => {
            return Err(CmeError::Capability(
                "matrix check needs a discrete prior".into(),
            ))
        }
    };
    let outer_pow = |x: &DVector<f64>, p: u32| (x * x.transpose()).pow(p);
    let expect = |t: &DVector<f64>| -> Result<(DMatrix<f64>, DVector<f64>, DVector<f64>)> {
        let w = ch.posterior_weights(t)?;
        let n = t.len();
        let (mut m, mut ex, mut ev) = (DMatrix::zeros(n, n), DVector::zeros(n), DVector::zeros(n));
        for (x, wi) in points.iter().zip(&w) {
            m += outer_pow(x, k) * *wi;
            ex += x * *wi;
            ev += outer_pow(x, k - 1) * x * *wi;
        }
        Ok((m, ex, ev))
    };
    let (lhs, ex, ev) = expect(y)?;
    let ev_of = |t: &DVector<f64>| expect(t).map(|e| e.2);
    let rhs = |refine: bool| -> Result<DMatrix<f64>> {
        Ok(ch.noise_cov() * fd_jacobian(ev_of, y, refine)? + &ex * ev.transpose())
    };
    let dev = (&lhs - rhs(false)?).amax();
    if dev <= REFINE_ABOVE {
        return Ok(dev);
    }
    Ok((lhs - rhs(true)?).amax())
}

/// Posterior second cumulants from central differences of the conditional
/// cumulant generating function `log E[exp(t^T X) | Y = y]` at `t = 0`.
pub fn cgf_second_partials(ch: &VectorChannel, y: &DVector<f64>) -> Result<DMatrix<f64>> {
    let points = match ch.prior() {
        VectorPrior::Atoms { points, .. } => points,
        _ => {
            return Err(CmeError::Capability(
                "cgf check needs a discrete prior".into(),
            ))
        }
    };
    let w = ch.posterior_weights(y)?;
    let n = y.len();
    let cgf = |t: &DVector<f64>| {
        let l: Vec<f64> = points
            .iter()
            .zip(&w)
            .filter(|(_, wi)| **wi > 0.0)
            .map(|(x, wi)| wi.ln() + t.dot(x))
            .collect();
        log_sum_exp(&l)
    };
    let h = 1e-3;
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let at = |si: f64, sj: f64| {
                let mut t = DVector::zeros(n);
                t[i] += si * h;
                t[j] += sj * h;
                cgf(&t)
            };
            out[(i, j)] =
                (at(1.0, 1.0) - at(1.0, -1.0) - at(-1.0, 1.0) + at(-1.0, -1.0)) / (4.0 * h * h);
        }
    }
    Ok(out)
}

/// `iota(x; y) = log phi_K(y - x) - log f_Y(y)`.
pub fn vector_info_density(ch: &VectorChannel, x: &DVector<f64>, y: &DVector<f64>) -> Result<f64> {
    Ok(ch.log_likelihood(x, y) - ch.log_density(y)?)
}

/// `max |Hess_y iota(x; y) + K^{-1} Cov(X | Y = y) K^{-1}|` with a
/// central-difference Hessian.
pub fn info_hessian_check(ch: &VectorChannel, x: &DVector<f64>, y: &DVector<f64>) -> Result<f64> {
    let (_, _, cov) = ch.posterior_moments(&UFamily::Identity, y)?;
    let want = -(ch.noise_precision() * cov * ch.noise_precision());
    let grad = |t: &DVector<f64>| -> Result<DVector<f64>> {
        // grad_y iota = -K^{-1}(y - x) - score(y)
        Ok(-(ch.noise_precision() * (t - x)) - ch.score(t)?)
    };
    let mut worst = 0.0f64;
    let n = y.len();
    let h = 1e-3;
    let f0 = vector_info_density(ch, x, y)?;
    for i in 0..n {
        for j in 0..n {
            let at = |si: f64, sj: f64| -> Result<f64> {
                let mut t = y.clone();
                t[i] += si * h;
                t[j] += sj * h;
                vector_info_density(ch, x, &t)
            };
            let v = if i == j {
                (at(1.0, 0.0)? - 2.0 * f0 + at(-1.0, 0.0)?) / (h * h)
            } else {
                (at(1.0, 1.0)? - at(1.0, -1.0)? - at(-1.0, 1.0)? + at(-1.0, -1.0)?) / (4.0 * h * h)
            };
            worst = worst.max((v - want[(i, j)]).abs());
        }
    }
    // the analytic gradient cross-checks the value-based Hessian
    let hg = fd_jacobian(grad, y, false)?;
    Ok(worst.max((hg - want).amax()))
}

/// `E[U (K^{-1} X)_i | Y] = d/dy_i E[U | Y] + E[U | Y] E[(K^{-1} X)_i | Y]`
/// with `U = prod_j (e_j^T K^{-1} X)^{v_j}`; the derivative is numeric.
pub fn vector_jaffer_step(
    ch: &VectorChannel,
    v: &[u32],
    i: usize,
    y: &DVector<f64>,
) -> Result<f64> {
    if i >= y.len() {
        return Err(CmeError::Argument("coordinate index out of range".into()));
    }
    let u = UFamily::Power(v.to_vec());
    let (ex, eu, _) = ch.posterior_moments(&u, y)?;
    let j = fd_jacobian(|t| ch.posterior_moments(&u, t).map(|m| m.1), y, true)?;
    Ok(j[(i, 0)] + eu[0] * (ch.noise_precision() * ex)[i])
}

/// One line of the vector battery.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub residual: f64,
    pub tol: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.residual <= self.tol
    }
}

/// `count` points uniform in `[-half_width, half_width]^n`.
pub fn seeded_points(n: usize, count: usize, half_width: f64, seed: u64) -> Vec<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| DVector::from_fn(n, |_, _| rng.random_range(-half_width..half_width)))
        .collect()
}

/// Four-atom prior on the plane.
pub fn four_atom_plane() -> VectorPrior {
    VectorPrior::atoms(
        vec![
            vec![1.0, 1.0],
            vec![-1.0, 0.5],
            vec![0.5, -1.5],
            vec![-0.5, -0.5],
        ],
        vec![0.3, 0.2, 0.25, 0.25],
    )
    .expect("valid prior")
}

/// Five-atom prior in three dimensions.
pub fn five_atom_space() -> VectorPrior {
    VectorPrior::atoms(
        vec![
            vec![1.0, 0.0, 0.5],
            vec![-1.0, 1.0, 0.0],
            vec![0.0, -1.0, 1.0],
            vec![0.5, 0.5, -1.0],
            vec![-0.5, -0.5, -0.5],
        ],
        vec![0.2, 0.2, 0.2, 0.2, 0.2],
    )
    .expect("valid prior")
}

/// Product Gauss–Hermite grid standing in for `X ~ N(0, I_2)`.
pub fn gaussian_grid_plane(nodes: usize) -> VectorPrior {
    let gh = crate::quadrature::GaussHermite::new(nodes);
    let mut points = Vec::new();
    let mut probs = Vec::new();
    let norm: f64 = gh.weights.iter().sum();
    for (xi, wi) in gh.nodes.iter().zip(&gh.weights) {
        for (xj, wj) in gh.nodes.iter().zip(&gh.weights) {
            points.push(DVector::from_vec(vec![
                std::f64::consts::SQRT_2 * xi,
                std::f64::consts::SQRT_2 * xj,
            ]));
            probs.push(wi * wj / (norm * norm));
        }
    }
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);
    VectorPrior::Atoms { points, probs }
}

fn worst<F: FnMut(&DVector<f64>) -> Result<f64>>(pts: &[DVector<f64>], mut f: F) -> Result<f64> {
    let mut w = 0.0f64;
    for p in pts {
        w = w.max(f(p)?);
    }
    Ok(w)
}

/// The full vector identity battery on `points` seeded test points.
pub fn vector_battery(seed: u64, points: usize) -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    let mut push = |name: &str, residual: f64, tol: f64| {
        out.push(CheckResult {
            name: name.to_string(),
            residual,
            tol,
        })
    };
    let k2 = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]);
    let k3 = DMatrix::from_row_slice(3, 3, &[1.0, 0.3, 0.1, 0.3, 1.5, -0.2, 0.1, -0.2, 0.8]);
    let plane = VectorChannel::new(four_atom_plane(), k2.clone())?;
    let space = VectorChannel::new(five_atom_space(), k3)?;
    let pts2 = seeded_points(2, points, 3.0, seed);
    let pts3 = seeded_points(3, points, 3.0, seed.wrapping_add(1));

    push(
        "jacobian U=X, four atoms, K=diag(1,2)",
        worst(&pts2, |y| {
            jacobian_identity_check(&plane, y, &UFamily::Identity)
        })?,
        1e-4,
    );
    push(
        "jacobian U=X, five atoms in 3-D, correlated K",
        worst(&pts3, |y| {
            jacobian_identity_check(&space, y, &UFamily::Identity)
        })?,
        1e-4,
    );
    for v in [vec![1, 0], vec![2, 1], vec![0, 3]] {
        let u = UFamily::Power(v.clone());
        push(
            &format!("jacobian U=power{v:?}, four atoms"),
            worst(&pts2, |y| jacobian_identity_check(&plane, y, &u))?,
            1e-4,
        );
    }
    let u = UFamily::Power(vec![1, 1, 1]);
    push(
        "jacobian U=power[1, 1, 1], five atoms in 3-D",
        worst(&pts3, |y| jacobian_identity_check(&space, y, &u))?,
        1e-4,
    );
    let sphere = VectorChannel::isotropic(VectorPrior::sphere(1.0, 3)?, 1.0)?;
    push(
        "jacobian U=X, sphere R=1 n=3",
        worst(&pts3, |y| {
            jacobian_identity_check(&sphere, y, &UFamily::Identity)
        })?,
        1e-4,
    );
    let gauss = VectorChannel::new(gaussian_grid_plane(40), k2.clone())?;
    let closed = (DMatrix::identity(2, 2) + &k2)
        .try_inverse()
        .expect("invertible");
    let gpts = seeded_points(2, points, 2.0, seed.wrapping_add(2));
    push(
        "jacobian U=X, Gaussian grid vs (I+K)^-1",
        worst(&gpts, |y| {
            let j = fd_jacobian(|t| vector_tre_mean(&gauss, t), y, true)?;
            Ok((j - &closed).amax())
        })?,
        1e-4,
    );

    let sphere_pts: Vec<DVector<f64>> = pts3.iter().filter(|p| p.norm() > 0.1).cloned().collect();
    push(
        "sphere n=3 second cumulants vs mean partials",
        worst(&sphere_pts, |y| {
            let j = fd_jacobian(|t| vector_tre_mean(&sphere, t), y, true)?;
            let mut w = 0.0f64;
            for s1 in 0..3 {
                for s2 in 0..3 {
                    let c = sphere_second_cumulant(1.0, 3, y, s1, s2)?;
                    w = w.max((c - j[(s1, s2)]).abs());
                }
            }
            Ok(w)
        })?,
        1e-5,
    );
    let line = VectorChannel::isotropic(VectorPrior::sphere(1.5, 1)?, 1.0)?;
    push(
        "sphere n=1 reduces to R tanh(Ry), (R/cosh(Ry))^2",
        worst(&seeded_points(1, points, 3.0, seed.wrapping_add(3)), |y| {
            let r = 1.5;
            let m = vector_tre_mean(&line, y)?[0];
            let cf = sphere_conditional_mean(r, 1, y)?[0];
            let c = if y[0] != 0.0 {
                sphere_second_cumulant(r, 1, y, 0, 0)?
            } else {
                r * r
            };
            let t = r * y[0];
            Ok((m - r * t.tanh())
                .abs()
                .max((cf - r * t.tanh()).abs())
                .max((c - (r / t.cosh()).powi(2)).abs()))
        })?,
        1e-8,
    );

    push(
        "cgf second partials vs K * mean partials, K=diag(1,2)",
        worst(&pts2, |y| {
            let j = fd_jacobian(|t| vector_tre_mean(&plane, t), y, true)?;
            Ok((cgf_second_partials(&plane, y)? - &k2 * j).amax())
        })?,
        1e-4,
    );
    let x0 = DVector::from_vec(vec![0.5, -1.5]);
    push(
        "information-density Hessian",
        worst(&pts2, |y| info_hessian_check(&plane, &x0, y))?,
        1e-3,
    );
    for (name, ch, pts) in [("plane", &plane, &pts2), ("space", &space, &pts3)] {
        for k in 1..=2 {
            push(
                &format!("matrix moment recursion k={k}, {name}"),
                worst(pts, |y| matrix_jaffer_check(ch, k, y))?,
                1e-4,
            );
        }
    }
    Ok(out)
}

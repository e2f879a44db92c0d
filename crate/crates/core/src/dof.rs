//! Classical (`df_F = tr H`) and predictive (`df_R`) model degrees of freedom.
//!
//! `df_R = tr(H) + (n/2) (E||h*||^2 - tr(H^T H) / n)`, where the expectation is
//! over a fresh covariate draw `x*` with the training design held fixed.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{pairwise_sum, principal_submatrix, select_columns, spd_inverse, sym_eigenvalues, thin_svd};
use crate::procedures::{HatSystem, ProcedureSpec, WeightKernel};
use crate::sampling::{stream_rng, GaussianSampler, PointSampler};
use crate::scalar::{count, epsilon, lit, to_f64, Scalar};

/// Draws per Monte Carlo chunk; each chunk owns one random stream.
const CHUNK: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DofMethod {
    ExactLs,
    ExactRidge,
    /// Closed form for another linear procedure under Gaussian covariates.
    Analytic,
    /// `x*` uniform over the training rows; exact average.
    Empirical,
    MonteCarlo { n_draws: usize, se: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DofReport<T: Scalar> {
    pub df_fixed: T,
    pub df_random: T,
    pub e_h_norm2: T,
    pub trace_hth_over_n: T,
    pub method: DofMethod,
    /// Set when the Monte Carlo standard error of `df_random` exceeds the caller's tolerance.
    pub flagged: bool,
}

impl<T: Scalar> DofReport<T> {
    /// Standard error of `df_random`; zero for exact methods.
    pub fn se(&self) -> f64 {
        match self.method {
            DofMethod::MonteCarlo { se, .. } => se,
            _ => 0.0,
        }
    }
}

/// Distribution of the test covariate `x*`.
#[derive(Clone, Copy)]
pub enum CovariateLaw<'a, T: Scalar> {
    /// `N(0, Sigma)` in the full covariate space.
    Gaussian(&'a DMatrix<T>),
    /// Uniform over the training rows.
    Empirical,
    Sampler(&'a dyn PointSampler<T>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McConfig {
    pub n_draws: usize,
    pub seed: u64,
    /// Flag (but keep) results whose standard error exceeds this.
    pub se_tolerance: Option<f64>,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            n_draws: 10_000,
            seed: 0,
            se_tolerance: None,
        }
    }
}

impl McConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }
}

/// `E h*_i^2` per coordinate, their sum, and the Monte Carlo error of the sum.
#[derive(Debug, Clone)]
pub struct HatMoments<T: Scalar> {
    pub per_index: DVector<T>,
    pub e_norm2: T,
    pub se: f64,
    pub method: DofMethod,
}

/// `tr(H)`.
pub fn df_fixed<T: Scalar>(hs: &HatSystem<T>) -> T {
    hs.h().trace()
}

/// `diag(W Sigma_S W^T)`, the second moments of `h* = W x*_S` for centred `x*`.
fn linear_moments<T: Scalar>(w: &DMatrix<T>, sigma_s: &DMatrix<T>) -> DVector<T> {
    let ws = w * sigma_s;
    DVector::from_fn(w.nrows(), |i, _| ws.row(i).dot(&w.row(i)))
}

fn check_sigma<T: Scalar>(sigma: &DMatrix<T>, d: usize) -> Result<()> {
    if sigma.shape() != (d, d) {
        return Err(Error::DimensionMismatch(format!(
            "Sigma is {} x {}, design has {d} columns",
            sigma.nrows(),
            sigma.ncols()
        )));
    }
    Ok(())
}

/// Second moments of the hat vector under `law`.
pub fn hat_moments<T: Scalar>(hs: &HatSystem<T>, law: CovariateLaw<'_, T>, mc: &McConfig) -> Result<HatMoments<T>> {
    let n = hs.n();
    match law {
        CovariateLaw::Empirical => {
            let h = hs.h();
            let nn = count::<T>(n);
            let per_index = DVector::from_fn(n, |i, _| h.column(i).norm_squared() / nn);
            let e_norm2 = per_index.sum();
            Ok(HatMoments {
                per_index,
                e_norm2,
                se: 0.0,
                method: DofMethod::Empirical,
            })
        }
        CovariateLaw::Gaussian(sigma) => {
            check_sigma(sigma, hs.x().ncols())?;
            if let Some((subset, w)) = hs.linear_weights() {
                let per_index = linear_moments(w, &principal_submatrix(sigma, subset));
                let e_norm2 = per_index.sum();
                let method = match hs.spec() {
                    ProcedureSpec::Ols { .. } | ProcedureSpec::MinNorm { .. } => DofMethod::ExactLs,
                    ProcedureSpec::Ridge { .. } => DofMethod::ExactRidge,
                    _ => DofMethod::Analytic,
                };
                return Ok(HatMoments {
                    per_index,
                    e_norm2,
                    se: 0.0,
                    method,
                });
            }
            let sampler = GaussianSampler::new(sigma)?;
            monte_carlo_moments(hs, &sampler, mc)
        }
        CovariateLaw::Sampler(sampler) => monte_carlo_moments(hs, sampler, mc),
    }
}

fn monte_carlo_moments<T: Scalar>(
    hs: &HatSystem<T>,
    sampler: &dyn PointSampler<T>,
    mc: &McConfig,
) -> Result<HatMoments<T>> {
    if mc.n_draws < 1000 {
        return Err(Error::InvalidArgument(format!(
            "Monte Carlo needs at least 1000 draws, got {}",
            mc.n_draws
        )));
    }
    if sampler.dim() != hs.x().ncols() {
        return Err(Error::DimensionMismatch(format!(
            "sampler draws {} coordinates, design has {}",
            sampler.dim(),
            hs.x().ncols()
        )));
    }
    let n = hs.n();
    let chunks = mc.n_draws.div_ceil(CHUNK);
    let parts: Vec<Result<(Vec<T>, DVector<T>)>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_rng(mc.seed, c as u64);
            let len = CHUNK.min(mc.n_draws - c * CHUNK);
            let mut norms = Vec::with_capacity(len);
            let mut sq = DVector::zeros(n);
            for _ in 0..len {
                let x = sampler.sample(&mut rng);
                let h = hs.hat_vector(x.as_slice())?;
                let h2 = h.component_mul(&h);
                norms.push(h2.sum());
                sq += h2;
            }
            Ok((norms, sq))
        })
        .collect();
    let mut norms = Vec::with_capacity(mc.n_draws);
    let mut sq = DVector::zeros(n);
    for part in parts {
        let (v, s) = part?;
        norms.extend(v);
        sq += s;
    }
    let m = count::<T>(mc.n_draws);
    let mean = pairwise_sum(&norms) / m;
    let dev: Vec<T> = norms.iter().map(|&v| (v - mean) * (v - mean)).collect();
    let var = pairwise_sum(&dev) / (m - T::one());
    let se = to_f64((var / m).sqrt());
    Ok(HatMoments {
        per_index: sq / m,
        e_norm2: mean,
        se,
        method: DofMethod::MonteCarlo {
            n_draws: mc.n_draws,
            se: 0.0,
        },
    })
}

/// Predictive degrees of freedom of a fitted procedure.
///
/// Least-squares, ridge and gradient-descent procedures under Gaussian
/// covariates use the exact second moments of `h*`; everything else is
/// Monte Carlo. OLS at `p = n` is refused as an interpolation threshold.
pub fn df_random<T: Scalar>(hs: &HatSystem<T>, law: CovariateLaw<'_, T>, mc: &McConfig) -> Result<DofReport<T>> {
    if let ProcedureSpec::Ols { subset } = hs.spec() {
        if subset.len() == hs.n() && matches!(law, CovariateLaw::Gaussian(_)) {
            return Err(Error::InterpolationThreshold { n: hs.n() });
        }
    }
    let moments = hat_moments(hs, law, mc)?;
    Ok(report_from_moments(hs, &moments, mc))
}

pub(crate) fn report_from_moments<T: Scalar>(hs: &HatSystem<T>, m: &HatMoments<T>, mc: &McConfig) -> DofReport<T> {
    let n = count::<T>(hs.n());
    let half_n = n * lit(0.5);
    let df_f = df_fixed(hs);
    let trace_hth_over_n = hs.h().norm_squared() / n;
    let df_r = df_f + half_n * (m.e_norm2 - trace_hth_over_n);
    let (method, flagged) = match m.method {
        DofMethod::MonteCarlo { n_draws, .. } => {
            let se = to_f64(half_n) * m.se;
            (
                DofMethod::MonteCarlo { n_draws, se },
                mc.se_tolerance.is_some_and(|tol| se > tol),
            )
        }
        other => (other, false),
    };
    DofReport {
        df_fixed: df_f,
        df_random: df_r,
        e_h_norm2: m.e_norm2,
        trace_hth_over_n,
        method,
        flagged,
    }
}

/// `tr[(X^T X)^{-1} B]` for full-column-rank `X`.
pub fn trace_inverse_gram<T: Scalar>(x: &DMatrix<T>, b: &DMatrix<T>) -> Result<T> {
    let gram = x.tr_mul(x);
    let inv = spd_inverse(&gram, "X^T X")?;
    Ok((inv * b).trace())
}

/// Subset least-squares `df_R` for a given design block and its covariance.
///
/// `p <= n`: `p/2 + (n/2) tr[(X^T X)^{-1} Sigma]`;
/// `p > n`: `n/2 + (n/2) tr[X^T (X X^T)^{-2} X Sigma]`.
/// At `p = n` the realised value is finite and returned; only its
/// expectation diverges (see [`df_approx`]).
pub fn df_random_ls_closed<T: Scalar>(x_s: &DMatrix<T>, sigma_s: &DMatrix<T>) -> Result<T> {
    let (n, p) = x_s.shape();
    check_sigma(sigma_s, p)?;
    let half_n = count::<T>(n) * lit(0.5);
    let svd = thin_svd(x_s);
    if svd.rank() < p.min(n) {
        return Err(Error::RankDeficient {
            procedure: if p <= n { "ols" } else { "min_norm" },
            rank: svd.rank(),
            needed: p.min(n),
        });
    }
    // Both regimes are tr(W Sigma W^T) with W = U Psi^{-1} V^T.
    let w = svd.reweighted(|s| T::one() / s);
    let quad = linear_moments(&w, sigma_s).sum();
    Ok(count::<T>(p.min(n)) * lit(0.5) + half_n * quad)
}

/// Ridge `df_R` through the spectrum of `X^T X = U Omega U^T` and `V = U^T Sigma U`.
pub fn df_random_ridge<T: Scalar>(x: &DMatrix<T>, sigma: &DMatrix<T>, lambda: T) -> Result<T> {
    if !(lambda > T::zero()) {
        return Err(Error::InvalidArgument(format!("ridge needs lambda > 0, got {lambda}")));
    }
    let (n, p) = x.shape();
    check_sigma(sigma, p)?;
    let eig = x.tr_mul(x).symmetric_eigen();
    // Eigenvalues at rounding level belong to the null space of X.
    let top = eig.eigenvalues.iter().fold(T::zero(), |acc, &v| acc.max(v));
    let tol = count::<T>(n.max(p)) * epsilon::<T>() * top;
    let nn = count::<T>(n);
    let two: T = lit(2.0);
    let mut acc = T::zero();
    for j in 0..p {
        let u = eig.eigenvectors.column(j);
        let v_jj = (sigma * u).dot(&u);
        let w = if eig.eigenvalues[j] > tol { eig.eigenvalues[j] } else { T::zero() };
        let denom = two * (w + lambda) * (w + lambda);
        acc += (w * w + (two * lambda + nn * v_jj) * w) / denom;
    }
    Ok(acc)
}

/// Closed-form increment `df_R(S1 + {j}) - df_R(S1)`.
///
/// `sigma_s2` is the covariance of `(X_S1, x_new)` with the new variable last.
pub fn df_increment<T: Scalar>(x_s1: &DMatrix<T>, x_new: &DVector<T>, sigma_s2: &DMatrix<T>) -> Result<T> {
    let (n, p) = x_s1.shape();
    if p >= n {
        return Err(Error::InvalidArgument(format!("increment needs |S1| < n, got {p} >= {n}")));
    }
    if x_new.len() != n {
        return Err(Error::DimensionMismatch("new column length must equal n".into()));
    }
    check_sigma(sigma_s2, p + 1)?;
    let sigma1 = sigma_s2.view((0, 0), (p, p)).into_owned();
    let cross = sigma_s2.view((0, p), (p, 1)).into_owned();
    let s_jj = sigma_s2[(p, p)];
    let (proj_coef, cond_var) = if p == 0 {
        (DVector::zeros(0), s_jj)
    } else {
        let inv = spd_inverse(&sigma1, "Sigma_S1")?;
        let coef = &inv * cross.column(0);
        let cv = s_jj - cross.column(0).dot(&coef);
        (coef, cv)
    };
    if !(cond_var > T::zero()) {
        return Err(Error::NotPositiveDefinite("Sigma_S2 is singular".into()));
    }
    let zeta = (x_new - x_s1 * &proj_coef) / cond_var.sqrt();
    let (hz, czz) = if p == 0 {
        (DVector::zeros(n), T::zero())
    } else {
        let gram_inv = spd_inverse(&x_s1.tr_mul(x_s1), "X_S1^T X_S1")?;
        let t = &gram_inv * x_s1.tr_mul(&zeta);
        (x_s1 * &t, (&sigma1 * &t).dot(&t))
    };
    let resid = zeta.dot(&(&zeta - hz));
    let scale = zeta.norm_squared().max(T::one());
    if resid <= lit::<T>(1e-12) * scale {
        return Err(Error::Collinear(to_f64(resid)));
    }
    let half: T = lit(0.5);
    Ok(half + count::<T>(n) * half * (czz + T::one()) / resid)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApproxFamily {
    /// Expectation under Gaussian covariates.
    GaussianExact,
    /// Large-`n` limit for equicorrelated (including isotropic) covariates.
    AsymptoticEquicorrelated,
}

/// Approximate `df_R` of a size-`p` least-squares model.
///
/// The equicorrelated form `(min(p,n)/2)(1 + n/|n-p|)` is an asymptotic
/// approximation; finite-`n` values scatter around it.
pub fn df_approx(n: usize, p: usize, family: ApproxFamily) -> Result<f64> {
    if p == n {
        return Err(Error::InterpolationThreshold { n });
    }
    let (nf, pf) = (n as f64, p as f64);
    match family {
        ApproxFamily::AsymptoticEquicorrelated => Ok(pf.min(nf) / 2.0 * (1.0 + nf / (nf - pf).abs())),
        ApproxFamily::GaussianExact => {
            if p + 1 < n {
                Ok(pf / 2.0 * (1.0 + nf / (nf - pf - 1.0)))
            } else if p > n + 1 {
                Ok(nf * (pf - 1.0) / (2.0 * (pf - nf - 1.0)))
            } else {
                Err(Error::OutOfRange {
                    n,
                    p,
                    reason: "Gaussian expectation needs p < n - 1 or p > n + 1".into(),
                })
            }
        }
    }
}

/// Expected one-step increment of the Gaussian `df_R` expectation at size `p`.
pub fn expected_increment_gaussian(n: usize, p: usize) -> Result<f64> {
    if p + 2 >= n {
        return Err(Error::OutOfRange {
            n,
            p,
            reason: "needs p < n - 2".into(),
        });
    }
    let (nf, pf) = (n as f64, p as f64);
    Ok(0.5 + nf * (nf - 1.0) / (2.0 * (nf - pf - 1.0) * (nf - pf - 2.0)))
}

/// Adaptive Simpson quadrature on `[a, b]`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        m: f64,
        fm: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (lm, flm, left) = simpson(f, a, fa, m, fm);
        let (rm, frm, right) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, fa, m, fm, lm, flm, left, tol / 2.0, depth - 1)
            + recurse(f, m, fm, b, fb, rm, frm, right, tol / 2.0, depth - 1)
    }
    let (fa, fb) = (f(a), f(b));
    let (m, fm, whole) = simpson(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, m, fm, whole, tol, 50)
}

/// `C_K = int_0^1 [K(z)^2 + (1 - K(z))^2] dz`.
pub fn weight_constant(k: &dyn Fn(f64) -> f64) -> Result<f64> {
    for i in 0..=1000 {
        let z = i as f64 / 1000.0;
        let v = k(z);
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidArgument(format!("K({z}) = {v} outside [0, 1]")));
        }
    }
    let g = |z: f64| {
        let v = k(z);
        v * v + (1.0 - v) * (1.0 - v)
    };
    // Split at 1/2 so the nearest-neighbour step is integrated exactly.
    Ok(adaptive_simpson(&g, 0.0, 0.5, 1e-13) + adaptive_simpson(&g, 0.5, 1.0, 1e-13))
}

/// Large-`n` limit of `df_R / n` for a weight scheme, `(C_K + 1) / 2`.
pub fn df_weight_limit(kernel: WeightKernel) -> f64 {
    df_weight_limit_fn(&|z| kernel.eval(z)).expect("built-in kernels map into [0, 1]")
}

pub fn df_weight_limit_fn(k: &dyn Fn(f64) -> f64) -> Result<f64> {
    Ok((weight_constant(k)? + 1.0) / 2.0)
}

/// Exact `E||h*||^2` for a weight scheme with `x* ~ Uniform(a, b)`.
pub fn weight_e_h_norm2_uniform(kernel: WeightKernel, nodes: &[f64], a: f64, b: f64) -> Result<f64> {
    let n = nodes.len();
    if n == 0 || a >= b || nodes[0] < a || nodes[n - 1] > b {
        return Err(Error::InvalidArgument("nodes must lie in a non-empty [a, b]".into()));
    }
    let ck = weight_constant(&|z| kernel.eval(z))?;
    let inner: f64 = nodes.windows(2).map(|w| w[1] - w[0]).sum();
    Ok(((nodes[0] - a) + (b - nodes[n - 1]) + ck * inner) / (b - a))
}

/// Local constant smoother `df_R(omega)` for `x* ~ Uniform(a, b)` in the interpolating band.
pub fn df_local_constant_closed(nodes: &[f64], omega: f64, a: f64, b: f64) -> Result<f64> {
    let n = nodes.len();
    if n < 2 {
        return Err(Error::InvalidArgument("need at least two nodes".into()));
    }
    if a >= b || nodes[0] < a || nodes[n - 1] > b {
        return Err(Error::InvalidArgument("nodes must lie in a non-empty [a, b]".into()));
    }
    let gaps: Vec<f64> = nodes.windows(2).map(|w| w[1] - w[0]).collect();
    if gaps.iter().any(|&g| g <= 0.0) {
        return Err(Error::InvalidArgument("nodes must be sorted and distinct".into()));
    }
    let widest = gaps.iter().cloned().fold(f64::MIN, f64::max);
    let narrowest = gaps.iter().cloned().fold(f64::MAX, f64::min);
    let slack = 1e-12 * (b - a);
    if omega < 0.5 * widest - slack || omega > narrowest + slack {
        return Err(Error::InvalidArgument(format!(
            "bandwidth {omega} outside [{}, {narrowest}]; use the Monte Carlo path",
            0.5 * widest
        )));
    }
    let nf = n as f64;
    Ok(nf + nf * (nodes[n - 1] - nodes[0]) / (4.0 * (b - a)) - nf * (nf - 1.0) * omega / (2.0 * (b - a)))
}

/// `df_R - df_F` computed three ways: directly, from squared covariances
/// `Cov(y_i, mu_hat | .) / sigma^2`, and from squared sensitivities of the
/// mean prediction to `mu_i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapCheck<T: Scalar> {
    pub direct: T,
    pub covariance: T,
    pub gdf: T,
}

pub fn df_gap_representation_check<T: Scalar>(
    hs: &HatSystem<T>,
    law: CovariateLaw<'_, T>,
    mc: &McConfig,
    sigma_eps2: T,
) -> Result<GapCheck<T>> {
    if !(sigma_eps2 > T::zero()) {
        return Err(Error::InvalidArgument("sigma_eps2 must be positive".into()));
    }
    let m = hat_moments(hs, law, mc)?;
    let n = hs.n();
    let nn = count::<T>(n);
    let half_n = nn * lit(0.5);
    let h = hs.h();
    let direct = half_n * (m.e_norm2 - h.norm_squared() / nn);

    // Cov(y_i, mu_hat* | x*) = sigma^2 h*_i and Cov(y_i, mu_hat_j) = sigma^2 h_ji.
    let s4 = sigma_eps2 * sigma_eps2;
    let mut cov_test = T::zero();
    let mut cov_train = T::zero();
    for i in 0..n {
        // E[(sigma^2 h*_i)^2] = sigma^4 E[h*_i^2]
        cov_test += s4 * m.per_index[i] / s4;
        for j in 0..n {
            let c = sigma_eps2 * h[(j, i)];
            cov_train += c * c / s4;
        }
    }
    let covariance = half_n * (cov_test - cov_train / nn);

    // d E(mu_hat_j) / d mu_i = h_ji, d E(mu_hat*) / d mu_i = h*_i.
    let mut sens_test = T::zero();
    let mut sens_train = T::zero();
    for i in 0..n {
        sens_test += m.per_index[i];
        for j in 0..n {
            sens_train += h[(j, i)] * h[(j, i)];
        }
    }
    let gdf = half_n * (sens_test - sens_train / nn);
    Ok(GapCheck {
        direct,
        covariance,
        gdf,
    })
}

/// `df_R` of least squares on `Z = X U` with covariate covariance `U^T Sigma U`.
pub fn df_linear_combination<T: Scalar>(x: &DMatrix<T>, u: &DMatrix<T>, sigma: &DMatrix<T>) -> Result<T> {
    if u.nrows() != x.ncols() || u.ncols() > x.ncols() {
        return Err(Error::DimensionMismatch("U must be p x s with s <= p".into()));
    }
    let z = x * u;
    let sz = u.transpose() * sigma * u;
    df_random_ls_closed(&z, &sz)
}

/// Approximate `df_R` of principal component regression on the first `k`
/// components, treating `U_k^T Sigma U_k` as the component covariance.
pub fn df_pcr<T: Scalar>(x: &DMatrix<T>, sigma: &DMatrix<T>, k: usize) -> Result<T> {
    let p = x.ncols();
    if k == 0 || k > p {
        return Err(Error::InvalidArgument(format!("k must lie in 1..={p}")));
    }
    let eig = x.tr_mul(x).symmetric_eigen();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let uk = select_columns(&eig.eigenvectors, &order[..k]);
    df_linear_combination(x, &uk, sigma)
}

/// Smallest eigenvalue helper for property checks on covariance blocks.
pub fn min_eigenvalue<T: Scalar>(m: &DMatrix<T>) -> T {
    sym_eigenvalues(m)[0]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{draw_design, make_covariance, CovKind};
    use crate::procedures::fit;
    use crate::sampling::{stream_rng, UniformSampler};
    use approx::assert_relative_eq;

    fn gaussian(n: usize, p: usize, seed: u64) -> DMatrix<f64> {
        draw_design(&DMatrix::identity(p, p), n, &mut stream_rng(seed, 0)).unwrap()
    }

    #[test]
    fn fixed_df_of_projection_and_interpolants() {
        let x = gaussian(20, 7, 1);
        let hs = fit(ProcedureSpec::Ols { subset: vec![0, 2, 4, 6] }, &x).unwrap();
        assert_relative_eq!(df_fixed(&hs), 4.0, epsilon = 1e-10);
        let hs = fit(ProcedureSpec::MinNorm { subset: (0..7).collect() }, &gaussian(5, 7, 2)).unwrap();
        assert_relative_eq!(df_fixed(&hs), 5.0, epsilon = 1e-10);
    }

    #[test]
    fn ridge_fixed_df_is_spectral() {
        let x = gaussian(12, 5, 3);
        let lambda = 2.5;
        let hs = fit(ProcedureSpec::Ridge { lambda }, &x).unwrap();
        let ev = sym_eigenvalues(&x.tr_mul(&x));
        let spectral: f64 = ev.iter().map(|w| w / (w + lambda)).sum();
        assert_relative_eq!(df_fixed(&hs), spectral, epsilon = 1e-10);
    }

    #[test]
    fn empirical_law_gives_df_fixed() {
        let x = gaussian(15, 4, 4);
        for spec in [ProcedureSpec::Ols { subset: vec![0, 1, 3] }, ProcedureSpec::Ridge { lambda: 1.0 }] {
            let hs = fit(spec, &x).unwrap();
            let r = df_random(&hs, CovariateLaw::Empirical, &McConfig::default()).unwrap();
            assert_relative_eq!(r.df_random, r.df_fixed, epsilon = 1e-10);
        }
    }

    #[test]
    fn min_norm_isotropic_closed_form() {
        let x = gaussian(6, 15, 5);
        let s2 = 2.5;
        let sigma = DMatrix::identity(15, 15) * s2;
        let hs = fit(ProcedureSpec::MinNorm { subset: (0..15).collect() }, &x).unwrap();
        let r = df_random(&hs, CovariateLaw::Gaussian(&sigma), &McConfig::default()).unwrap();
        let g = &x * x.transpose();
        let want = 3.0 + 3.0 * s2 * g.try_inverse().unwrap().trace();
        assert_relative_eq!(r.df_random, want, max_relative = 1e-10);
        assert_relative_eq!(df_random_ls_closed(&x, &sigma).unwrap(), want, max_relative = 1e-10);
        assert_eq!(r.method, DofMethod::ExactLs);
    }

    #[test]
    fn report_identity_holds() {
        let x = gaussian(10, 3, 6);
        let sigma = make_covariance(&CovKind::Equicorrelated(0.3), 3).unwrap();
        let hs = fit(ProcedureSpec::Ridge { lambda: 0.4 }, &x).unwrap();
        let r = df_random(&hs, CovariateLaw::Gaussian(&sigma), &McConfig::default()).unwrap();
        let rhs = r.df_fixed + 5.0 * (r.e_h_norm2 - r.trace_hth_over_n);
        assert_relative_eq!(r.df_random, rhs, epsilon = 1e-9);
        assert_relative_eq!(r.df_random, df_random_ridge(&x, &sigma, 0.4).unwrap(), epsilon = 1e-8);
    }

    #[test]
    fn ls_closed_at_square_identity() {
        // n/2 + (n/2) tr(I_n) with n = 4.
        let x = DMatrix::<f64>::identity(4, 4);
        assert_relative_eq!(df_random_ls_closed(&x, &DMatrix::identity(4, 4)).unwrap(), 10.0, epsilon = 1e-12);
        let hs = fit(ProcedureSpec::Ols { subset: (0..4).collect() }, &x).unwrap();
        let sigma = DMatrix::identity(4, 4);
        assert!(matches!(
            df_random(&hs, CovariateLaw::Gaussian(&sigma), &McConfig::default()),
            Err(Error::InterpolationThreshold { n: 4 })
        ));
    }

    #[test]
    fn ridge_limits() {
        let x = gaussian(15, 6, 7);
        let sigma = DMatrix::identity(6, 6);
        assert!(df_random_ridge(&x, &sigma, 1e12).unwrap() < 1e-8);
        let small = df_random_ridge(&x, &sigma, 1e-9).unwrap();
        assert!((small - df_random_ls_closed(&x, &sigma).unwrap()).abs() < 1e-4);
        assert!(df_random_ridge(&x, &sigma, 0.0).is_err());
    }

    #[test]
    fn ridge_df_decreases_in_lambda() {
        for (n, p, seed) in [(20, 10, 8), (20, 80, 9)] {
            let x = gaussian(n, p, seed);
            let sigma = DMatrix::identity(p, p);
            let vals: Vec<f64> = (0..50)
                .map(|k| 10f64.powf(-4.0 + 8.0 * k as f64 / 49.0))
                .map(|l| df_random_ridge(&x, &sigma, l).unwrap())
                .collect();
            assert!(vals.windows(2).all(|w| w[1] < w[0]));
        }
    }

    #[test]
    fn wide_ridge_can_be_simpler_than_narrow() {
        let x = gaussian(20, 80, 10);
        let sigma = DMatrix::identity(80, 80);
        let narrow = select_columns(&x, &(0..10).collect::<Vec<_>>());
        let lam = 1e-3;
        let wide = df_random_ridge(&x, &sigma, lam).unwrap();
        let hs = fit(ProcedureSpec::Ridge { lambda: lam }, &x).unwrap();
        let generic = df_random(&hs, CovariateLaw::Gaussian(&sigma), &McConfig::default()).unwrap();
        assert_relative_eq!(wide, generic.df_random, max_relative = 1e-8);
        let narrow_df = df_random_ridge(&narrow, &DMatrix::identity(10, 10), lam).unwrap();
        assert!(wide < narrow_df, "wide {wide} vs narrow {narrow_df}");
    }

    #[test]
    fn increment_matches_difference() {
        for seed in 0..20 {
            let sigma = make_covariance::<f64>(&CovKind::RandomCorrelation(seed), 6).unwrap();
            let x = draw_design(&sigma, 15, &mut stream_rng(seed, 1)).unwrap();
            let s1: Vec<usize> = vec![0, 1, 2, 3, 4];
            let x1 = select_columns(&x, &s1);
            let inc = df_increment(&x1, &x.column(5).into_owned(), &sigma).unwrap();
            let d1 = df_random_ls_closed(&x1, &principal_submatrix(&sigma, &s1)).unwrap();
            let d2 = df_random_ls_closed(&x, &sigma).unwrap();
            assert_relative_eq!(inc, d2 - d1, epsilon = 1e-8);
            assert!(inc > 0.5);
        }
    }

    #[test]
    fn increment_rejects_collinear_column() {
        let x = gaussian(10, 2, 11);
        let c = x.column(0) * 2.0 - x.column(1);
        let sigma = DMatrix::identity(3, 3);
        assert!(matches!(df_increment(&x, &c, &sigma), Err(Error::Collinear(_))));
    }

    #[test]
    fn approximation_formulas() {
        let eq = ApproxFamily::AsymptoticEquicorrelated;
        assert_relative_eq!(df_approx(20, 10, eq).unwrap(), 15.0);
        assert_relative_eq!(df_approx(20, 40, eq).unwrap(), 20.0);
        assert_relative_eq!(df_approx(20, 10, ApproxFamily::GaussianExact).unwrap(), 145.0 / 9.0);
        assert_relative_eq!(df_approx(20, 60, ApproxFamily::GaussianExact).unwrap(), 1180.0 / 78.0);
        assert!(matches!(df_approx(20, 20, eq), Err(Error::InterpolationThreshold { n: 20 })));
        assert!(df_approx(20, 19, ApproxFamily::GaussianExact).is_err());
        assert_relative_eq!(expected_increment_gaussian(20, 10).unwrap(), 0.5 + 380.0 / 144.0);
    }

    #[test]
    fn weight_limits() {
        assert_relative_eq!(df_weight_limit(WeightKernel::Constant), 1.0, epsilon = 1e-10);
        assert_relative_eq!(df_weight_limit(WeightKernel::Linear), 5.0 / 6.0, epsilon = 1e-10);
        assert_relative_eq!(df_weight_limit(WeightKernel::Quadratic), 13.0 / 15.0, epsilon = 1e-10);
        let cosine = (3.0 - 4.0 / std::f64::consts::PI) / 2.0;
        assert_relative_eq!(df_weight_limit(WeightKernel::Cosine), cosine, epsilon = 1e-10);
        assert!(df_weight_limit_fn(&|z| 2.0 - z).is_err());
    }

    #[test]
    fn local_constant_closed_values() {
        let n = 11;
        let nodes: Vec<f64> = (0..n).map(|i| i as f64 / 10.0).collect();
        let l = 0.1;
        assert_relative_eq!(df_local_constant_closed(&nodes, l / 2.0, 0.0, 1.0).unwrap(), 11.0, epsilon = 1e-10);
        assert_relative_eq!(df_local_constant_closed(&nodes, l, 0.0, 1.0).unwrap(), 0.75 * 11.0, epsilon = 1e-10);
        let shifted: Vec<f64> = nodes.iter().map(|v| v + 3.0).collect();
        assert_relative_eq!(
            df_local_constant_closed(&shifted, 0.07, 3.0, 4.0).unwrap(),
            df_local_constant_closed(&nodes, 0.07, 0.0, 1.0).unwrap(),
            epsilon = 1e-10
        );
        assert!(df_local_constant_closed(&nodes, 0.3, 0.0, 1.0).is_err());
    }

    #[test]
    fn local_constant_closed_matches_monte_carlo() {
        let nodes: Vec<f64> = (0..11).map(|i| i as f64 / 10.0).collect();
        let x = DMatrix::from_column_slice(11, 1, &nodes);
        let sampler = UniformSampler { a: 0.0, b: 1.0 };
        for omega in [0.05, 0.07, 0.09] {
            let hs = fit(ProcedureSpec::LocalConstant { omega, a: 0.0, b: 1.0 }, &x).unwrap();
            let r = df_random(&hs, CovariateLaw::Sampler(&sampler), &McConfig::with_seed(3)).unwrap();
            let closed = df_local_constant_closed(&nodes, omega, 0.0, 1.0).unwrap();
            assert!((r.df_random - closed).abs() < 3.0 * r.se() + 1e-12, "{omega}: {} vs {closed}", r.df_random);
        }
    }

    #[test]
    fn weight_scheme_monte_carlo_matches_exact_integral() {
        let nodes: Vec<f64> = (0..30).map(|i| (i as f64 / 29.0).powf(1.2)).collect();
        let x = DMatrix::from_column_slice(30, 1, &nodes);
        let sampler = UniformSampler { a: 0.0, b: 1.0 };
        for kernel in WeightKernel::ALL {
            let hs = fit(ProcedureSpec::WeightInterp { kernel, a: 0.0, b: 1.0 }, &x).unwrap();
            let r = df_random(&hs, CovariateLaw::Sampler(&sampler), &McConfig::with_seed(4)).unwrap();
            let exact = weight_e_h_norm2_uniform(kernel, &nodes, 0.0, 1.0).unwrap();
            let se = r.se() / 15.0;
            assert!((r.e_h_norm2 - exact).abs() < 4.0 * se + 1e-12, "{kernel:?}");
        }
    }

    #[test]
    fn monte_carlo_is_deterministic_and_se_is_reported() {
        let nodes: Vec<f64> = (0..21).map(|i| i as f64 / 20.0).collect();
        let x = DMatrix::from_column_slice(21, 1, &nodes);
        let hs = fit(ProcedureSpec::Spline { s: 2 }, &x).unwrap();
        let sampler = UniformSampler { a: 0.0, b: 1.0 };
        let mc = McConfig {
            n_draws: 5000,
            seed: 9,
            se_tolerance: Some(1e-9),
        };
        let a = df_random(&hs, CovariateLaw::Sampler(&sampler), &mc).unwrap();
        let b = df_random(&hs, CovariateLaw::Sampler(&sampler), &mc).unwrap();
        assert_eq!(a, b);
        assert!(a.flagged);
        assert!(a.se() > 0.0);
        let few = McConfig { n_draws: 10, ..mc };
        assert!(df_random(&hs, CovariateLaw::Sampler(&sampler), &few).is_err());
    }

    #[test]
    fn gap_representations_agree() {
        let x = gaussian(12, 5, 12);
        let sigma = DMatrix::identity(5, 5);
        let hs = fit(ProcedureSpec::Ols { subset: vec![0, 1, 2] }, &x).unwrap();
        let g = df_gap_representation_check(&hs, CovariateLaw::Gaussian(&sigma), &McConfig::default(), 0.7).unwrap();
        assert_relative_eq!(g.direct, g.covariance, epsilon = 1e-9);
        assert_relative_eq!(g.direct, g.gdf, epsilon = 1e-9);
        let r = df_random(&hs, CovariateLaw::Gaussian(&sigma), &McConfig::default()).unwrap();
        assert_relative_eq!(g.direct, r.df_random - r.df_fixed, epsilon = 1e-9);

        let xm = gaussian(6, 12, 13);
        let mn = fit(ProcedureSpec::MinNorm { subset: (0..12).collect() }, &xm).unwrap();
        let sig = DMatrix::identity(12, 12);
        let g = df_gap_representation_check(&mn, CovariateLaw::Gaussian(&sig), &McConfig::default(), 1.0).unwrap();
        let m = hat_moments(&mn, CovariateLaw::Gaussian(&sig), &McConfig::default()).unwrap();
        assert_relative_eq!(g.covariance, 3.0 * m.e_norm2 - 3.0, epsilon = 1e-9);
    }

    #[test]
    fn single_predictor_covariance_can_be_negative() {
        let x = DMatrix::from_column_slice(3, 1, &[1.0, -2.0, 0.5]);
        let hs = fit(ProcedureSpec::Ols { subset: vec![0] }, &x).unwrap();
        let h = hs.hat_vector(&[1.3]).unwrap();
        let sigma2 = 0.8;
        let cov: Vec<f64> = h.iter().map(|v| sigma2 * v).collect();
        assert!(cov[1] < 0.0);
        assert!(cov[1] * cov[1] > 0.0);
    }

    #[test]
    fn pcr_is_nondecreasing_and_dominated() {
        let x = gaussian(200, 6, 14);
        let sigma = make_covariance::<f64>(&CovKind::Equicorrelated(0.4), 6).unwrap();
        let full = df_random_ls_closed(&x, &sigma).unwrap();
        let vals: Vec<f64> = (1..=6).map(|k| df_pcr(&x, &sigma, k).unwrap()).collect();
        assert!(vals.windows(2).all(|w| w[1] >= w[0] - 1e-9));
        assert!(vals.iter().all(|&v| v <= full + 1e-9));
        assert_relative_eq!(vals[5], full, max_relative = 1e-9);
    }
}

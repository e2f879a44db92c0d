//! Training error, true Fixed-X and Random-X risks, and Random-X risk estimators.
//!
//! The central decomposition is `ErrR = ErrT + dB + (2/n) sigma^2 df_R`, where
//! `dB` is the excess bias. `dB` is estimated by the quadratic form
//! `delta = (y^T A y - sigma^2 tr A) / n`, which turns the LOOCV error into the
//! adjusted estimator `ErrR_hat = loocv + (sigma^2 / n) xi`.

use nalgebra::{DMatrix, DVector};

use crate::dof::{df_approx, ApproxFamily, DofReport};
use crate::error::{Error, Result};
use crate::linalg::{select_columns, spd_inverse, symmetrize};
use crate::model::{Dataset, MeanFunction, MeanKind};
use crate::procedures::{HatSystem, ProcedureSpec};
use crate::sampling::{monte_carlo_mean, standard_normal, McEstimate, PointSampler};
use crate::scalar::{count, lit, Scalar};

/// Leverages closer to one than this make leave-one-out quantities undefined.
pub const LEVERAGE_GUARD: f64 = 1e-10;

/// Smallest accepted Monte Carlo size for the true risks.
pub const MIN_TRUTH_DRAWS: usize = 100;

/// `(1/n) ||y - y_hat||^2`.
pub fn training_error<T: Scalar>(y: &DVector<T>, yhat: &DVector<T>) -> Result<T> {
    if y.len() != yhat.len() || y.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "y has {} entries, fitted values {}",
            y.len(),
            yhat.len()
        )));
    }
    Ok((y - yhat).norm_squared() / count(y.len()))
}

/// Fixed-X prediction error `sigma^2 + ||(H - I) mu||^2 / n + sigma^2 tr(H^T H) / n`.
pub fn err_fixed_true<T: Scalar>(hs: &HatSystem<T>, mu: &DVector<T>, sigma_eps2: T) -> Result<T> {
    hs.check_response(mu)?;
    let n = count::<T>(hs.n());
    let bias = (hs.h() * mu - mu).norm_squared() / n;
    Ok(sigma_eps2 + bias + sigma_eps2 * hs.h().norm_squared() / n)
}

fn check_draws(n_draws: usize) -> Result<()> {
    if n_draws < MIN_TRUTH_DRAWS {
        return Err(Error::InvalidArgument(format!(
            "true risks need at least {MIN_TRUTH_DRAWS} Monte Carlo draws, got {n_draws}"
        )));
    }
    Ok(())
}

fn check_sampler<T: Scalar>(hs: &HatSystem<T>, sampler: &dyn PointSampler<T>) -> Result<()> {
    if sampler.dim() != hs.x().ncols() {
        return Err(Error::DimensionMismatch(format!(
            "sampler draws {} coordinates, design has {}",
            sampler.dim(),
            hs.x().ncols()
        )));
    }
    Ok(())
}

fn truth<T: Scalar>(data: &Dataset<T>) -> Result<(&DVector<T>, &MeanFunction<T>)> {
    match (&data.mu, &data.mean_fn) {
        (Some(mu), Some(f)) => Ok((mu, f)),
        _ => Err(Error::Missing("true mean function (simulation data only)".into())),
    }
}

/// `ErrR_{X,y} = E[(y* - mu_hat*)^2 | X, y]` by Monte Carlo over `(x*, y*)`.
pub fn err_random_true<T: Scalar>(
    hs: &HatSystem<T>,
    data: &Dataset<T>,
    sampler: &dyn PointSampler<T>,
    n_draws: usize,
    seed: u64,
) -> Result<McEstimate<T>> {
    check_draws(n_draws)?;
    check_sampler(hs, sampler)?;
    hs.check_response(&data.y)?;
    let (_, f) = truth(data)?;
    let sd = data.sigma_eps2.sqrt();
    monte_carlo_mean(n_draws, seed, |rng| {
        let x = sampler.sample(rng);
        let y_star = f.eval(x.as_slice()) + sd * standard_normal::<T>(rng);
        let r = y_star - hs.hat_vector(x.as_slice())?.dot(&data.y);
        Ok(r * r)
    })
}

/// `ErrR_X = sigma^2 + E(mu* - h*^T mu)^2 + sigma^2 E||h*||^2`, the average of
/// [`err_random_true`] over the training noise.
pub fn err_random_expected<T: Scalar>(
    hs: &HatSystem<T>,
    mu: &DVector<T>,
    mean_fn: &MeanFunction<T>,
    sigma_eps2: T,
    sampler: &dyn PointSampler<T>,
    n_draws: usize,
    seed: u64,
) -> Result<McEstimate<T>> {
    check_draws(n_draws)?;
    check_sampler(hs, sampler)?;
    hs.check_response(mu)?;
    monte_carlo_mean(n_draws, seed, |rng| {
        let x = sampler.sample(rng);
        let h = hs.hat_vector(x.as_slice())?;
        let b = mean_fn.eval(x.as_slice()) - h.dot(mu);
        Ok(sigma_eps2 + b * b + sigma_eps2 * h.norm_squared())
    })
}

/// Embedded coefficients `b` with `h*^T v = x*^T b` for a least-squares-type procedure.
fn embedded<T: Scalar>(hs: &HatSystem<T>, v: &DVector<T>) -> Result<DVector<T>> {
    hs.check_response(v)?;
    hs.coefficients(v).ok_or_else(|| {
        Error::InvalidArgument(format!("{} has no coefficient representation", hs.spec().name()))
    })
}

/// Excess bias `E(mu* - h*^T mu)^2 - ||mu - H mu||^2 / n`, first term by Monte Carlo.
pub fn excess_bias_true<T: Scalar>(
    hs: &HatSystem<T>,
    mu: &DVector<T>,
    mean_fn: &MeanFunction<T>,
    sampler: &dyn PointSampler<T>,
    n_draws: usize,
    seed: u64,
) -> Result<McEstimate<T>> {
    check_draws(n_draws)?;
    check_sampler(hs, sampler)?;
    hs.check_response(mu)?;
    let in_sample = (mu - hs.h() * mu).norm_squared() / count(hs.n());
    let out = monte_carlo_mean(n_draws, seed, |rng| {
        let x = sampler.sample(rng);
        let b = mean_fn.eval(x.as_slice()) - hs.hat_vector(x.as_slice())?.dot(mu);
        Ok(b * b)
    })?;
    Ok(McEstimate {
        value: out.value - in_sample,
        ..out
    })
}

/// `(E mu*^2, E x* mu*)` for `x* ~ N(0, Sigma)`.
///
/// Available for a linear mean under any `Sigma`, and for the exponential
/// mean when `Sigma = I`.
pub fn mean_moments<T: Scalar>(mean_fn: &MeanFunction<T>, sigma: &DMatrix<T>) -> Result<(T, DVector<T>)> {
    let d = mean_fn.beta.len();
    if sigma.shape() != (d, d) {
        return Err(Error::DimensionMismatch("beta and Sigma must have matching size".into()));
    }
    let beta = &mean_fn.beta;
    match mean_fn.kind {
        MeanKind::Linear => {
            let c = sigma * beta;
            Ok((c.dot(beta), c))
        }
        MeanKind::NonlinearExp => {
            let tol = lit::<T>(1e-12);
            if (sigma - DMatrix::identity(d, d)).amax() > tol {
                return Err(Error::InvalidArgument(
                    "exponential mean moments need Sigma = I".into(),
                ));
            }
            let e = |v: f64| lit::<T>(v.exp());
            let e_mu2 = beta.norm_squared() * (e(0.5) - e(0.25));
            Ok((e_mu2, beta * (e(0.125) * lit(0.5))))
        }
    }
}

/// `E(mu* - x*^T b)^2` for the coefficients `b` of a procedure applied to `v`.
fn misfit<T: Scalar>(hs: &HatSystem<T>, v: &DVector<T>, mean_fn: &MeanFunction<T>, sigma: &DMatrix<T>) -> Result<T> {
    let d = hs.x().ncols();
    if mean_fn.beta.len() != d {
        return Err(Error::DimensionMismatch("beta must match the design".into()));
    }
    let (e_mu2, c) = mean_moments(mean_fn, sigma)?;
    let b = embedded(hs, v)?;
    Ok(e_mu2 - lit::<T>(2.0) * c.dot(&b) + (sigma * &b).dot(&b))
}

/// Exact `ErrR_{X,y} = sigma^2 + E(mu* - x*^T b)^2` with `b` the fitted
/// coefficients and `x* ~ N(0, Sigma)`; see [`mean_moments`] for the supported means.
pub fn err_random_analytic<T: Scalar>(
    hs: &HatSystem<T>,
    y: &DVector<T>,
    mean_fn: &MeanFunction<T>,
    sigma: &DMatrix<T>,
    sigma_eps2: T,
) -> Result<T> {
    Ok(sigma_eps2 + misfit(hs, y, mean_fn, sigma)?)
}

/// Exact excess bias `E(mu* - h*^T mu)^2 - ||mu - H mu||^2 / n` given the
/// training means `mu`.
pub fn excess_bias_analytic<T: Scalar>(
    hs: &HatSystem<T>,
    mu: &DVector<T>,
    mean_fn: &MeanFunction<T>,
    sigma: &DMatrix<T>,
) -> Result<T> {
    let in_sample = (mu - hs.h() * mu).norm_squared() / count(hs.n());
    Ok(misfit(hs, mu, mean_fn, sigma)? - in_sample)
}

/// `ErrT + (2/n) sigma_hat^2 df_R` with `sigma_hat^2 = n ErrT / (n - p)`.
pub fn err_tilde_from<T: Scalar>(err_train: T, n: usize, p: usize, df_r: T) -> Result<T> {
    if p >= n {
        return Err(Error::OutOfRange {
            n,
            p,
            reason: "the C_p-type estimator needs p < n".into(),
        });
    }
    let nn = count::<T>(n);
    let s2 = nn * err_train / count(n - p);
    Ok(err_train + lit::<T>(2.0) * s2 * df_r / nn)
}

fn ols_full<T: Scalar>(x_s: &DMatrix<T>) -> Result<HatSystem<T>> {
    HatSystem::fit(
        ProcedureSpec::Ols {
            subset: (0..x_s.ncols()).collect(),
        },
        x_s,
    )
}

/// C_p-type estimator of `ErrR_X` for OLS on `x_s`. Returns 0 when the fit is
/// exact, where the variance estimate degenerates.
pub fn err_tilde<T: Scalar>(x_s: &DMatrix<T>, y: &DVector<T>, df_r: T) -> Result<T> {
    let (n, p) = x_s.shape();
    if p >= n {
        return err_tilde_from(T::zero(), n, p, df_r);
    }
    let hs = ols_full(x_s)?;
    let et = training_error(y, &hs.fitted(y)?)?;
    err_tilde_from(et, n, p, df_r)
}

/// U-type variant: [`err_tilde`] with `df_R` replaced by its Gaussian expectation
/// `(p/2)(1 + n/(n - p - 1))`.
pub fn err_tilde_u<T: Scalar>(x_s: &DMatrix<T>, y: &DVector<T>) -> Result<T> {
    let (n, p) = x_s.shape();
    if p + 1 >= n {
        return Err(Error::OutOfRange {
            n,
            p,
            reason: "the U-type estimator needs p < n - 1".into(),
        });
    }
    let df = df_approx(n, p, ApproxFamily::GaussianExact)?;
    err_tilde(x_s, y, lit(df))
}

/// `1 - h_ii`, refusing leverages numerically equal to one.
pub fn complement_leverages<T: Scalar>(h: &DMatrix<T>) -> Result<DVector<T>> {
    let guard = lit::<T>(LEVERAGE_GUARD);
    let mut out = DVector::zeros(h.nrows());
    for i in 0..h.nrows() {
        let c = T::one() - h[(i, i)];
        if !(c > guard) {
            return Err(Error::InterpolationLeverage {
                index: i + 1,
                leverage: crate::scalar::to_f64(h[(i, i)]),
            });
        }
        out[i] = c;
    }
    Ok(out)
}

fn min_norm_design<T: Scalar>(hs: &HatSystem<T>) -> Option<DMatrix<T>> {
    match hs.spec() {
        ProcedureSpec::MinNorm { subset } => Some(select_columns(hs.x(), subset)),
        _ => None,
    }
}

/// `((X X^T)^{-1}, diag of it)` for a design with `p > n`.
fn gram_inverse<T: Scalar>(x_s: &DMatrix<T>) -> Result<(DMatrix<T>, DVector<T>)> {
    let mut g = x_s * x_s.transpose();
    symmetrize(&mut g);
    let gi = spd_inverse(&g, "X X^T")?;
    let diag = gi.diagonal();
    Ok((gi, diag))
}

/// Leave-one-out error `(1/n) sum [(y_i - h_i^T y) / (1 - h_ii)]^2`.
///
/// For minimum-norm least squares every leverage is one and the error is the
/// ridgeless limit `(1/n) sum [(G^{-1} y)_i / (G^{-1})_ii]^2`, `G = X_S X_S^T`.
pub fn loocv_error<T: Scalar>(hs: &HatSystem<T>, y: &DVector<T>) -> Result<T> {
    hs.check_response(y)?;
    let n = count::<T>(hs.n());
    if let Some(x_s) = min_norm_design(hs) {
        let (gi, diag) = gram_inverse(&x_s)?;
        let z = gi * y;
        return Ok(z.component_div(&diag).norm_squared() / n);
    }
    let c = complement_leverages(hs.h())?;
    let r = y - hs.h() * y;
    Ok(r.component_div(&c).norm_squared() / n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Under,
    Over,
}

/// Quadratic form behind the excess-bias estimator.
#[derive(Debug, Clone)]
pub struct AMatrix<T: Scalar> {
    pub a: DMatrix<T>,
    pub trace: T,
    pub regime: Regime,
}

impl<T: Scalar> AMatrix<T> {
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    /// `y^T A y`.
    pub fn quadratic_form(&self, y: &DVector<T>) -> Result<T> {
        if y.len() != self.n() {
            return Err(Error::DimensionMismatch(format!(
                "y has {} entries, A is {} x {}",
                y.len(),
                self.n(),
                self.n()
            )));
        }
        Ok((&self.a * y).dot(y))
    }
}

/// `A = (I - H)^T D (I - H)`, `D = diag(1/(1 - h_ii)^2 - 1)`.
pub fn a_matrix_under<T: Scalar>(h: &DMatrix<T>) -> Result<AMatrix<T>> {
    if !h.is_square() {
        return Err(Error::DimensionMismatch("hat matrix must be square".into()));
    }
    let n = h.nrows();
    let c = complement_leverages(h)?;
    let m = DMatrix::identity(n, n) - h;
    let mut dm = m.clone();
    for i in 0..n {
        let di = T::one() / (c[i] * c[i]) - T::one();
        dm.row_mut(i).scale_mut(di);
    }
    let mut a = m.tr_mul(&dm);
    symmetrize(&mut a);
    let trace = a.trace();
    Ok(AMatrix {
        a,
        trace,
        regime: Regime::Under,
    })
}

/// `A = G^{-1} diag(1 / (G^{-1})_ii^2) G^{-1}` with `G = X_S X_S^T`.
pub fn a_matrix_over<T: Scalar>(x_s: &DMatrix<T>) -> Result<AMatrix<T>> {
    let (n, p) = x_s.shape();
    if p <= n {
        return Err(Error::OutOfRange {
            n,
            p,
            reason: "the overparameterized A needs p > n".into(),
        });
    }
    let (gi, diag) = gram_inverse(x_s)?;
    let mut scaled = gi.clone();
    for i in 0..n {
        scaled.row_mut(i).scale_mut(T::one() / (diag[i] * diag[i]));
    }
    let mut a = &gi * scaled;
    symmetrize(&mut a);
    let trace = a.trace();
    Ok(AMatrix {
        a,
        trace,
        regime: Regime::Over,
    })
}

/// Regime implied by the procedure: minimum-norm fits are overparameterized.
pub fn regime_of<T: Scalar>(hs: &HatSystem<T>) -> Regime {
    if min_norm_design(hs).is_some() {
        Regime::Over
    } else {
        Regime::Under
    }
}

/// The A matrix of a fitted procedure; OLS at `p = n` is an interpolation threshold.
pub fn a_matrix<T: Scalar>(hs: &HatSystem<T>) -> Result<AMatrix<T>> {
    if let ProcedureSpec::Ols { subset } = hs.spec() {
        if subset.len() == hs.n() {
            return Err(Error::InterpolationThreshold { n: hs.n() });
        }
    }
    match min_norm_design(hs) {
        Some(x_s) => a_matrix_over(&x_s),
        None => a_matrix_under(hs.h()),
    }
}

/// `delta = (y^T A y - sigma^2 tr A) / n`; negative values are possible.
pub fn delta_hat<T: Scalar>(am: &AMatrix<T>, y: &DVector<T>, sigma_eps2: T) -> Result<T> {
    let yay = am.quadratic_form(y)?;
    Ok((yay - sigma_eps2 * am.trace) / count(am.n()))
}

/// Per-observation form `(1/n) sum [(y_i - mu_hat_i)^2 - (1 - h_ii) sigma^2] (1/(1 - h_ii)^2 - 1)`.
pub fn delta_hat_per_index<T: Scalar>(hs: &HatSystem<T>, y: &DVector<T>, sigma_eps2: T) -> Result<T> {
    hs.check_response(y)?;
    let c = complement_leverages(hs.h())?;
    let r = y - hs.h() * y;
    let mut acc = T::zero();
    for i in 0..hs.n() {
        let w = T::one() / (c[i] * c[i]) - T::one();
        acc += (r[i] * r[i] - c[i] * sigma_eps2) * w;
    }
    Ok(acc / count(hs.n()))
}

/// `max(delta, 0)`.
pub fn delta_plus<T: Scalar>(delta: T) -> T {
    if delta > T::zero() {
        delta
    } else {
        T::zero()
    }
}

/// `delta` when nonnegative, otherwise `(y^T A y)^2 / (n [y^T A y + sigma^2 tr A])`;
/// zero when both quadratic forms vanish.
pub fn delta_plusplus<T: Scalar>(delta: T, y_a_y: T, trace_a: T, sigma_eps2: T, n: usize) -> T {
    if delta >= T::zero() {
        return delta;
    }
    let denom = count::<T>(n) * (y_a_y + sigma_eps2 * trace_a);
    if denom > T::zero() {
        y_a_y * y_a_y / denom
    } else {
        T::zero()
    }
}

/// The adjusted LOOCV estimator and its parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrHat<T: Scalar> {
    /// `ErrT + delta + (2/n) sigma^2 df_R`.
    pub value: T,
    /// `loocv + (sigma^2/n) xi`; equal to `value` up to rounding.
    pub via_loocv: T,
    /// `2 df_R - tr A`.
    pub xi: T,
    pub delta: T,
    pub loocv: T,
    pub err_train: T,
    pub y_a_y: T,
    pub trace_a: T,
    pub sigma_eps2: T,
    pub n: usize,
}

impl<T: Scalar> ErrHat<T> {
    fn penalty(&self) -> T {
        self.value - self.err_train - self.delta
    }

    /// Estimator with `delta` replaced by `max(delta, 0)`.
    pub fn plus(&self) -> T {
        self.err_train + delta_plus(self.delta) + self.penalty()
    }

    /// Estimator with the smooth correction `delta_plusplus`.
    pub fn plusplus(&self) -> T {
        let d = delta_plusplus(self.delta, self.y_a_y, self.trace_a, self.sigma_eps2, self.n);
        self.err_train + d + self.penalty()
    }
}

/// `ErrR_hat = ErrT + delta + (2/n) sigma^2 df_R`, also computed as `loocv + (sigma^2/n) xi`.
pub fn err_hat<T: Scalar>(
    am: &AMatrix<T>,
    hs: &HatSystem<T>,
    y: &DVector<T>,
    sigma_eps2: T,
    df_r: T,
) -> Result<ErrHat<T>> {
    if am.regime != regime_of(hs) || am.n() != hs.n() {
        return Err(Error::InvalidArgument("A matrix does not belong to this procedure".into()));
    }
    let n = hs.n();
    let nn = count::<T>(n);
    let err_train = training_error(y, &hs.fitted(y)?)?;
    let y_a_y = am.quadratic_form(y)?;
    let delta = (y_a_y - sigma_eps2 * am.trace) / nn;
    let two = lit::<T>(2.0);
    let value = err_train + delta + two * sigma_eps2 * df_r / nn;
    let xi = two * df_r - am.trace;
    let loocv = loocv_error(hs, y)?;
    Ok(ErrHat {
        value,
        via_loocv: loocv + sigma_eps2 * xi / nn,
        xi,
        delta,
        loocv,
        err_train,
        y_a_y,
        trace_a: am.trace,
        sigma_eps2,
        n,
    })
}

/// `xi = 2 df_R + n - p - sum 1/(1 - h_ii)` for OLS with `p < n`.
pub fn xi_ols_under<T: Scalar>(hs: &HatSystem<T>, df_r: T) -> Result<T> {
    let p = match hs.spec() {
        ProcedureSpec::Ols { subset } if subset.len() < hs.n() => subset.len(),
        _ => return Err(Error::InvalidArgument("needs OLS with p < n".into())),
    };
    let c = complement_leverages(hs.h())?;
    let inv: T = c.iter().fold(T::zero(), |acc, &v| acc + T::one() / v);
    Ok(lit::<T>(2.0) * df_r + count::<T>(hs.n()) - count::<T>(p) - inv)
}

/// `E Var(y* - mu_hat* | x*) - (1/n) sum Var(e_i^{(-i)})`, which equals
/// `(sigma^2 / n) xi` for any linear smoother with leverages below one.
pub fn loo_variance_gap<T: Scalar>(hs: &HatSystem<T>, e_h_norm2: T, sigma_eps2: T) -> Result<T> {
    let n = hs.n();
    let c = complement_leverages(hs.h())?;
    let m = DMatrix::identity(n, n) - hs.h();
    let mut acc = T::zero();
    for i in 0..n {
        acc += m.row(i).norm_squared() / (c[i] * c[i]);
    }
    Ok(sigma_eps2 * (T::one() + e_h_norm2) - sigma_eps2 * acc / count(n))
}

/// Closed-form expectation of `xi` built on [`leverage_moments`]:
/// OLS (`5 < p < n - 2`) or minimum-norm least squares (`p > n + 1`).
///
/// The overparameterized value is exact for `N(0, I)` rows. The
/// underparameterized one inherits the leverage lemma; for `N(0, I)` rows
/// without an intercept see [`xi_expectation_gaussian`].
pub fn xi_expectation_closed(n: usize, p: usize, regime: Regime) -> Result<f64> {
    let (nf, pf) = (n as f64, p as f64);
    match regime {
        Regime::Under => {
            if !(p > 5 && p + 2 < n) {
                return Err(Error::OutOfRange {
                    n,
                    p,
                    reason: "needs 5 < p < n - 2".into(),
                });
            }
            let num = 2.0 * nf * nf - 3.0 * nf * pf - 5.0 * nf + 3.0 * pf + 3.0;
            Ok(num / ((nf - pf - 2.0) * (nf - pf - 1.0)))
        }
        Regime::Over => {
            if p <= n + 1 {
                return Err(Error::OutOfRange {
                    n,
                    p,
                    reason: "needs p > n + 1".into(),
                });
            }
            Ok(nf * (pf - 1.0) / ((pf - nf - 1.0) * (pf - nf)))
        }
    }
}

/// Leverage-lemma value `E[1/(1 - h_ii)] = ((n-1)/n) (n-3)/(n-p-2)`, `5 < p < n - 2`.
///
/// The lemma rests on the leverage density of a design with an intercept
/// column (`h_ii > 1/n`); [`leverage_moments_gaussian`] gives the moments for
/// `N(0, Sigma)` rows without one.
pub fn leverage_inverse_mean(n: usize, p: usize) -> Result<f64> {
    if !(p > 5 && p + 2 < n) {
        return Err(Error::OutOfRange {
            n,
            p,
            reason: "needs 5 < p < n - 2".into(),
        });
    }
    let (nf, pf) = (n as f64, p as f64);
    Ok((nf - 1.0) / nf * (nf - 3.0) / (nf - pf - 2.0))
}

/// `Var[1/(1 - h_ii)] = ((n-1)/n)^2 2(p-1)(n-3) / ((n-p-4)(n-p-2)^2)`, `5 < p < n - 4`.
pub fn leverage_inverse_variance(n: usize, p: usize) -> Result<f64> {
    if !(p > 5 && p + 4 < n) {
        return Err(Error::OutOfRange {
            n,
            p,
            reason: "needs 5 < p < n - 4".into(),
        });
    }
    let (nf, pf) = (n as f64, p as f64);
    let r = (nf - 1.0) / nf;
    Ok(r * r * 2.0 * (pf - 1.0) * (nf - 3.0) / ((nf - pf - 4.0) * (nf - pf - 2.0).powi(2)))
}

/// `(mean, variance)` of the inverse leverage complement, leverage-lemma form.
pub fn leverage_moments(n: usize, p: usize) -> Result<(f64, f64)> {
    Ok((leverage_inverse_mean(n, p)?, leverage_inverse_variance(n, p)?))
}

/// `(mean, variance)` of `1/(1 - h_ii)` for OLS on `N(0, Sigma)` rows, where
/// `1 - h_ii ~ Beta((n-p)/2, p/2)`: mean `(n-2)/(n-p-2)`, second moment
/// `(n-2)(n-4)/((n-p-2)(n-p-4))`. Needs `p < n - 4`.
pub fn leverage_moments_gaussian(n: usize, p: usize) -> Result<(f64, f64)> {
    if !(p >= 1 && p + 4 < n) {
        return Err(Error::OutOfRange {
            n,
            p,
            reason: "needs 1 <= p < n - 4".into(),
        });
    }
    let (nf, pf) = (n as f64, p as f64);
    let mean = (nf - 2.0) / (nf - pf - 2.0);
    let second = (nf - 2.0) * (nf - 4.0) / ((nf - pf - 2.0) * (nf - pf - 4.0));
    Ok((mean, second - mean * mean))
}

/// `E xi` for least squares on `N(0, I)` rows without an intercept:
/// `p (1 + n/(n-p-1)) - n (n-2)/(n-p-2) + n - p` below the threshold
/// (`p < n - 2`), and the closed form of [`xi_expectation_closed`] above it.
pub fn xi_expectation_gaussian(n: usize, p: usize, regime: Regime) -> Result<f64> {
    match regime {
        Regime::Over => xi_expectation_closed(n, p, regime),
        Regime::Under => {
            if !(p >= 1 && p + 2 < n) {
                return Err(Error::OutOfRange {
                    n,
                    p,
                    reason: "needs 1 <= p < n - 2".into(),
                });
            }
            let (nf, pf) = (n as f64, p as f64);
            Ok(pf * (1.0 + nf / (nf - pf - 1.0)) - nf * (nf - 2.0) / (nf - pf - 2.0) + nf - pf)
        }
    }
}

/// Estimators of `ErrR_X`; `None` where the estimator is undefined.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimators<T: Scalar> {
    pub cp_tilde: Option<T>,
    pub loocv: Option<T>,
    pub err_hat: Option<T>,
    pub err_hat_plus: Option<T>,
    pub err_hat_plusplus: Option<T>,
}

impl<T: Scalar> Default for Estimators<T> {
    fn default() -> Self {
        Self {
            cp_tilde: None,
            loocv: None,
            err_hat: None,
            err_hat_plus: None,
            err_hat_plusplus: None,
        }
    }
}

impl<T: Scalar> Estimators<T> {
    pub const NAMES: [&'static str; 5] = ["cp_tilde", "loocv", "err_hat", "err_hat_plus", "err_hat_plusplus"];

    pub fn get(&self, name: &str) -> Option<T> {
        match name {
            "cp_tilde" => self.cp_tilde,
            "loocv" => self.loocv,
            "err_hat" => self.err_hat,
            "err_hat_plus" => self.err_hat_plus,
            "err_hat_plusplus" => self.err_hat_plusplus,
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiskReport<T: Scalar> {
    pub err_train: T,
    pub err_fixed: Option<T>,
    pub err_random_true: Option<McEstimate<T>>,
    pub excess_bias_true: Option<McEstimate<T>>,
    pub df_fixed: T,
    pub df_random: T,
    pub xi: Option<T>,
    pub estimators: Estimators<T>,
}

/// Monte Carlo settings for the true risks in [`risk_report`].
#[derive(Clone, Copy)]
pub struct TruthConfig<'a, T: Scalar> {
    pub sampler: &'a dyn PointSampler<T>,
    pub n_draws: usize,
    pub seed: u64,
}

/// Keeps numerical failures as undefined cells and propagates everything else.
fn defined<T>(r: Result<T>) -> Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(e) if e.is_numerical() || matches!(e, Error::OutOfRange { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// All risk quantities of a fitted procedure on `data`.
///
/// True risks are filled in when the dataset carries its generating mean and
/// `truth` is given.
pub fn risk_report<T: Scalar>(
    hs: &HatSystem<T>,
    data: &Dataset<T>,
    dof: &DofReport<T>,
    truth_cfg: Option<TruthConfig<'_, T>>,
) -> Result<RiskReport<T>> {
    let y = &data.y;
    let s2 = data.sigma_eps2;
    let err_train = training_error(y, &hs.fitted(y)?)?;
    let mut est = Estimators::default();
    if let ProcedureSpec::Ols { subset } = hs.spec() {
        est.cp_tilde = defined(err_tilde_from(err_train, hs.n(), subset.len(), dof.df_random))?;
    }
    est.loocv = defined(loocv_error(hs, y))?;
    let mut xi = None;
    if let Some(am) = defined(a_matrix(hs))? {
        let eh = err_hat(&am, hs, y, s2, dof.df_random)?;
        xi = Some(eh.xi);
        est.err_hat = Some(eh.value);
        est.err_hat_plus = Some(eh.plus());
        est.err_hat_plusplus = Some(eh.plusplus());
    }
    let (mut err_fixed, mut err_random, mut excess) = (None, None, None);
    if let (Some(mu), Some(f)) = (&data.mu, &data.mean_fn) {
        err_fixed = Some(err_fixed_true(hs, mu, s2)?);
        if let Some(t) = truth_cfg {
            err_random = Some(err_random_true(hs, data, t.sampler, t.n_draws, t.seed)?);
            excess = Some(excess_bias_true(hs, mu, f, t.sampler, t.n_draws, t.seed)?);
        }
    }
    Ok(RiskReport {
        err_train,
        err_fixed,
        err_random_true: err_random,
        excess_bias_true: excess,
        df_fixed: dof.df_fixed,
        df_random: dof.df_random,
        xi,
        estimators: est,
    })
}

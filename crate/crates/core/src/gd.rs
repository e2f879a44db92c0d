//! Gradient descent for least squares in the overparameterized regime and the
//! interpolants it converges to.
//!
//! With `X = U Psi V1^T` and `V2` spanning the null space of `X`, iterates
//! started at `beta0` converge to `beta_hat + V2 V2^T beta0`, where `beta_hat`
//! is the minimum-norm solution.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{thin_svd, ThinSvd};
use crate::scalar::{count, lit, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub enum FProvenance<T: Scalar> {
    Zero,
    /// Per-column simple regression on `subset`, shrunk by `theta`.
    SimpleRegression { subset: Vec<usize>, theta: Vec<T> },
    Custom,
}

/// Initialisation map `beta0 = F y`, `F: p x n`, depending on `X` only.
#[derive(Debug, Clone, PartialEq)]
pub struct FMatrix<T: Scalar> {
    pub f: DMatrix<T>,
    pub provenance: FProvenance<T>,
}

impl<T: Scalar> FMatrix<T> {
    pub fn zero(p: usize, n: usize) -> Self {
        Self {
            f: DMatrix::zeros(p, n),
            provenance: FProvenance::Zero,
        }
    }

    pub fn custom(f: DMatrix<T>) -> Self {
        Self {
            f,
            provenance: FProvenance::Custom,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GDConfig<T: Scalar> {
    pub alpha: T,
    pub max_iter: usize,
    /// Stop once `||beta_k - beta_{k-1}|| <= tol`.
    pub tol: T,
    pub beta0: DVector<T>,
}

#[derive(Debug, Clone)]
pub struct GdRun<T: Scalar> {
    pub beta: DVector<T>,
    pub iterations: usize,
    pub converged: bool,
    /// `||y - X beta||` after the last iteration.
    pub residual_norm: T,
}

/// Plain gradient descent `beta_k = beta_{k-1} + alpha X^T (y - X beta_{k-1})`.
pub fn gd_run<T: Scalar>(x: &DMatrix<T>, y: &DVector<T>, cfg: &GDConfig<T>) -> Result<GdRun<T>> {
    if !(cfg.alpha > T::zero()) {
        return Err(Error::InvalidArgument(format!("step size must be positive, got {}", cfg.alpha)));
    }
    check_shapes(x, y, &cfg.beta0)?;
    let mut beta = cfg.beta0.clone();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        let step = x.tr_mul(&(y - x * &beta)) * cfg.alpha;
        beta += &step;
        iterations += 1;
        let size = step.norm();
        if !size.is_finite() {
            break;
        }
        if size <= cfg.tol {
            converged = true;
            break;
        }
    }
    let residual_norm = (y - x * &beta).norm();
    Ok(GdRun {
        beta,
        iterations,
        converged,
        residual_norm,
    })
}

fn check_shapes<T: Scalar>(x: &DMatrix<T>, y: &DVector<T>, beta0: &DVector<T>) -> Result<()> {
    if y.len() != x.nrows() || beta0.len() != x.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "X is {} x {}, y has {} entries, beta0 has {}",
            x.nrows(),
            x.ncols(),
            y.len(),
            beta0.len()
        )));
    }
    Ok(())
}

/// `k`-th iterate in closed form, `E^k beta0 + (I - E^k) beta_hat` with `E = I - alpha X^T X`.
pub fn gd_iterate_closed<T: Scalar>(x: &DMatrix<T>, y: &DVector<T>, beta0: &DVector<T>, alpha: T, k: u32) -> Result<DVector<T>> {
    check_shapes(x, y, beta0)?;
    let svd = thin_svd(x);
    let beta_hat = svd.reweighted(|s| T::one() / s).tr_mul(y);
    let shrink = DVector::from_fn(svd.rank(), |j, _| {
        let s = svd.singular[j];
        T::one() - (T::one() - alpha * s * s).powi(k as i32)
    });
    // (I - E^k) acts as V1 diag(shrink) V1^T and leaves V2 alone.
    let delta = &beta_hat - beta0;
    let coords = svd.v.tr_mul(&delta).component_mul(&shrink);
    Ok(beta0 + &svd.v * coords)
}

fn row_space<T: Scalar>(x: &DMatrix<T>) -> Result<ThinSvd<T>> {
    let (n, p) = x.shape();
    if p <= n {
        return Err(Error::InvalidArgument(format!(
            "gradient-descent interpolants need p > n, got n = {n}, p = {p}"
        )));
    }
    let svd = thin_svd(x);
    if svd.rank() < n {
        return Err(Error::RankDeficient {
            procedure: "gd_interp",
            rank: svd.rank(),
            needed: n,
        });
    }
    Ok(svd)
}

/// Minimum-norm least squares solution `X^+ y`.
pub fn min_norm_solution<T: Scalar>(x: &DMatrix<T>, y: &DVector<T>) -> DVector<T> {
    thin_svd(x).reweighted(|s| T::one() / s).tr_mul(y)
}

/// `(I - V1 V1^T) v`, the component of `v` in the null space of `X`.
fn null_component<T: Scalar>(svd: &ThinSvd<T>, v: &DVector<T>) -> DVector<T> {
    v - &svd.v * svd.v.tr_mul(v)
}

/// Limit of gradient descent from `beta0`: `beta_hat + V2 V2^T beta0`.
pub fn gd_limit<T: Scalar>(x: &DMatrix<T>, y: &DVector<T>, beta0: &DVector<T>) -> Result<DVector<T>> {
    check_shapes(x, y, beta0)?;
    let svd = row_space(x)?;
    let beta_hat = svd.reweighted(|s| T::one() / s).tr_mul(y);
    Ok(beta_hat + null_component(&svd, beta0))
}

/// Largest convergent step size, `2 / lambda_max(X^T X)`.
pub fn max_step<T: Scalar>(x: &DMatrix<T>) -> Result<T> {
    let svd = thin_svd(x);
    if svd.rank() == 0 {
        return Err(Error::InvalidArgument("step bound undefined for a zero design".into()));
    }
    let top = svd.singular[0];
    Ok(lit::<T>(2.0) / (top * top))
}

/// `beta0_j = theta_j x_(j)^T y / ||x_(j)||^2` for `j` in `subset`, zero elsewhere.
pub fn init_simple_regression<T: Scalar>(
    x: &DMatrix<T>,
    y: &DVector<T>,
    subset: &[usize],
    theta: &[T],
) -> Result<(DVector<T>, FMatrix<T>)> {
    let (n, p) = x.shape();
    if y.len() != n {
        return Err(Error::DimensionMismatch("y length must equal rows of X".into()));
    }
    if subset.len() != theta.len() {
        return Err(Error::DimensionMismatch("one theta per selected column".into()));
    }
    if subset.len() > n {
        return Err(Error::InvalidArgument(format!("|S| = {} exceeds n = {n}", subset.len())));
    }
    let mut f = DMatrix::zeros(p, n);
    for (&j, &t) in subset.iter().zip(theta) {
        if j >= p {
            return Err(Error::InvalidArgument(format!("column {j} out of range")));
        }
        if t < T::zero() || t > T::one() {
            return Err(Error::InvalidArgument(format!("theta must lie in [0, 1], got {t}")));
        }
        let norm2 = x.column(j).norm_squared();
        if norm2 <= T::zero() {
            return Err(Error::InvalidArgument(format!("column {j} has zero norm")));
        }
        f.set_row(j, &(x.column(j).transpose() * (t / norm2)));
    }
    let beta0 = &f * y;
    Ok((
        beta0,
        FMatrix {
            f,
            provenance: FProvenance::SimpleRegression {
                subset: subset.to_vec(),
                theta: theta.to_vec(),
            },
        },
    ))
}

/// `h* + F^T V2 V2^T x*`, the hat vector of the gradient-descent limit.
pub fn interpolant_hat_vector<T: Scalar>(x: &DMatrix<T>, f: &FMatrix<T>, x_star: &DVector<T>) -> Result<DVector<T>> {
    check_f(x, f)?;
    if x_star.len() != x.ncols() {
        return Err(Error::DimensionMismatch("x* length must equal columns of X".into()));
    }
    let svd = row_space(x)?;
    let h = svd.reweighted(|s| T::one() / s) * x_star;
    Ok(h + f.f.tr_mul(&null_component(&svd, x_star)))
}

fn check_f<T: Scalar>(x: &DMatrix<T>, f: &FMatrix<T>) -> Result<()> {
    if f.f.shape() != (x.ncols(), x.nrows()) {
        return Err(Error::DimensionMismatch(format!(
            "F must be {} x {}, got {} x {}",
            x.ncols(),
            x.nrows(),
            f.f.nrows(),
            f.f.ncols()
        )));
    }
    Ok(())
}

/// `W` with `h* = W x*` for the gradient-descent limit.
pub fn interpolant_weights<T: Scalar>(x: &DMatrix<T>, f: &FMatrix<T>) -> Result<DMatrix<T>> {
    check_f(x, f)?;
    let svd = row_space(x)?;
    let ft = f.f.transpose();
    let ftv = &ft * &svd.v;
    Ok(svd.reweighted(|s| T::one() / s) + ft - ftv * svd.v.transpose())
}

/// `n/2 + (n/2) tr(W Sigma W^T)` for the gradient-descent limit.
pub fn interpolant_df<T: Scalar>(x: &DMatrix<T>, f: &FMatrix<T>, sigma: &DMatrix<T>) -> Result<T> {
    if sigma.shape() != (x.ncols(), x.ncols()) {
        return Err(Error::DimensionMismatch("Sigma must be p x p".into()));
    }
    let w = interpolant_weights(x, f)?;
    let half_n = count::<T>(x.nrows()) * lit(0.5);
    Ok(half_n + half_n * (&w * sigma).component_mul(&w).sum())
}

/// Excess bias of the gradient-descent limit under a linear truth and `Sigma = I`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExcessBiasParts<T: Scalar> {
    pub total: T,
    /// Excess bias of the minimum-norm solution, `||V2 V2^T beta||^2`.
    pub minnorm_part: T,
    pub norm_v2_beta: T,
    /// `||V2 V2^T z||^2` with `z = beta - F X beta`.
    pub norm_v2_z: T,
}

pub fn interpolant_excess_bias<T: Scalar>(x: &DMatrix<T>, beta: &DVector<T>, f: &FMatrix<T>) -> Result<ExcessBiasParts<T>> {
    check_f(x, f)?;
    if beta.len() != x.ncols() {
        return Err(Error::DimensionMismatch("beta length must equal columns of X".into()));
    }
    let svd = row_space(x)?;
    let z = beta - &f.f * (x * beta);
    let norm_v2_beta = null_component(&svd, beta).norm_squared();
    let norm_v2_z = null_component(&svd, &z).norm_squared();
    let minnorm_part = norm_v2_beta;
    Ok(ExcessBiasParts {
        total: minnorm_part - norm_v2_beta + norm_v2_z,
        minnorm_part,
        norm_v2_beta,
        norm_v2_z,
    })
}

/// `E||beta_tilde* - beta||^2 = ((n+1)/n) ||beta||^2 ((n+q)/(n+1) - sum_S beta_j^2 / ||beta||^2)`
/// for the unshrunk simple-regression start, assuming `||x_(j)|| = sqrt(n)` on `S`.
pub fn expected_init_distance<T: Scalar>(beta: &DVector<T>, subset: &[usize], n: usize) -> Result<T> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    if subset.iter().any(|&j| j >= beta.len()) {
        return Err(Error::InvalidArgument("subset index out of range".into()));
    }
    let total = beta.norm_squared();
    if subset.is_empty() {
        return Ok(total);
    }
    let kept = subset.iter().fold(T::zero(), |acc, &j| acc + beta[j] * beta[j]);
    let nn = count::<T>(n);
    let q = count::<T>(subset.len());
    Ok((nn + T::one()) / nn * ((nn + q) / (nn + T::one()) * total - kept))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::draw_design;
    use crate::sampling::{standard_normal_vector, stream_rng};
    use approx::assert_relative_eq;

    fn gaussian(n: usize, p: usize, seed: u64) -> DMatrix<f64> {
        draw_design(&DMatrix::identity(p, p), n, &mut stream_rng(seed, 0)).unwrap()
    }

    fn cfg(alpha: f64, max_iter: usize, beta0: DVector<f64>) -> GDConfig<f64> {
        GDConfig {
            alpha,
            max_iter,
            tol: 0.0,
            beta0,
        }
    }

    #[test]
    fn min_norm_start_is_a_fixed_point() {
        let x = gaussian(4, 10, 1);
        let y = DVector::from_vec(vec![1.0, 0.0, -1.0, 2.0]);
        let bh = min_norm_solution(&x, &y);
        let run = gd_run(&x, &y, &cfg(0.01, 5, bh.clone())).unwrap();
        assert_relative_eq!(run.beta, bh, epsilon = 1e-12);
    }

    #[test]
    fn zero_response_from_null_space_stays_put() {
        let x = gaussian(4, 10, 2);
        let svd = thin_svd(&x);
        let w = DVector::from_fn(10, |j, _| (j as f64).cos());
        let v = &w - &svd.v * svd.v.tr_mul(&w);
        let run = gd_run(&x, &DVector::zeros(4), &cfg(0.05, 50, v.clone())).unwrap();
        assert_relative_eq!(run.beta, v, epsilon = 1e-12);
    }

    #[test]
    fn step_bound_brackets_divergence() {
        let x = gaussian(4, 10, 3);
        let y = DVector::from_vec(vec![0.5, -1.0, 2.0, 0.3]);
        let bound = max_step(&x).unwrap();
        let start = DVector::from_fn(10, |j, _| 0.1 * j as f64);
        let r0 = (&y - &x * &start).norm();
        let inside = gd_run(&x, &y, &cfg(0.999 * bound, 5000, start.clone())).unwrap();
        let outside = gd_run(&x, &y, &cfg(1.001 * bound, 5000, start.clone())).unwrap();
        assert!(inside.residual_norm < r0);
        assert!(outside.residual_norm > r0);
        assert!(gd_run(&x, &y, &cfg(0.0, 5, start)).is_err());
    }

    #[test]
    fn iterates_match_closed_form() {
        let x = gaussian(5, 12, 4);
        let y = DVector::from_vec(vec![1.0, 2.0, -0.5, 0.0, 0.7]);
        let b0 = DVector::from_fn(12, |j, _| (j as f64 * 0.3).sin());
        let alpha = 0.5 * max_step(&x).unwrap();
        for k in [1u32, 10, 100] {
            let run = gd_run(&x, &y, &cfg(alpha, k as usize, b0.clone())).unwrap();
            let closed = gd_iterate_closed(&x, &y, &b0, alpha, k).unwrap();
            assert_relative_eq!(run.beta, closed, epsilon = 1e-8);
        }
    }

    #[test]
    fn long_run_reaches_the_limit() {
        let x = gaussian(4, 10, 5);
        let y = DVector::from_vec(vec![0.3, -0.2, 1.1, 0.4]);
        let b0 = DVector::from_fn(10, |j, _| 1.0 / (1.0 + j as f64));
        let alpha = 0.5 * max_step(&x).unwrap();
        let run = gd_run(&x, &y, &cfg(alpha, 10_000, b0.clone())).unwrap();
        let lim = gd_limit(&x, &y, &b0).unwrap();
        assert!((run.beta - &lim).norm() < 1e-6);
        assert!((&x * &lim - &y).norm() / y.norm() < 1e-9);
        let bh = min_norm_solution(&x, &y);
        let diff = &lim - &bh;
        let svd = thin_svd(&x);
        assert!(svd.v.tr_mul(&diff).norm() < 1e-9);
    }

    #[test]
    fn row_space_start_gives_min_norm() {
        let x = gaussian(4, 9, 6);
        let y = DVector::from_vec(vec![1.0, 1.0, 0.0, -1.0]);
        let svd = thin_svd(&x);
        let b0 = &svd.v * DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0]);
        assert_relative_eq!(gd_limit(&x, &y, &b0).unwrap(), min_norm_solution(&x, &y), epsilon = 1e-10);
        assert_relative_eq!(
            gd_limit(&x, &y, &DVector::zeros(9)).unwrap(),
            min_norm_solution(&x, &y),
            epsilon = 1e-12
        );
    }

    #[test]
    fn max_step_scaling_and_power_iteration() {
        assert_relative_eq!(max_step(&DMatrix::<f64>::identity(3, 3)).unwrap(), 2.0, epsilon = 1e-14);
        let x = gaussian(6, 15, 7);
        let b = max_step(&x).unwrap();
        assert_relative_eq!(max_step(&(&x * 3.0)).unwrap(), b / 9.0, max_relative = 1e-12);
        let g = x.transpose() * &x;
        let mut v = DVector::from_element(15, 1.0);
        let mut lam = 0.0;
        for _ in 0..2000 {
            let w = &g * &v;
            lam = w.norm() / v.norm();
            v = w.normalize();
        }
        assert!((2.0 / lam - b).abs() < 1e-8);
        assert!(max_step(&DMatrix::<f64>::zeros(2, 3)).is_err());
    }

    #[test]
    fn simple_regression_init() {
        let x = gaussian(6, 10, 8);
        let y = x.column(3).into_owned();
        let (b0, f) = init_simple_regression(&x, &y, &[3], &[1.0]).unwrap();
        assert_relative_eq!(b0[3], 1.0, epsilon = 1e-12);
        assert_eq!(b0.iter().filter(|v| **v != 0.0).count(), 1);
        assert_relative_eq!(&f.f * &y, b0, epsilon = 1e-14);
        let (b0, _) = init_simple_regression(&x, &y, &[1, 2], &[0.0, 0.0]).unwrap();
        assert_eq!(b0, DVector::zeros(10));
        let mut z = x.clone();
        z.column_mut(2).fill(0.0);
        assert!(init_simple_regression(&z, &y, &[2], &[0.5]).is_err());
    }

    #[test]
    fn f_times_y_is_beta0_on_random_instances() {
        for seed in 0..20 {
            let mut rng = stream_rng(100 + seed, 0);
            let x = gaussian(6, 12, seed);
            let y: DVector<f64> = standard_normal_vector(&mut rng, 6);
            let subset: Vec<usize> = (0..3).map(|k| (seed as usize + 4 * k) % 12).collect();
            let theta = [0.2, 0.9, 0.5];
            let (b0, f) = init_simple_regression(&x, &y, &subset, &theta).unwrap();
            for (k, &j) in subset.iter().enumerate() {
                let direct = theta[k] * x.column(j).dot(&y) / x.column(j).norm_squared();
                assert_relative_eq!(b0[j], direct, epsilon = 1e-12);
            }
            assert_relative_eq!(&f.f * &y, b0, epsilon = 1e-12);
        }
    }

    #[test]
    fn interpolant_hat_vector_predicts_the_limit() {
        let x = gaussian(5, 11, 9);
        let y = DVector::from_vec(vec![0.4, -1.0, 0.2, 0.9, -0.3]);
        let (b0, f) = init_simple_regression(&x, &y, &[0, 5], &[0.7, 1.0]).unwrap();
        let lim = gd_limit(&x, &y, &b0).unwrap();
        let xs = DVector::from_fn(11, |j, _| (j as f64 * 0.9).cos());
        let h = interpolant_hat_vector(&x, &f, &xs).unwrap();
        assert_relative_eq!(h.dot(&y), xs.dot(&lim), epsilon = 1e-9);
        // A row-space test point ignores F.
        let row = x.row(2).transpose();
        let h0 = interpolant_hat_vector(&x, &FMatrix::zero(11, 5), &row).unwrap();
        assert_relative_eq!(interpolant_hat_vector(&x, &f, &row).unwrap(), h0, epsilon = 1e-9);
    }

    #[test]
    fn interpolant_df_dominates_min_norm() {
        let x = gaussian(6, 15, 10);
        let id = DMatrix::identity(15, 15);
        let base = interpolant_df(&x, &FMatrix::zero(15, 6), &id).unwrap();
        let g = &x * x.transpose();
        let closed = 3.0 + 3.0 * g.try_inverse().unwrap().trace();
        assert_relative_eq!(base, closed, max_relative = 1e-10);
        let y = DVector::from_element(6, 1.0);
        let (_, f) = init_simple_regression(&x, &y, &[1, 2], &[1.0, 0.5]).unwrap();
        assert!(interpolant_df(&x, &f, &id).unwrap() > base);
    }

    #[test]
    fn excess_bias_components() {
        let x = gaussian(5, 10, 11);
        let beta = DVector::from_fn(10, |j, _| 1.0 / (1.0 + j as f64));
        let parts = interpolant_excess_bias(&x, &beta, &FMatrix::zero(10, 5)).unwrap();
        assert_relative_eq!(parts.total, parts.minnorm_part, epsilon = 1e-12);
        assert_relative_eq!(parts.norm_v2_beta, parts.norm_v2_z, epsilon = 1e-12);
        let in_row = x.transpose() * DVector::from_vec(vec![1.0, 0.0, 2.0, 0.0, -1.0]);
        let parts = interpolant_excess_bias(&x, &in_row, &FMatrix::zero(10, 5)).unwrap();
        assert!(parts.norm_v2_beta < 1e-18 * in_row.norm_squared().max(1.0) + 1e-20);
    }

    #[test]
    fn expected_init_distance_cases() {
        let beta = DVector::from_vec(vec![3.0, 1.0, 0.5]);
        assert_relative_eq!(expected_init_distance(&beta, &[], 20).unwrap(), beta.norm_squared());
        let e1 = DVector::from_vec(vec![2.0, 0.0, 0.0]);
        assert_relative_eq!(expected_init_distance(&e1, &[0], 20).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn top_q_subset_minimises_init_distance() {
        let beta = DVector::from_vec(vec![0.3, -2.0, 0.1, 1.5, 0.0, -0.7, 0.9, 0.2]);
        let q = 3;
        let mut best = (f64::INFINITY, vec![]);
        for mask in 0u32..256 {
            if mask.count_ones() as usize != q {
                continue;
            }
            let s: Vec<usize> = (0..8).filter(|j| mask & (1 << j) != 0).collect();
            let v = expected_init_distance(&beta, &s, 20).unwrap();
            if v < best.0 {
                best = (v, s);
            }
        }
        assert_eq!(best.1, vec![1, 3, 6]);
    }
}

//! Linear procedures `mu_hat* = h*^T y` and their hat systems.

mod onedim;

pub use onedim::{
    kernel_r, local_constant_hat_vector, spline_hat_vector, spline_phi, weight_hat_vector, SplineSystem,
    WeightKernel,
};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gd::FMatrix;
use crate::linalg::{select_columns, select_entries, thin_svd};
use crate::scalar::{lit, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub enum ProcedureSpec<T: Scalar> {
    /// Least squares on the columns in `subset`, `|S| <= n`.
    Ols { subset: Vec<usize> },
    /// Minimum-norm least squares on `subset`, `|S| > n`.
    MinNorm { subset: Vec<usize> },
    /// Ridge on all columns.
    Ridge { lambda: T },
    WeightInterp { kernel: WeightKernel, a: T, b: T },
    LocalConstant { omega: T, a: T, b: T },
    /// Interpolating spline of degree `2s - 1` on `[0, 1]`.
    Spline { s: usize },
    /// Limit of gradient descent started from `beta0 = F y`.
    GdInterp { f: FMatrix<T> },
}

impl<T: Scalar> ProcedureSpec<T> {
    /// OLS when `|S| <= n`, minimum-norm otherwise.
    pub fn least_squares(subset: Vec<usize>, n: usize) -> Self {
        if subset.len() <= n {
            Self::Ols { subset }
        } else {
            Self::MinNorm { subset }
        }
    }

    /// Least squares on the first `p` columns of `order`.
    pub fn nested(order: &[usize], p: usize, n: usize) -> Self {
        Self::least_squares(order[..p].to_vec(), n)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Ols { .. } => "ols",
            Self::MinNorm { .. } => "min_norm",
            Self::Ridge { .. } => "ridge",
            Self::WeightInterp { .. } => "weight_interp",
            Self::LocalConstant { .. } => "local_constant",
            Self::Spline { .. } => "spline",
            Self::GdInterp { .. } => "gd_interp",
        }
    }

    pub fn is_one_dimensional(&self) -> bool {
        matches!(
            self,
            Self::WeightInterp { .. } | Self::LocalConstant { .. } | Self::Spline { .. }
        )
    }
}

#[derive(Debug, Clone)]
enum HatKind<T: Scalar> {
    /// `h* = W x*_S` with `W: n x |S|`.
    Linear { subset: Vec<usize>, w: DMatrix<T> },
    Weight { nodes: Vec<T>, kernel: WeightKernel, a: T, b: T },
    Local { nodes: Vec<T>, omega: T, a: T, b: T },
    Spline(SplineSystem<T>),
}

/// Hat matrix of a fitted procedure together with its hat-vector map.
#[derive(Debug, Clone)]
pub struct HatSystem<T: Scalar> {
    spec: ProcedureSpec<T>,
    x: DMatrix<T>,
    h: DMatrix<T>,
    kind: HatKind<T>,
}

fn check_subset(subset: &[usize], d: usize) -> Result<()> {
    let mut seen = vec![false; d];
    for &j in subset {
        if j >= d {
            return Err(Error::InvalidArgument(format!("column {j} out of range for d = {d}")));
        }
        if std::mem::replace(&mut seen[j], true) {
            return Err(Error::InvalidArgument(format!("column {j} repeated in subset")));
        }
    }
    Ok(())
}

/// Weight matrix `W` of a least-squares fit, `h* = W x*_S`.
fn least_squares_weights<T: Scalar>(xs: &DMatrix<T>, procedure: &'static str, needed: usize) -> Result<DMatrix<T>> {
    let svd = thin_svd(xs);
    if svd.rank() < needed {
        return Err(Error::RankDeficient {
            procedure,
            rank: svd.rank(),
            needed,
        });
    }
    Ok(svd.reweighted(|s| T::one() / s))
}

impl<T: Scalar> HatSystem<T> {
    /// Fits `spec` on the design `x`; one-dimensional procedures read the
    /// sorted nodes from the single column of `x`.
    pub fn fit(spec: ProcedureSpec<T>, x: &DMatrix<T>) -> Result<Self> {
        let (n, d) = x.shape();
        if n == 0 {
            return Err(Error::InvalidArgument("empty design".into()));
        }
        let nodes = || -> Result<Vec<T>> {
            if d != 1 {
                return Err(Error::DimensionMismatch(format!(
                    "{} needs a single covariate column, got {d}",
                    spec.name()
                )));
            }
            Ok(x.column(0).iter().copied().collect())
        };
        let kind = match &spec {
            ProcedureSpec::Ols { subset } => {
                check_subset(subset, d)?;
                if subset.len() > n {
                    return Err(Error::InvalidArgument(format!(
                        "ols needs |S| <= n, got |S| = {} with n = {n}",
                        subset.len()
                    )));
                }
                let xs = select_columns(x, subset);
                let w = least_squares_weights(&xs, "ols", subset.len())?;
                HatKind::Linear {
                    subset: subset.clone(),
                    w,
                }
            }
            ProcedureSpec::MinNorm { subset } => {
                check_subset(subset, d)?;
                if subset.len() <= n {
                    return Err(Error::InvalidArgument(format!(
                        "min_norm needs |S| > n, got |S| = {} with n = {n}",
                        subset.len()
                    )));
                }
                let xs = select_columns(x, subset);
                let w = least_squares_weights(&xs, "min_norm", n)?;
                HatKind::Linear {
                    subset: subset.clone(),
                    w,
                }
            }
            ProcedureSpec::Ridge { lambda } => {
                let lambda = *lambda;
                if !(lambda > T::zero()) {
                    return Err(Error::InvalidArgument(format!("ridge needs lambda > 0, got {lambda}")));
                }
                let svd = thin_svd(x);
                HatKind::Linear {
                    subset: (0..d).collect(),
                    w: svd.reweighted(|s| s / (s * s + lambda)),
                }
            }
            ProcedureSpec::WeightInterp { kernel, a, b } => {
                let nodes = nodes()?;
                onedim::check_nodes(&nodes, *a, *b)?;
                HatKind::Weight {
                    nodes,
                    kernel: *kernel,
                    a: *a,
                    b: *b,
                }
            }
            ProcedureSpec::LocalConstant { omega, a, b } => {
                let nodes = nodes()?;
                onedim::check_nodes(&nodes, *a, *b)?;
                if !(*omega > T::zero()) {
                    return Err(Error::InvalidArgument("bandwidth must be positive".into()));
                }
                let widest = nodes
                    .windows(2)
                    .fold(T::zero(), |acc, w| if w[1] - w[0] > acc { w[1] - w[0] } else { acc });
                let slack = lit::<T>(1e-12) * (*b - *a);
                if *omega < widest * lit(0.5) - slack {
                    return Err(Error::InvalidArgument(format!(
                        "bandwidth {omega} is below half the widest gap {widest}"
                    )));
                }
                HatKind::Local {
                    nodes,
                    omega: *omega,
                    a: *a,
                    b: *b,
                }
            }
            ProcedureSpec::Spline { s } => HatKind::Spline(SplineSystem::new(&nodes()?, *s)?),
            ProcedureSpec::GdInterp { f } => {
                if f.f.nrows() != d || f.f.ncols() != n {
                    return Err(Error::DimensionMismatch(format!(
                        "F must be {d} x {n}, got {} x {}",
                        f.f.nrows(),
                        f.f.ncols()
                    )));
                }
                if d <= n {
                    return Err(Error::InvalidArgument("gd_interp needs p > n".into()));
                }
                let svd = thin_svd(x);
                if svd.rank() < n {
                    return Err(Error::RankDeficient {
                        procedure: "gd_interp",
                        rank: svd.rank(),
                        needed: n,
                    });
                }
                let min_norm = svd.reweighted(|s| T::one() / s);
                // F^T (I - V1 V1^T) without forming the p x p projector.
                let ft = f.f.transpose();
                let ftv = &ft * &svd.v;
                let w = min_norm + ft - ftv * svd.v.transpose();
                HatKind::Linear {
                    subset: (0..d).collect(),
                    w,
                }
            }
        };
        let h = match &kind {
            HatKind::Linear { subset, w } => select_columns(x, subset) * w.transpose(),
            _ => {
                let mut h = DMatrix::zeros(n, n);
                for i in 0..n {
                    let row = Self::one_dim_hat(&kind, x[(i, 0)])?;
                    h.set_row(i, &row.transpose());
                }
                h
            }
        };
        Ok(Self {
            spec,
            x: x.clone(),
            h,
            kind,
        })
    }

    fn one_dim_hat(kind: &HatKind<T>, x: T) -> Result<DVector<T>> {
        match kind {
            HatKind::Weight { nodes, kernel, a, b } => weight_hat_vector(*kernel, nodes, x, *a, *b),
            HatKind::Local { nodes, omega, a, b } => local_constant_hat_vector(nodes, *omega, x, *a, *b),
            HatKind::Spline(sys) => sys.hat_vector(x),
            HatKind::Linear { .. } => unreachable!("linear kinds are handled by the caller"),
        }
    }

    /// `h*` at a test point given in the full covariate space.
    pub fn hat_vector(&self, x_star: &[T]) -> Result<DVector<T>> {
        if x_star.len() != self.x.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "x* has {} coordinates, design has {}",
                x_star.len(),
                self.x.ncols()
            )));
        }
        match &self.kind {
            HatKind::Linear { subset, w } => {
                let xs = DVector::from_fn(subset.len(), |k, _| x_star[subset[k]]);
                Ok(w * xs)
            }
            kind => Self::one_dim_hat(kind, x_star[0]),
        }
    }

    pub fn h(&self) -> &DMatrix<T> {
        &self.h
    }

    pub fn x(&self) -> &DMatrix<T> {
        &self.x
    }

    pub fn spec(&self) -> &ProcedureSpec<T> {
        &self.spec
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    /// `(S, W)` with `h* = W x*_S` for least-squares, ridge and GD procedures.
    pub fn linear_weights(&self) -> Option<(&[usize], &DMatrix<T>)> {
        match &self.kind {
            HatKind::Linear { subset, w } => Some((subset, w)),
            _ => None,
        }
    }

    /// Procedures that reproduce the training responses exactly.
    pub fn is_interpolating(&self) -> bool {
        match &self.spec {
            ProcedureSpec::MinNorm { .. }
            | ProcedureSpec::WeightInterp { .. }
            | ProcedureSpec::Spline { .. }
            | ProcedureSpec::GdInterp { .. } => true,
            ProcedureSpec::Ols { subset } => subset.len() == self.n(),
            ProcedureSpec::Ridge { .. } => false,
            ProcedureSpec::LocalConstant { omega, .. } => {
                let nodes: Vec<T> = self.x.column(0).iter().copied().collect();
                let narrowest = nodes
                    .windows(2)
                    .map(|w| w[1] - w[0])
                    .fold(T::max_value().unwrap_or(T::one()), |acc, v| if v < acc { v } else { acc });
                nodes.len() == 1 || *omega < narrowest
            }
        }
    }

    /// Fitted coefficients embedded in the full `d` coordinates, for linear kinds.
    pub fn coefficients(&self, y: &DVector<T>) -> Option<DVector<T>> {
        let (subset, w) = self.linear_weights()?;
        let bs = w.tr_mul(y);
        let mut beta = DVector::zeros(self.x.ncols());
        for (k, &j) in subset.iter().enumerate() {
            beta[j] = bs[k];
        }
        Some(beta)
    }

    /// Fitted values `H y`.
    pub fn fitted(&self, y: &DVector<T>) -> Result<DVector<T>> {
        self.check_response(y)?;
        Ok(&self.h * y)
    }

    pub(crate) fn check_response(&self, y: &DVector<T>) -> Result<()> {
        if y.len() != self.n() {
            return Err(Error::DimensionMismatch(format!(
                "y has {} entries, design has {} rows",
                y.len(),
                self.n()
            )));
        }
        Ok(())
    }

    /// Restricts a full test point to the coordinates the procedure uses.
    pub fn project_point(&self, x_star: &DVector<T>) -> DVector<T> {
        match &self.kind {
            HatKind::Linear { subset, .. } => select_entries(x_star, subset),
            _ => x_star.clone(),
        }
    }
}

/// `mu_hat* = h*^T y`.
pub fn predict<T: Scalar>(hs: &HatSystem<T>, y: &DVector<T>, x_star: &[T]) -> Result<T> {
    hs.check_response(y)?;
    Ok(hs.hat_vector(x_star)?.dot(y))
}

/// Shorthand for [`HatSystem::fit`].
pub fn fit<T: Scalar>(spec: ProcedureSpec<T>, x: &DMatrix<T>) -> Result<HatSystem<T>> {
    HatSystem::fit(spec, x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gd::FMatrix;
    use crate::model::draw_design;
    use crate::sampling::stream_rng;
    use approx::assert_relative_eq;

    fn gaussian(n: usize, d: usize, seed: u64) -> DMatrix<f64> {
        draw_design(&DMatrix::identity(d, d), n, &mut stream_rng(seed, 0)).unwrap()
    }

    #[test]
    fn ols_on_identity_design() {
        let x = DMatrix::<f64>::identity(2, 2);
        let hs = fit(ProcedureSpec::Ols { subset: vec![0, 1] }, &x).unwrap();
        assert_relative_eq!(hs.h().clone(), DMatrix::identity(2, 2), epsilon = 1e-14);
        let h = hs.hat_vector(&[0.3, -0.7]).unwrap();
        assert_relative_eq!(h, DVector::from_vec(vec![0.3, -0.7]), epsilon = 1e-14);
    }

    #[test]
    fn ridge_with_huge_penalty_vanishes() {
        let x = gaussian(10, 4, 1);
        let hs = fit(ProcedureSpec::Ridge { lambda: 1e12 }, &x).unwrap();
        assert!(hs.h().norm() < 1e-6);
        assert!(fit(ProcedureSpec::Ridge { lambda: 0.0 }, &x).is_err());
    }

    /// Least-norm solution through the normal equations of the row space.
    fn least_norm(x: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
        let g = x * x.transpose();
        x.transpose() * g.lu().solve(y).unwrap()
    }

    #[test]
    fn min_norm_interpolates() {
        let x = gaussian(5, 8, 2);
        let hs = fit(ProcedureSpec::MinNorm { subset: (0..8).collect() }, &x).unwrap();
        assert_relative_eq!(hs.h().clone(), DMatrix::identity(5, 5), epsilon = 1e-9);
        let y = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0, 0.0]);
        assert_relative_eq!(hs.fitted(&y).unwrap(), y.clone(), epsilon = 1e-9);
        let beta = hs.coefficients(&y).unwrap();
        assert_relative_eq!(beta, least_norm(&x, &y), epsilon = 1e-9);
        assert_relative_eq!(&x * &beta, y, epsilon = 1e-9);
    }

    #[test]
    fn single_predictor_ols_formula() {
        let x = DMatrix::from_column_slice(4, 1, &[1.0, -2.0, 0.5, 3.0]);
        let y = DVector::from_vec(vec![0.2, 1.0, -0.3, 2.0]);
        let hs = fit(ProcedureSpec::Ols { subset: vec![0] }, &x).unwrap();
        let xs = 1.7;
        let sxy: f64 = x.column(0).dot(&y);
        let sxx: f64 = x.column(0).norm_squared();
        assert_relative_eq!(predict(&hs, &y, &[xs]).unwrap(), xs * sxy / sxx, epsilon = 1e-12);
    }

    #[test]
    fn one_dimensional_predictions() {
        let nodes = DMatrix::from_column_slice(4, 1, &[0.0, 1.0, 2.0, 3.0]);
        let y = DVector::from_vec(vec![5.0, 6.0, 7.0, 8.0]);
        let lin = fit(
            ProcedureSpec::WeightInterp {
                kernel: WeightKernel::Linear,
                a: 0.0,
                b: 3.0,
            },
            &nodes,
        )
        .unwrap();
        assert_eq!(predict(&lin, &y, &[2.0]).unwrap(), 7.0);
        let nn = fit(
            ProcedureSpec::WeightInterp {
                kernel: WeightKernel::Constant,
                a: 0.0,
                b: 3.0,
            },
            &nodes,
        )
        .unwrap();
        assert_eq!(predict(&nn, &y, &[1.5 - 1e-12]).unwrap(), 6.0);
        assert_eq!(nn.h().clone(), DMatrix::identity(4, 4));
    }

    #[test]
    fn rank_deficiency_names_the_procedure() {
        let mut x = gaussian(6, 3, 3);
        let c0 = x.column(0).into_owned();
        x.set_column(2, &(c0 * 2.0));
        match fit(ProcedureSpec::Ols { subset: vec![0, 1, 2] }, &x) {
            Err(Error::RankDeficient { procedure, rank, .. }) => {
                assert_eq!(procedure, "ols");
                assert_eq!(rank, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn hat_vector_at_training_rows_matches_h() {
        let x = gaussian(12, 20, 4);
        let specs = vec![
            ProcedureSpec::Ols { subset: vec![1, 4, 6] },
            ProcedureSpec::MinNorm { subset: (0..15).collect() },
            ProcedureSpec::Ridge { lambda: 0.7 },
        ];
        for spec in specs {
            let hs = fit(spec, &x).unwrap();
            for i in 0..12 {
                let row: Vec<f64> = x.row(i).iter().copied().collect();
                let h = hs.hat_vector(&row).unwrap();
                assert_relative_eq!(h.transpose(), hs.h().row(i).into_owned(), epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn ridge_small_penalty_limits() {
        let x = gaussian(15, 5, 5);
        let ols = fit(ProcedureSpec::Ols { subset: (0..5).collect() }, &x).unwrap();
        let ridge = fit(ProcedureSpec::Ridge { lambda: 1e-10 }, &x).unwrap();
        assert!((ridge.h() - ols.h()).norm() < 1e-5);

        let x = gaussian(6, 14, 6);
        let mn = fit(ProcedureSpec::MinNorm { subset: (0..14).collect() }, &x).unwrap();
        let ridge = fit(ProcedureSpec::Ridge { lambda: 1e-10 }, &x).unwrap();
        let xs: Vec<f64> = (0..14).map(|j| (j as f64 * 0.37).sin()).collect();
        let a = mn.hat_vector(&xs).unwrap();
        let b = ridge.hat_vector(&xs).unwrap();
        assert!((a - b).norm() < 1e-5);
    }

    #[test]
    fn gd_interp_with_zero_f_is_min_norm() {
        let x = gaussian(5, 9, 7);
        let f = FMatrix::zero(9, 5);
        let gd = fit(ProcedureSpec::GdInterp { f }, &x).unwrap();
        let mn = fit(ProcedureSpec::MinNorm { subset: (0..9).collect() }, &x).unwrap();
        let xs: Vec<f64> = (0..9).map(|j| j as f64 - 4.0).collect();
        assert_relative_eq!(gd.hat_vector(&xs).unwrap(), mn.hat_vector(&xs).unwrap(), epsilon = 1e-10);
        assert_relative_eq!(gd.h().clone(), DMatrix::identity(5, 5), epsilon = 1e-9);
    }

    #[test]
    fn interpolating_rows_sum_to_one() {
        let nodes: Vec<f64> = (0..9).map(|i| (i as f64 / 8.0).powf(1.3)).collect();
        let x = DMatrix::from_column_slice(9, 1, &nodes);
        for spec in [
            ProcedureSpec::WeightInterp {
                kernel: WeightKernel::Quadratic,
                a: 0.0,
                b: 1.0,
            },
            ProcedureSpec::LocalConstant {
                omega: 0.12,
                a: 0.0,
                b: 1.0,
            },
            ProcedureSpec::Spline { s: 2 },
        ] {
            let hs = fit(spec, &x).unwrap();
            for k in 0..50 {
                let h = hs.hat_vector(&[k as f64 / 49.0]).unwrap();
                assert_relative_eq!(h.sum(), 1.0, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn predict_checks_dimensions() {
        let x = gaussian(4, 2, 8);
        let hs = fit(ProcedureSpec::Ols { subset: vec![0] }, &x).unwrap();
        assert!(predict(&hs, &DVector::zeros(3), &[0.0, 0.0]).is_err());
        assert!(predict(&hs, &DVector::zeros(4), &[0.0]).is_err());
    }
}

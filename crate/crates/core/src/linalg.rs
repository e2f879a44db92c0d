//! Dense linear algebra helpers built on nalgebra.
//!
//! Rank decisions follow the usual pseudo-inverse rule: singular values below
//! `max(rows, cols) * eps * sigma_max` are treated as zero.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::{count, epsilon, lit, Scalar};

/// Thin SVD truncated to the numerical rank.
#[derive(Debug, Clone)]
pub struct ThinSvd<T: Scalar> {
    /// Left singular vectors, `rows x rank`.
    pub u: DMatrix<T>,
    /// Singular values in decreasing order, length `rank`.
    pub singular: DVector<T>,
    /// Right singular vectors, `cols x rank`.
    pub v: DMatrix<T>,
}

impl<T: Scalar> ThinSvd<T> {
    pub fn rank(&self) -> usize {
        self.singular.len()
    }

    /// `U diag(f(psi)) V^T`, an `rows x cols` matrix.
    pub fn reweighted(&self, f: impl Fn(T) -> T) -> DMatrix<T> {
        let mut scaled = self.u.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= f(self.singular[j]);
        }
        scaled * self.v.transpose()
    }
}

/// Default rank tolerance for a matrix of the given shape and top singular value.
pub fn rank_tolerance<T: Scalar>(rows: usize, cols: usize, sigma_max: T) -> T {
    count::<T>(rows.max(cols)) * epsilon::<T>() * sigma_max
}

/// Thin SVD with singular values sorted decreasingly and truncated at the
/// pseudo-inverse tolerance.
pub fn thin_svd<T: Scalar>(x: &DMatrix<T>) -> ThinSvd<T> {
    let (rows, cols) = x.shape();
    if rows == 0 || cols == 0 {
        return ThinSvd {
            u: DMatrix::zeros(rows, 0),
            singular: DVector::zeros(0),
            v: DMatrix::zeros(cols, 0),
        };
    }
    let svd = x.clone().svd(true, true);
    let u = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested V^T");
    let s = svd.singular_values;
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].partial_cmp(&s[a]).unwrap_or(std::cmp::Ordering::Equal));
    let sigma_max = if s.is_empty() { T::zero() } else { s[order[0]] };
    let tol = rank_tolerance(rows, cols, sigma_max);
    let kept: Vec<usize> = order.into_iter().filter(|&k| s[k] > tol).collect();
    let r = kept.len();
    let mut uu = DMatrix::zeros(rows, r);
    let mut vv = DMatrix::zeros(cols, r);
    let mut ss = DVector::zeros(r);
    for (j, &k) in kept.iter().enumerate() {
        uu.set_column(j, &u.column(k));
        vv.set_column(j, &vt.row(k).transpose());
        ss[j] = s[k];
    }
    ThinSvd {
        u: uu,
        singular: ss,
        v: vv,
    }
}

/// Columns of `x` listed in `idx`, in that order.
pub fn select_columns<T: Scalar>(x: &DMatrix<T>, idx: &[usize]) -> DMatrix<T> {
    DMatrix::from_fn(x.nrows(), idx.len(), |i, j| x[(i, idx[j])])
}

/// Principal submatrix of a square matrix.
pub fn principal_submatrix<T: Scalar>(m: &DMatrix<T>, idx: &[usize]) -> DMatrix<T> {
    DMatrix::from_fn(idx.len(), idx.len(), |i, j| m[(idx[i], idx[j])])
}

pub fn select_entries<T: Scalar>(v: &DVector<T>, idx: &[usize]) -> DVector<T> {
    DVector::from_fn(idx.len(), |i, _| v[idx[i]])
}

/// `tr(A B)` without forming the product.
pub fn trace_of_product<T: Scalar>(a: &DMatrix<T>, b: &DMatrix<T>) -> T {
    assert_eq!(a.ncols(), b.nrows());
    assert_eq!(a.nrows(), b.ncols());
    let mut acc = T::zero();
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

/// Inverse of a symmetric positive definite matrix via Cholesky.
pub fn spd_inverse<T: Scalar>(m: &DMatrix<T>, what: &str) -> Result<DMatrix<T>> {
    m.clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::NotPositiveDefinite(what.to_string()))
}

/// Solves `m z = rhs` for symmetric positive definite `m`.
pub fn spd_solve<T: Scalar>(m: &DMatrix<T>, rhs: &DMatrix<T>, what: &str) -> Result<DMatrix<T>> {
    m.clone()
        .cholesky()
        .map(|c| c.solve(rhs))
        .ok_or_else(|| Error::NotPositiveDefinite(what.to_string()))
}

/// Symmetrises a matrix in place: `(M + M^T) / 2`.
pub fn symmetrize<T: Scalar>(m: &mut DMatrix<T>) {
    let n = m.nrows();
    let half: T = lit(0.5);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = (m[(i, j)] + m[(j, i)]) * half;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Eigenvalues of a symmetric matrix in increasing order.
pub fn sym_eigenvalues<T: Scalar>(m: &DMatrix<T>) -> Vec<T> {
    let mut ev: Vec<T> = m.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    ev
}

/// Lower factor `L` with `L L^T = sigma`.
///
/// Cholesky first; if that fails on a numerically semidefinite matrix the
/// eigendecomposition is used with eigenvalues above `-1e-10` clamped to zero.
pub fn covariance_factor<T: Scalar>(sigma: &DMatrix<T>) -> Result<DMatrix<T>> {
    if let Some(c) = sigma.clone().cholesky() {
        return Ok(c.l());
    }
    let eig = sigma.clone().symmetric_eigen();
    let scale = eig
        .eigenvalues
        .iter()
        .fold(T::one(), |acc, &v| if v.abs() > acc { v.abs() } else { acc });
    let tol: T = lit::<T>(1e-10) * scale;
    let mut root = DVector::zeros(eig.eigenvalues.len());
    for (k, &v) in eig.eigenvalues.iter().enumerate() {
        if v < -tol {
            return Err(Error::NotPositiveDefinite(format!(
                "covariance has eigenvalue {v} below the PSD tolerance"
            )));
        }
        root[k] = if v > T::zero() { v.sqrt() } else { T::zero() };
    }
    let mut f = eig.eigenvectors.clone();
    for (j, mut col) in f.column_iter_mut().enumerate() {
        col *= root[j];
    }
    Ok(f)
}

/// QR of a full-column-rank `n x s` matrix together with an orthonormal basis
/// of the orthogonal complement of its column space.
///
/// Returns `(Q1, Q2, R)` with `S = Q1 R`, `Q1: n x s`, `Q2: n x (n - s)`.
pub fn complete_qr<T: Scalar>(s: &DMatrix<T>) -> Result<(DMatrix<T>, DMatrix<T>, DMatrix<T>)> {
    let (n, k) = s.shape();
    if k > n {
        return Err(Error::DimensionMismatch(format!(
            "complete_qr needs rows >= cols, got {n} x {k}"
        )));
    }
    // Householder QR of [S | I] keeps the leading k columns of Q spanning col(S)
    // and completes them to an orthonormal basis of R^n.
    let mut aug = DMatrix::zeros(n, k + n);
    aug.view_mut((0, 0), (n, k)).copy_from(s);
    aug.view_mut((0, k), (n, n)).fill_with_identity();
    let qr = aug.qr();
    let q = qr.q();
    let r = qr.r();
    let q1 = q.columns(0, k).into_owned();
    let q2 = q.columns(k, n - k).into_owned();
    let r1 = r.view((0, 0), (k, k)).into_owned();
    Ok((q1, q2, r1))
}

/// Pairwise (cascade) summation, deterministic for a fixed input order.
pub fn pairwise_sum<T: Scalar>(xs: &[T]) -> T {
    const BLOCK: usize = 32;
    if xs.len() <= BLOCK {
        return xs.iter().fold(T::zero(), |acc, &v| acc + v);
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

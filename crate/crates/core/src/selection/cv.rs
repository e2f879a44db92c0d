//! K-fold cross validation for nested least-squares fits.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::random_permutation;
use crate::procedures::{HatSystem, ProcedureSpec};
use crate::sampling::stream_rng;
use crate::scalar::{count, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CvConfig {
    pub k: usize,
    pub seed: u64,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self { k: 5, seed: 0 }
    }
}

/// Fold label of every observation; fold sizes differ by at most one.
pub fn fold_assignment(n: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 || k > n {
        return Err(Error::InvalidArgument(format!("need 2 <= k <= n, got k = {k}, n = {n}")));
    }
    let perm = random_permutation(n, &mut stream_rng(seed, 0));
    let mut fold = vec![0; n];
    for (i, &obs) in perm.iter().enumerate() {
        fold[obs] = i % k;
    }
    Ok(fold)
}

fn rows<T: Scalar>(x: &DMatrix<T>, idx: &[usize]) -> DMatrix<T> {
    DMatrix::from_fn(idx.len(), x.ncols(), |i, j| x[(idx[i], j)])
}

/// Mean squared held-out error of least squares on the first `p` columns of
/// `order`, refitted on each training fold (minimum-norm when the fold has
/// fewer rows than `p`). Folds whose fit fails numerically are skipped.
pub fn kfold_cv<T: Scalar>(x: &DMatrix<T>, y: &DVector<T>, order: &[usize], p: usize, cfg: CvConfig) -> Result<T> {
    let n = x.nrows();
    if y.len() != n {
        return Err(Error::DimensionMismatch("y length must match the rows of X".into()));
    }
    if p > order.len() {
        return Err(Error::InvalidArgument(format!("p = {p} exceeds the ordering length {}", order.len())));
    }
    let fold = fold_assignment(n, cfg.k, cfg.seed)?;
    let mut sse = T::zero();
    let mut held = 0usize;
    let mut last_err = None;
    for f in 0..cfg.k {
        let train: Vec<usize> = (0..n).filter(|&i| fold[i] != f).collect();
        let test: Vec<usize> = (0..n).filter(|&i| fold[i] == f).collect();
        let xt = rows(x, &train);
        let yt = DVector::from_fn(train.len(), |i, _| y[train[i]]);
        let spec = ProcedureSpec::nested(order, p, train.len());
        let hs = match HatSystem::fit(spec, &xt) {
            Ok(hs) => hs,
            Err(e) if e.is_numerical() => {
                last_err = Some(e);
                continue;
            }
            Err(e) => return Err(e),
        };
        let b = hs.coefficients(&yt).expect("least squares has coefficients");
        let pred = rows(x, &test) * b;
        for (k, &i) in test.iter().enumerate() {
            let r = y[i] - pred[k];
            sse += r * r;
        }
        held += test.len();
    }
    if held == 0 {
        return Err(last_err.unwrap_or_else(|| Error::InvalidArgument("no valid folds".into())));
    }
    Ok(sse / count(held))
}

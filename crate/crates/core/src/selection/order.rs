//! Orderings of the candidate variables for nested subset sweeps.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::random_permutation;
use crate::sampling::stream_rng;
use crate::scalar::{lit, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub enum OrderStrategy<T: Scalar> {
    /// Decreasing `|beta_j|`; needs the true coefficients.
    Prescient(DVector<T>),
    /// Greedy forward selection by training RSS.
    ForwardRss,
    Random(u64),
    Given(Vec<usize>),
}

impl<T: Scalar> OrderStrategy<T> {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Prescient(_) => "prescient",
            Self::ForwardRss => "forward_rss",
            Self::Random(_) => "random",
            Self::Given(_) => "given",
        }
    }
}

/// Permutation of the columns of `x` (0-based) according to `strategy`.
pub fn order_variables<T: Scalar>(x: &DMatrix<T>, y: &DVector<T>, strategy: &OrderStrategy<T>) -> Result<Vec<usize>> {
    let d = x.ncols();
    match strategy {
        OrderStrategy::Prescient(beta) => {
            if beta.len() != d {
                return Err(Error::DimensionMismatch(format!(
                    "prescient order needs {d} coefficients, got {}",
                    beta.len()
                )));
            }
            Ok(prescient_order(beta))
        }
        OrderStrategy::ForwardRss => forward_rss_order(x, y),
        OrderStrategy::Random(seed) => Ok(random_permutation(d, &mut stream_rng(*seed, 0))),
        OrderStrategy::Given(perm) => {
            check_permutation(perm, d)?;
            Ok(perm.clone())
        }
    }
}

pub fn check_permutation(perm: &[usize], d: usize) -> Result<()> {
    let mut seen = vec![false; d];
    if perm.len() != d {
        return Err(Error::InvalidArgument(format!("ordering has {} entries, expected {d}", perm.len())));
    }
    for &j in perm {
        if j >= d || std::mem::replace(&mut seen[j], true) {
            return Err(Error::InvalidArgument(format!("ordering is not a permutation of 0..{d}")));
        }
    }
    Ok(())
}

/// Indices sorted by decreasing `|beta_j|`, ties by index.
pub fn prescient_order<T: Scalar>(beta: &DVector<T>) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..beta.len()).collect();
    idx.sort_by(|&a, &b| {
        beta[b]
            .abs()
            .partial_cmp(&beta[a].abs())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    idx
}

/// Forward selection: at each step add the column that lowers the residual
/// sum of squares most. Runs for `min(n - 1, d)` steps (or until every
/// remaining column is collinear with the chosen ones); the rest follow in
/// index order.
pub fn forward_rss_order<T: Scalar>(x: &DMatrix<T>, y: &DVector<T>) -> Result<Vec<usize>> {
    let (n, d) = x.shape();
    if y.len() != n {
        return Err(Error::DimensionMismatch("y length must match the rows of X".into()));
    }
    let steps = d.min(n.saturating_sub(1));
    let tol = lit::<T>(1e-10);
    let norms: Vec<T> = (0..d).map(|j| x.column(j).norm_squared()).collect();
    let mut z = x.clone();
    let mut r = y.clone();
    let mut chosen = vec![false; d];
    let mut order = Vec::with_capacity(d);
    for _ in 0..steps {
        let mut best: Option<(usize, T)> = None;
        for j in 0..d {
            if chosen[j] {
                continue;
            }
            let zz = z.column(j).norm_squared();
            if !(zz > tol * norms[j]) {
                continue;
            }
            let zr = z.column(j).dot(&r);
            let gain = zr * zr / zz;
            if best.is_none_or(|(_, g)| gain > g) {
                best = Some((j, gain));
            }
        }
        let Some((j, _)) = best else { break };
        chosen[j] = true;
        order.push(j);
        let q = z.column(j) / z.column(j).norm();
        r -= &q * q.dot(&r);
        for (k, &taken) in chosen.iter().enumerate() {
            if !taken {
                let c = q.dot(&z.column(k));
                let mut col = z.column_mut(k);
                col.axpy(-c, &q, T::one());
            }
        }
    }
    order.extend((0..d).filter(|&j| !chosen[j]));
    Ok(order)
}

//! Seeded random streams and covariate samplers.
//!
//! Every Monte Carlo consumer draws from a [`StreamRng`] keyed by a master
//! seed and a stream index, so replicate `r` of an experiment sees the same
//! numbers no matter which thread runs it.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{covariance_factor, pairwise_sum};
use crate::scalar::{count, lit, to_f64, Scalar};

pub type StreamRng = ChaCha8Rng;

/// Independent generator for `(master_seed, stream)`.
pub fn stream_rng(master_seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}

pub fn standard_normal<T: Scalar>(rng: &mut StreamRng) -> T {
    let z: f64 = rng.sample(StandardNormal);
    lit(z)
}

pub fn standard_normal_vector<T: Scalar>(rng: &mut StreamRng, len: usize) -> DVector<T> {
    DVector::from_fn(len, |_, _| standard_normal(rng))
}

/// Source of test points `x*` for Monte Carlo expectations over the covariate law.
pub trait PointSampler<T: Scalar>: Sync {
    fn dim(&self) -> usize;
    fn sample(&self, rng: &mut StreamRng) -> DVector<T>;
}

/// `N(0, Sigma)` via a fixed square-root factor.
#[derive(Debug, Clone)]
pub struct GaussianSampler<T: Scalar> {
    factor: DMatrix<T>,
}

impl<T: Scalar> GaussianSampler<T> {
    pub fn new(sigma: &DMatrix<T>) -> Result<Self> {
        if sigma.nrows() != sigma.ncols() {
            return Err(Error::DimensionMismatch("covariance must be square".into()));
        }
        Ok(Self {
            factor: covariance_factor(sigma)?,
        })
    }

    pub fn factor(&self) -> &DMatrix<T> {
        &self.factor
    }
}

impl<T: Scalar> PointSampler<T> for GaussianSampler<T> {
    fn dim(&self) -> usize {
        self.factor.nrows()
    }

    fn sample(&self, rng: &mut StreamRng) -> DVector<T> {
        let z = standard_normal_vector(rng, self.factor.ncols());
        &self.factor * z
    }
}

/// Uniform on `[a, b]`, one-dimensional.
#[derive(Debug, Clone, Copy)]
pub struct UniformSampler<T: Scalar> {
    pub a: T,
    pub b: T,
}

impl<T: Scalar> PointSampler<T> for UniformSampler<T> {
    fn dim(&self) -> usize {
        1
    }

    fn sample(&self, rng: &mut StreamRng) -> DVector<T> {
        let u: f64 = rng.random();
        DVector::from_element(1, self.a + (self.b - self.a) * lit::<T>(u))
    }
}

/// Uniform over the rows of a fixed matrix (the empirical covariate law).
#[derive(Debug, Clone)]
pub struct EmpiricalSampler<T: Scalar> {
    rows: DMatrix<T>,
}

impl<T: Scalar> EmpiricalSampler<T> {
    pub fn new(rows: DMatrix<T>) -> Self {
        Self { rows }
    }
}

impl<T: Scalar> PointSampler<T> for EmpiricalSampler<T> {
    fn dim(&self) -> usize {
        self.rows.ncols()
    }

    fn sample(&self, rng: &mut StreamRng) -> DVector<T> {
        let i = rng.random_range(0..self.rows.nrows());
        self.rows.row(i).transpose()
    }
}

/// Draws per Monte Carlo chunk; chunk `c` uses stream `c` of the seed.
pub const MC_CHUNK: usize = 1000;

/// Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate<T: Scalar> {
    pub value: T,
    pub se: f64,
    pub n_draws: usize,
}

/// Mean of `draw` over `n_draws` evaluations, chunked across threads.
///
/// The result depends only on `(seed, n_draws)`, never on the thread count.
pub fn monte_carlo_mean<T, F>(n_draws: usize, seed: u64, draw: F) -> Result<McEstimate<T>>
where
    T: Scalar,
    F: Fn(&mut StreamRng) -> Result<T> + Sync,
{
    if n_draws < 2 {
        return Err(Error::InvalidArgument("Monte Carlo needs at least two draws".into()));
    }
    let chunks = n_draws.div_ceil(MC_CHUNK);
    let parts: Vec<Result<Vec<T>>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_rng(seed, c as u64);
            let len = MC_CHUNK.min(n_draws - c * MC_CHUNK);
            (0..len).map(|_| draw(&mut rng)).collect()
        })
        .collect();
    let mut values = Vec::with_capacity(n_draws);
    for part in parts {
        values.extend(part?);
    }
    let m = count::<T>(n_draws);
    let mean = pairwise_sum(&values) / m;
    let dev: Vec<T> = values.iter().map(|&v| (v - mean) * (v - mean)).collect();
    let var = pairwise_sum(&dev) / (m - T::one());
    Ok(McEstimate {
        value: mean,
        se: to_f64((var / m).sqrt()),
        n_draws,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..4).map(|_| stream_rng(7, 3).random()).collect();
        let mut r1 = stream_rng(7, 3);
        let mut r2 = stream_rng(7, 4);
        let x: u64 = r1.random();
        let y: u64 = r2.random();
        assert_eq!(a[0], x);
        assert_ne!(x, y);
    }

    #[test]
    fn monte_carlo_mean_is_seed_determined() {
        let f = |rng: &mut StreamRng| Ok(standard_normal::<f64>(rng));
        let a = monte_carlo_mean(2500, 11, f).unwrap();
        let b = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| monte_carlo_mean(2500, 11, f).unwrap());
        assert_eq!(a, b);
        assert!(a.value.abs() < 4.0 * a.se);
        assert!((a.se * 50.0 - 1.0).abs() < 0.1);
    }

    #[test]
    fn uniform_sampler_stays_in_range() {
        let s = UniformSampler { a: -1.0, b: 2.0 };
        let mut rng = stream_rng(1, 0);
        for _ in 0..1000 {
            let v = s.sample(&mut rng)[0];
            assert!((-1.0..=2.0).contains(&v));
        }
    }
}

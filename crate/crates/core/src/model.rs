//! Data model and generators for the simulation world.
//!
//! Rows of `X` are i.i.d. `N(0, Sigma)`, errors are i.i.d. `N(0, sigma_eps2)`
//! and independent of the rows, and `y = mu + eps`.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Beta, Distribution};

use crate::error::{Error, Result};
use crate::linalg::{covariance_factor, sym_eigenvalues};
use crate::sampling::{standard_normal, standard_normal_vector, stream_rng, StreamRng};
use crate::scalar::{count, lit, to_f64, Scalar};

/// Feature covariance family.
#[derive(Debug, Clone, PartialEq)]
pub enum CovKind<T: Scalar> {
    Identity,
    /// `(1 - rho) I + rho 1 1^T`, `0 <= rho < 1`.
    Equicorrelated(T),
    Explicit(DMatrix<T>),
    /// Random correlation matrix from the onion construction with this seed.
    RandomCorrelation(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeanKind {
    /// `mu(x) = sum_j beta_j x_j`
    Linear,
    /// `mu(x) = sum_j beta_j (exp(x_j / 2) - exp(1/8))`, mean zero for standard normal `x_j`.
    NonlinearExp,
}

/// Shape of the true coefficient vector before scaling to the requested norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BetaKind<T: Scalar> {
    /// `beta_j = alpha (1 - j/d)^kappa`, `kappa >= 1`.
    PolyDecay(T),
    /// `beta_j = alpha / j`.
    InverseIndex,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig<T: Scalar> {
    pub n: usize,
    pub d: usize,
    pub mean_kind: MeanKind,
    pub beta_kind: BetaKind<T>,
    /// Squared Euclidean norm of the true coefficients.
    pub beta_norm2: T,
    pub cov_kind: CovKind<T>,
    pub sigma_eps2: T,
    pub seed: u64,
}

/// True regression function `x -> mu(x; beta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanFunction<T: Scalar> {
    pub kind: MeanKind,
    pub beta: DVector<T>,
}

impl<T: Scalar> MeanFunction<T> {
    pub fn eval(&self, x: &[T]) -> T {
        debug_assert_eq!(x.len(), self.beta.len());
        match self.kind {
            MeanKind::Linear => x.iter().zip(self.beta.iter()).fold(T::zero(), |acc, (&a, &b)| acc + a * b),
            MeanKind::NonlinearExp => {
                let shift = lit::<T>(0.125).exp();
                let half = lit::<T>(0.5);
                x.iter()
                    .zip(self.beta.iter())
                    .fold(T::zero(), |acc, (&a, &b)| acc + b * ((a * half).exp() - shift))
            }
        }
    }

    /// Mean vector over the rows of `x`.
    pub fn eval_rows(&self, x: &DMatrix<T>) -> DVector<T> {
        DVector::from_fn(x.nrows(), |i, _| {
            let row: Vec<T> = x.row(i).iter().copied().collect();
            self.eval(&row)
        })
    }
}

/// A training sample together with whatever truth the generator knows.
#[derive(Debug, Clone)]
pub struct Dataset<T: Scalar> {
    pub x: DMatrix<T>,
    pub y: DVector<T>,
    /// True means at the training rows; only known in simulation.
    pub mu: Option<DVector<T>>,
    pub sigma_eps2: T,
    /// Feature covariance.
    pub sigma: DMatrix<T>,
    pub mean_fn: Option<MeanFunction<T>>,
}

impl<T: Scalar> Dataset<T> {
    /// Wraps observed data with no simulation truth.
    pub fn observed(x: DMatrix<T>, y: DVector<T>, sigma_eps2: T, sigma: DMatrix<T>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::DimensionMismatch(format!(
                "X has {} rows but y has {} entries",
                x.nrows(),
                y.len()
            )));
        }
        if sigma.nrows() != x.ncols() || sigma.ncols() != x.ncols() {
            return Err(Error::DimensionMismatch("Sigma must be d x d".into()));
        }
        Ok(Self {
            x,
            y,
            mu: None,
            sigma_eps2,
            sigma,
            mean_fn: None,
        })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    /// Writes `x1..xd,y` with 17 significant digits.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (1..=self.d()).map(|j| format!("x{j}")).collect();
        header.push("y".into());
        w.write_record(&header)?;
        for i in 0..self.n() {
            let mut rec: Vec<String> = self.x.row(i).iter().map(|&v| format_float(to_f64(v))).collect();
            rec.push(format_float(to_f64(self.y[i])));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Shortest round-trip formatting at 17 significant digits.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Reads the `x1..xd,y` layout written by [`Dataset::write_csv`].
pub fn read_xy_csv<T: Scalar, R: Read>(reader: R) -> Result<(DMatrix<T>, DVector<T>)> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let y_col = headers
        .iter()
        .position(|h| h == "y")
        .ok_or_else(|| Error::Csv("missing `y` column".into()))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut ys = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let mut row = Vec::with_capacity(rec.len() - 1);
        for (j, field) in rec.iter().enumerate() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::Csv(format!("row {}: cannot parse `{field}`", line + 1)))?;
            if j == y_col {
                ys.push(v);
            } else {
                row.push(v);
            }
        }
        rows.push(row);
    }
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    let x = DMatrix::from_fn(n, d, |i, j| lit(rows[i][j]));
    let y = DVector::from_fn(n, |i, _| lit(ys[i]));
    Ok((x, y))
}

/// Reads a plain numeric matrix (header row ignored).
pub fn read_matrix_csv<T: Scalar, R: Read>(reader: R) -> Result<DMatrix<T>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Csv(format!("row {}: cannot parse `{f}`", line + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != d) {
        return Err(Error::Csv("ragged rows".into()));
    }
    Ok(DMatrix::from_fn(n, d, |i, j| lit(rows[i][j])))
}

/// Coefficients of the requested shape scaled to `||beta||^2 = beta_norm2`.
pub fn coefficient_vector<T: Scalar>(d: usize, kind: BetaKind<T>, beta_norm2: T) -> Result<DVector<T>> {
    if d == 0 {
        return Err(Error::InvalidArgument("d must be at least 1".into()));
    }
    if beta_norm2 <= T::zero() {
        return Err(Error::InvalidArgument(format!(
            "beta_norm2 must be positive, got {beta_norm2}"
        )));
    }
    let raw = match kind {
        BetaKind::PolyDecay(kappa) => {
            if kappa < T::one() {
                return Err(Error::InvalidArgument(format!("kappa must be >= 1, got {kappa}")));
            }
            let dd = count::<T>(d);
            DVector::from_fn(d, |j, _| (T::one() - count::<T>(j + 1) / dd).powf(kappa))
        }
        BetaKind::InverseIndex => DVector::from_fn(d, |j, _| T::one() / count::<T>(j + 1)),
    };
    let norm2 = raw.norm_squared();
    if norm2 <= T::zero() {
        return Err(Error::InvalidArgument(
            "coefficient shape is identically zero for this d".into(),
        ));
    }
    Ok(raw * (beta_norm2 / norm2).sqrt())
}

/// Builds the feature covariance for `kind`.
pub fn make_covariance<T: Scalar>(kind: &CovKind<T>, d: usize) -> Result<DMatrix<T>> {
    if d == 0 {
        return Err(Error::InvalidArgument("d must be at least 1".into()));
    }
    match kind {
        CovKind::Identity => Ok(DMatrix::identity(d, d)),
        CovKind::Equicorrelated(rho) => {
            let rho = *rho;
            if rho < T::zero() || rho >= T::one() {
                return Err(Error::InvalidArgument(format!("rho must lie in [0, 1), got {rho}")));
            }
            Ok(DMatrix::from_fn(d, d, |i, j| if i == j { T::one() } else { rho }))
        }
        CovKind::Explicit(m) => {
            if m.nrows() != d || m.ncols() != d {
                return Err(Error::DimensionMismatch(format!(
                    "explicit covariance is {}x{}, expected {d}x{d}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            let scale = m.amax().max(T::one());
            let asym = (m - m.transpose()).amax();
            if asym > lit::<T>(1e-12) * scale {
                return Err(Error::NotPositiveDefinite("explicit covariance is not symmetric".into()));
            }
            let min_ev = sym_eigenvalues(m)[0];
            if min_ev < -lit::<T>(1e-10) * scale {
                return Err(Error::NotPositiveDefinite(format!(
                    "explicit covariance has eigenvalue {min_ev}"
                )));
            }
            Ok(m.clone())
        }
        CovKind::RandomCorrelation(seed) => Ok(random_correlation(d, &mut stream_rng(*seed, 0))),
    }
}

/// Random correlation matrix by the onion method (LKJ with unit concentration).
pub fn random_correlation<T: Scalar>(d: usize, rng: &mut StreamRng) -> DMatrix<T> {
    let mut c = DMatrix::<f64>::identity(d, d);
    if d == 1 {
        return c.map(lit);
    }
    let mut beta = 1.0 + (d as f64 - 2.0) / 2.0;
    let r12 = 2.0 * Beta::new(beta, beta).expect("valid beta").sample(rng) - 1.0;
    c[(0, 1)] = r12;
    c[(1, 0)] = r12;
    for k in 2..d {
        beta -= 0.5;
        let y: f64 = Beta::new(k as f64 / 2.0, beta).expect("valid beta").sample(rng);
        let mut u: DVector<f64> = standard_normal_vector(rng, k);
        let un = u.norm();
        u /= un;
        let w = u * y.sqrt();
        let lower = c
            .view((0, 0), (k, k))
            .into_owned()
            .cholesky()
            .expect("onion iterate stays positive definite")
            .l();
        let z = lower * w;
        for i in 0..k {
            c[(i, k)] = z[i];
            c[(k, i)] = z[i];
        }
    }
    c.map(lit)
}

/// Draws a dataset according to `cfg` using stream 0 of its seed.
pub fn generate_dataset<T: Scalar>(cfg: &GenConfig<T>) -> Result<Dataset<T>> {
    let mut rng = stream_rng(cfg.seed, 0);
    generate_dataset_with(cfg, &mut rng)
}

/// Draws a dataset according to `cfg` from an explicit stream.
pub fn generate_dataset_with<T: Scalar>(cfg: &GenConfig<T>, rng: &mut StreamRng) -> Result<Dataset<T>> {
    if cfg.n < 2 || cfg.d < 1 {
        return Err(Error::InvalidArgument(format!(
            "need n >= 2 and d >= 1, got n = {}, d = {}",
            cfg.n, cfg.d
        )));
    }
    if cfg.sigma_eps2 < T::zero() {
        return Err(Error::InvalidArgument("sigma_eps2 must be nonnegative".into()));
    }
    let sigma = make_covariance(&cfg.cov_kind, cfg.d)?;
    let beta = coefficient_vector(cfg.d, cfg.beta_kind, cfg.beta_norm2)?;
    let x = draw_design(&sigma, cfg.n, rng)?;
    let mean_fn = MeanFunction {
        kind: cfg.mean_kind,
        beta,
    };
    let mu = mean_fn.eval_rows(&x);
    let sd = cfg.sigma_eps2.sqrt();
    let y = DVector::from_fn(cfg.n, |i, _| mu[i] + sd * standard_normal::<T>(rng));
    Ok(Dataset {
        x,
        y,
        mu: Some(mu),
        sigma_eps2: cfg.sigma_eps2,
        sigma,
        mean_fn: Some(mean_fn),
    })
}

/// `n` i.i.d. rows from `N(0, sigma)`.
pub fn draw_design<T: Scalar>(sigma: &DMatrix<T>, n: usize, rng: &mut StreamRng) -> Result<DMatrix<T>> {
    let d = sigma.nrows();
    let factor = covariance_factor(sigma)?;
    let z = DMatrix::from_fn(n, d, |_, _| standard_normal::<T>(rng));
    Ok(z * factor.transpose())
}

/// Uniform random permutation of `0..d`.
pub fn random_permutation(d: usize, rng: &mut StreamRng) -> Vec<usize> {
    let mut p: Vec<usize> = (0..d).collect();
    for i in (1..d).rev() {
        let j = rng.random_range(0..=i);
        p.swap(i, j);
    }
    p
}

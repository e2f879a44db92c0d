//! Criterion sweeps over nested least-squares models and model selection.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::cv::{kfold_cv, CvConfig};
use crate::dof::{df_random, CovariateLaw, McConfig};
use crate::error::{Error, Result};
use crate::model::{format_float, Dataset};
use crate::procedures::{HatSystem, ProcedureSpec};
use crate::risk::{
    a_matrix, delta_plus, delta_plusplus, err_hat, err_random_analytic, err_tilde_from, excess_bias_analytic,
    loocv_error, mean_moments, training_error,
};
use crate::scalar::{count, lit, to_f64, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Criterion {
    ErrTrain,
    Cp,
    Aic,
    Bic,
    Loocv,
    KfoldCv,
    ErrTilde,
    ErrHat,
    ErrHatPlus,
    ErrHatPlusPlus,
    Delta,
    DeltaPlus,
    DeltaPlusPlus,
    DfFixed,
    DfRandom,
    /// Test-set error, or the exact `ErrR_{X,y}` when the truth is known.
    ErrTest,
    /// Exact `ErrR_X`, the test error averaged over the training noise.
    ErrRandom,
    /// Exact excess bias when the truth is known.
    ExcessBias,
}

impl Criterion {
    pub const ALL: [Criterion; 18] = [
        Self::ErrTrain,
        Self::Cp,
        Self::Aic,
        Self::Bic,
        Self::Loocv,
        Self::KfoldCv,
        Self::ErrTilde,
        Self::ErrHat,
        Self::ErrHatPlus,
        Self::ErrHatPlusPlus,
        Self::Delta,
        Self::DeltaPlus,
        Self::DeltaPlusPlus,
        Self::DfFixed,
        Self::DfRandom,
        Self::ErrTest,
        Self::ErrRandom,
        Self::ExcessBias,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::ErrTrain => "err_train",
            Self::Cp => "cp",
            Self::Aic => "aic",
            Self::Bic => "bic",
            Self::Loocv => "loocv",
            Self::KfoldCv => "kfold_cv",
            Self::ErrTilde => "err_tilde",
            Self::ErrHat => "err_hat",
            Self::ErrHatPlus => "err_hat_plus",
            Self::ErrHatPlusPlus => "err_hat_plusplus",
            Self::Delta => "delta",
            Self::DeltaPlus => "delta_plus",
            Self::DeltaPlusPlus => "delta_plusplus",
            Self::DfFixed => "df_fixed",
            Self::DfRandom => "df_random",
            Self::ErrTest => "err_test",
            Self::ErrRandom => "err_random",
            Self::ExcessBias => "excess_bias",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s)
    }

    /// Parses a comma-separated list.
    pub fn parse_list(s: &str) -> Result<Vec<Self>> {
        s.split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(|t| Self::parse(t).ok_or_else(|| Error::InvalidArgument(format!("unknown criterion '{t}'"))))
            .collect()
    }
}

#[derive(Debug, Clone, Default)]
pub struct SweepOptions<T: Scalar> {
    pub criteria: Vec<Criterion>,
    /// Needed for `kfold_cv`.
    pub cv: Option<CvConfig>,
    /// Held-out data for `err_test`; otherwise the dataset's own truth is used.
    pub test: Option<(DMatrix<T>, DVector<T>)>,
    /// Model sizes to evaluate; `0..=d` when absent.
    pub sizes: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub p: usize,
    /// Aligned with [`SweepTable::criteria`]; `None` marks an undefined cell.
    pub values: Vec<Option<f64>>,
    /// Why the whole row is undefined, if it is.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub criteria: Vec<Criterion>,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    fn col(&self, c: Criterion) -> Option<usize> {
        self.criteria.iter().position(|&k| k == c)
    }

    pub fn get(&self, p: usize, c: Criterion) -> Option<f64> {
        let k = self.col(c)?;
        self.rows.iter().find(|r| r.p == p)?.values[k]
    }

    /// `(p, value)` pairs of one column in increasing `p`.
    pub fn column(&self, c: Criterion) -> Option<Vec<(usize, Option<f64>)>> {
        let k = self.col(c)?;
        Some(self.rows.iter().map(|r| (r.p, r.values[k])).collect())
    }

    /// Long format: `p,criterion,value,defined`; undefined cells have an empty value.
    pub fn write_long_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["p", "criterion", "value", "defined"])?;
        for row in &self.rows {
            for (k, c) in self.criteria.iter().enumerate() {
                let (v, flag) = match row.values[k] {
                    Some(v) => (format_float(v), "1"),
                    None => (String::new(), "0"),
                };
                w.write_record([row.p.to_string().as_str(), c.name(), v.as_str(), flag])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Smallest-`p` minimiser of a criterion over its defined cells.
pub fn select(table: &SweepTable, c: Criterion) -> Result<usize> {
    let col = table
        .column(c)
        .ok_or_else(|| Error::Missing(format!("criterion '{}' not in the table", c.name())))?;
    let mut best: Option<(usize, f64)> = None;
    for (p, v) in col {
        let Some(v) = v else { continue };
        if v.is_nan() {
            continue;
        }
        best = match best {
            Some((bp, bv)) if bv < v || (bv == v && bp < p) => Some((bp, bv)),
            _ => Some((p, v)),
        };
    }
    best.map(|(p, _)| p)
        .ok_or_else(|| Error::Missing(format!("criterion '{}' is undefined at every p", c.name())))
}

/// Evaluates `opts.criteria` for least squares on the first `p` columns of
/// `order`, for every requested `p`: OLS up to `p = n`, minimum-norm beyond.
///
/// `cp = ErrT + 2 sigma^2 tr(H) / n`; `aic = n log ErrT + 2p` and
/// `bic = n log ErrT + p log n` on `p < n`. Criteria that need `n - p` or
/// leverages below one are undefined at `p = n`. Numerical failures at a
/// given `p` leave that row undefined.
pub fn criterion_sweep<T: Scalar>(data: &Dataset<T>, order: &[usize], opts: &SweepOptions<T>) -> Result<SweepTable> {
    let d = data.d();
    super::order::check_permutation(order, d)?;
    if opts.criteria.contains(&Criterion::KfoldCv) && opts.cv.is_none() {
        return Err(Error::Missing("kfold_cv needs a cross-validation configuration".into()));
    }
    if let Some((xt, yt)) = &opts.test {
        if xt.ncols() != d || xt.nrows() != yt.len() {
            return Err(Error::DimensionMismatch("test data must have d columns and matching y".into()));
        }
    }
    let sizes: Vec<usize> = match &opts.sizes {
        Some(s) => {
            if let Some(&bad) = s.iter().find(|&&p| p > d) {
                return Err(Error::InvalidArgument(format!("model size {bad} exceeds d = {d}")));
            }
            s.clone()
        }
        None => (0..=d).collect(),
    };
    let rows = sizes
        .par_iter()
        .map(|&p| match sweep_row(data, order, p, opts) {
            Ok(values) => Ok(SweepRow { p, values, error: None }),
            Err(e) if e.is_numerical() => Ok(SweepRow {
                p,
                values: vec![None; opts.criteria.len()],
                error: Some(e.to_string()),
            }),
            Err(e) => Err(e),
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows = rows;
    rows.sort_by_key(|r| r.p);
    Ok(SweepTable {
        criteria: opts.criteria.clone(),
        rows,
    })
}

fn keep<T: Scalar>(r: Result<T>) -> Result<Option<f64>> {
    match r {
        Ok(v) => Ok(Some(to_f64(v))),
        Err(e) if e.is_numerical() || matches!(e, Error::OutOfRange { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

fn sweep_row<T: Scalar>(data: &Dataset<T>, order: &[usize], p: usize, opts: &SweepOptions<T>) -> Result<Vec<Option<f64>>> {
    let n = data.n();
    let nn = count::<T>(n);
    let s2 = data.sigma_eps2;
    let want = |c: Criterion| opts.criteria.contains(&c);
    let hs = HatSystem::fit(ProcedureSpec::nested(order, p, n), &data.x)?;
    let y = &data.y;
    let et = training_error(y, &hs.fitted(y)?)?;
    let et = if p >= n { T::zero() } else { et };
    let df_f = hs.h().trace();
    let dof = if p == n {
        None
    } else {
        Some(df_random(&hs, CovariateLaw::Gaussian(&data.sigma), &McConfig::default())?)
    };
    let df_r = dof.as_ref().map(|r| r.df_random);

    let needs_a = [
        Criterion::ErrHat,
        Criterion::ErrHatPlus,
        Criterion::ErrHatPlusPlus,
        Criterion::Delta,
        Criterion::DeltaPlus,
        Criterion::DeltaPlusPlus,
    ]
    .into_iter()
    .any(want);
    let eh = match (needs_a, df_r) {
        (true, Some(df)) => match a_matrix(&hs) {
            Ok(am) => Some(err_hat(&am, &hs, y, s2, df)?),
            Err(e) if e.is_numerical() => None,
            Err(e) => return Err(e),
        },
        _ => None,
    };

    let analytic = match (&data.mean_fn, &data.mu) {
        (Some(f), Some(mu)) if mean_moments(f, &data.sigma).is_ok() => Some((f, mu)),
        _ => None,
    };

    let mut out = Vec::with_capacity(opts.criteria.len());
    for &c in &opts.criteria {
        let v = match c {
            Criterion::ErrTrain => Some(to_f64(et)),
            Criterion::Cp => Some(to_f64(et + lit::<T>(2.0) * s2 * df_f / nn)),
            Criterion::Aic | Criterion::Bic => {
                if p < n && et > T::zero() {
                    let pen = if c == Criterion::Aic {
                        2.0 * p as f64
                    } else {
                        p as f64 * (n as f64).ln()
                    };
                    Some(n as f64 * to_f64(et).ln() + pen)
                } else {
                    None
                }
            }
            Criterion::Loocv => {
                if p == n {
                    None
                } else {
                    keep(loocv_error(&hs, y))?
                }
            }
            Criterion::KfoldCv => keep(kfold_cv(&data.x, y, order, p, opts.cv.unwrap_or_default()))?,
            Criterion::ErrTilde => match df_r {
                Some(df) => keep(err_tilde_from(et, n, p, df))?,
                None => None,
            },
            Criterion::ErrHat => eh.map(|e| to_f64(e.value)),
            Criterion::ErrHatPlus => eh.map(|e| to_f64(e.plus())),
            Criterion::ErrHatPlusPlus => eh.map(|e| to_f64(e.plusplus())),
            Criterion::Delta => eh.map(|e| to_f64(e.delta)),
            Criterion::DeltaPlus => eh.map(|e| to_f64(delta_plus(e.delta))),
            Criterion::DeltaPlusPlus => {
                eh.map(|e| to_f64(delta_plusplus(e.delta, e.y_a_y, e.trace_a, e.sigma_eps2, e.n)))
            }
            Criterion::DfFixed => Some(to_f64(df_f)),
            Criterion::DfRandom => df_r.map(to_f64),
            Criterion::ErrTest => match (&opts.test, analytic) {
                (Some((xt, yt)), _) => {
                    let b = hs.coefficients(y).expect("least squares has coefficients");
                    Some(to_f64(training_error(yt, &(xt * b))?))
                }
                (None, Some((f, _))) => Some(to_f64(err_random_analytic(&hs, y, f, &data.sigma, s2)?)),
                _ => None,
            },
            Criterion::ErrRandom => match (analytic, &dof) {
                (Some((f, mu)), Some(r)) => {
                    Some(to_f64(err_random_analytic(&hs, mu, f, &data.sigma, s2)? + s2 * r.e_h_norm2))
                }
                _ => None,
            },
            Criterion::ExcessBias => match analytic {
                Some((f, mu)) => Some(to_f64(excess_bias_analytic(&hs, mu, f, &data.sigma)?)),
                None => None,
            },
        };
        out.push(v);
    }
    Ok(out)
}

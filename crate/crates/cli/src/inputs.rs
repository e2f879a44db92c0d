//! Turning flag values into datasets, procedures and covariate laws.

use std::fs::File;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use dfr_core::dof::{CovariateLaw, McConfig};
use dfr_core::model::{generate_dataset, make_covariance, read_matrix_csv, read_xy_csv, BetaKind, CovKind, MeanKind};
use dfr_core::procedures::{ProcedureSpec, WeightKernel};
use dfr_core::sampling::{stream_rng, UniformSampler};
use dfr_core::{Dataset64, GenConfig64, ProcedureSpec64};
use dfr_experiments::scenario::parse_usize_list;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::config::{DataArgs, ProcArgs};

pub const DEFAULT_N: usize = 50;
pub const DEFAULT_D: usize = 120;
pub const DEFAULT_KAPPA: f64 = 5.0;

pub struct Loaded {
    pub data: Dataset64,
    /// False when the input had no `y` column.
    pub has_y: bool,
}

impl Loaded {
    pub fn require_y(&self) -> Result<()> {
        if !self.has_y {
            bail!(dfr_core::Error::Missing("this command needs a `y` column".into()));
        }
        Ok(())
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).with_context(|| format!("opening {}", path.display()))
}

fn has_y_column(path: &Path) -> Result<bool> {
    let mut rdr = csv::Reader::from_reader(open(path)?);
    let headers = rdr.headers().with_context(|| format!("reading {}", path.display()))?;
    Ok(headers.iter().any(|h| h.trim() == "y"))
}

/// Reads a `x1..xd,y` CSV.
pub fn read_xy(path: &Path) -> Result<(DMatrix<f64>, DVector<f64>)> {
    Ok(read_xy_csv(open(path)?)?)
}

pub fn generator(args: &DataArgs) -> Result<GenConfig64> {
    let kappa = args.kappa.unwrap_or(DEFAULT_KAPPA);
    let beta_kind = match args.beta.as_deref().unwrap_or("poly") {
        "poly" => BetaKind::PolyDecay(kappa),
        "inverse" => BetaKind::InverseIndex,
        other => bail!(dfr_core::Error::InvalidArgument(format!("unknown beta shape '{other}'"))),
    };
    let mean_kind = match args.mean.as_deref().unwrap_or("linear") {
        "linear" => MeanKind::Linear,
        "nonlinear" | "nonlinear_exp" => MeanKind::NonlinearExp,
        other => bail!(dfr_core::Error::InvalidArgument(format!("unknown mean '{other}'"))),
    };
    let cov_kind = match args.rho.unwrap_or(0.0) {
        0.0 => CovKind::Identity,
        rho => CovKind::Equicorrelated(rho),
    };
    Ok(GenConfig64 {
        n: args.n.unwrap_or(DEFAULT_N),
        d: args.d.unwrap_or(DEFAULT_D),
        mean_kind,
        beta_kind,
        beta_norm2: args.beta_norm2.unwrap_or(1.0),
        cov_kind,
        sigma_eps2: args.sigma_eps2.unwrap_or(1.0),
        seed: args.seed.unwrap_or(0),
    })
}

/// Equispaced (endpoints included) or sorted uniform nodes on `[a, b]`.
fn nodes(kind: &str, n: usize, a: f64, b: f64, seed: u64) -> Result<DMatrix<f64>> {
    let nodes: Vec<f64> = match kind {
        "equispaced" if n >= 2 => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
        "equispaced" => bail!(dfr_core::Error::InvalidArgument("equispaced nodes need n >= 2".into())),
        "uniform" => {
            let mut rng = stream_rng(seed, 0);
            let mut v: Vec<f64> = (0..n).map(|_| a + (b - a) * rng.random::<f64>()).collect();
            v.sort_by(f64::total_cmp);
            v
        }
        other => bail!(dfr_core::Error::InvalidArgument(format!("unknown node layout '{other}'"))),
    };
    Ok(DMatrix::from_column_slice(n, 1, &nodes))
}

/// Gaussian covariance named by `--sigma`, when it names one.
fn named_covariance(spec: &str, d: usize) -> Result<Option<DMatrix<f64>>> {
    let kind = match spec {
        "identity" => CovKind::Identity,
        "empirical" | "uniform" => return Ok(None),
        s if s.starts_with("equicorrelated:") => {
            let rho: f64 = s["equicorrelated:".len()..]
                .parse()
                .map_err(|_| dfr_core::Error::InvalidArgument(format!("bad correlation in '{s}'")))?;
            CovKind::Equicorrelated(rho)
        }
        path => CovKind::Explicit(read_matrix_csv(open(Path::new(path))?)?),
    };
    Ok(Some(make_covariance(&kind, d)?))
}

/// Loads or generates the dataset. One-dimensional procedures without an
/// input file get nodes on `[a, b]` and zero responses.
pub fn load(args: &DataArgs, proc: Option<&ProcArgs>) -> Result<Loaded> {
    let s2 = args.sigma_eps2.unwrap_or(1.0);
    let one_dim = proc.is_some_and(is_one_dimensional);
    if let Some(path) = &args.input {
        let (x, y, has_y) = if has_y_column(path)? {
            let (x, y) = read_xy(path)?;
            (x, y, true)
        } else {
            let x: DMatrix<f64> = read_matrix_csv(open(path)?)?;
            let n = x.nrows();
            (x, DVector::zeros(n), false)
        };
        let d = x.ncols();
        let sigma = match args.sigma.as_deref() {
            Some(s) => named_covariance(s, d)?,
            None => None,
        }
        .unwrap_or_else(|| DMatrix::identity(d, d));
        let data = Dataset64::observed(x, y, s2, sigma)?;
        return Ok(Loaded { data, has_y });
    }
    if one_dim {
        let p = proc.expect("one-dimensional implies a procedure");
        let (a, b) = interval(p);
        let n = args.n.unwrap_or(DEFAULT_N);
        let x = nodes(args.nodes.as_deref().unwrap_or("equispaced"), n, a, b, args.seed.unwrap_or(0))?;
        let data = Dataset64::observed(x, DVector::zeros(n), s2, DMatrix::identity(1, 1))?;
        return Ok(Loaded { data, has_y: false });
    }
    let mut data = generate_dataset(&generator(args)?)?;
    if let Some(s) = args.sigma.as_deref() {
        if let Some(sigma) = named_covariance(s, data.d())? {
            data.sigma = sigma;
        }
    }
    Ok(Loaded { data, has_y: true })
}

fn interval(p: &ProcArgs) -> (f64, f64) {
    (p.a.unwrap_or(0.0), p.b.unwrap_or(1.0))
}

fn is_one_dimensional(p: &ProcArgs) -> bool {
    matches!(p.proc.as_deref().unwrap_or("ls"), "weight" | "local_constant" | "spline")
}

/// 1-based column list to 0-based indices.
pub fn columns(key: &str, list: &str, d: usize) -> Result<Vec<usize>> {
    let one_based = parse_usize_list(key, list)?;
    one_based
        .into_iter()
        .map(|j| {
            if j == 0 || j > d {
                Err(anyhow!(dfr_core::Error::InvalidArgument(format!("{key}: column {j} outside 1..{d}"))))
            } else {
                Ok(j - 1)
            }
        })
        .collect()
}

fn need<T>(v: Option<T>, what: &str) -> Result<T> {
    v.ok_or_else(|| anyhow!(dfr_core::Error::Missing(format!("--{what} is required for this procedure"))))
}

pub fn procedure(p: &ProcArgs, data: &Dataset64) -> Result<ProcedureSpec64> {
    let (n, d) = (data.n(), data.d());
    let subset = || match &p.subset {
        Some(list) => columns("subset", list, d),
        None => Ok((0..d).collect()),
    };
    let (a, b) = interval(p);
    Ok(match p.proc.as_deref().unwrap_or("ls") {
        "ls" => ProcedureSpec::least_squares(subset()?, n),
        "ols" => ProcedureSpec::Ols { subset: subset()? },
        "min_norm" => ProcedureSpec::MinNorm { subset: subset()? },
        "ridge" => ProcedureSpec::Ridge {
            lambda: need(p.lambda, "lambda")?,
        },
        "weight" => {
            let name = p.kernel.as_deref().unwrap_or("constant");
            let kernel = WeightKernel::parse(name)
                .ok_or_else(|| dfr_core::Error::InvalidArgument(format!("unknown kernel '{name}'")))?;
            ProcedureSpec::WeightInterp { kernel, a, b }
        }
        "local_constant" => ProcedureSpec::LocalConstant {
            omega: need(p.omega, "omega")?,
            a,
            b,
        },
        "spline" => ProcedureSpec::Spline { s: need(p.s, "s")? },
        other => bail!(dfr_core::Error::InvalidArgument(format!("unknown procedure '{other}'"))),
    })
}

/// What `--sigma` resolves to once the data are known.
pub enum Law {
    Gaussian(DMatrix<f64>),
    Empirical,
    Uniform(UniformSampler<f64>),
}

impl Law {
    pub fn as_law(&self) -> CovariateLaw<'_, f64> {
        match self {
            Law::Gaussian(s) => CovariateLaw::Gaussian(s),
            Law::Empirical => CovariateLaw::Empirical,
            Law::Uniform(u) => CovariateLaw::Sampler(u),
        }
    }
}

/// One-dimensional procedures default to uniform `x*` on `[a, b]`; everything
/// else to `N(0, Sigma)` with the dataset's covariance.
pub fn law(data: &DataArgs, p: &ProcArgs, loaded: &Loaded) -> Result<Law> {
    let (a, b) = interval(p);
    let d = loaded.data.d();
    Ok(match data.sigma.as_deref() {
        Some("empirical") => Law::Empirical,
        Some("uniform") => Law::Uniform(UniformSampler { a, b }),
        Some(s) => Law::Gaussian(named_covariance(s, d)?.expect("named Gaussian law")),
        None if is_one_dimensional(p) => Law::Uniform(UniformSampler { a, b }),
        None => Law::Gaussian(loaded.data.sigma.clone()),
    })
}

pub fn mc_config(p: &ProcArgs) -> McConfig {
    let base = McConfig::default();
    McConfig {
        n_draws: p.draws.unwrap_or(base.n_draws),
        seed: p.mc_seed.unwrap_or(base.seed),
        se_tolerance: None,
    }
}

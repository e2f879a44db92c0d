//! Scenario definitions and textual overrides.

use dfr_core::model::{BetaKind, CovKind, MeanKind};
use dfr_core::procedures::WeightKernel;
use dfr_core::{Error, GenConfig64, Result};

/// What a scenario sweeps over.
#[derive(Debug, Clone, PartialEq)]
pub enum Sweep {
    /// Subset sizes `p` along an ordering.
    Sizes(Vec<usize>),
    /// Ridge penalties.
    Lambdas(Vec<f64>),
    /// Local constant bandwidths.
    Bandwidths(Vec<f64>),
    /// Gradient-descent shrinkage for a single initial variable, per importance rank (1-based).
    Thetas { ranks: Vec<usize>, thetas: Vec<f64> },
    /// Number of initial variables.
    Qs(Vec<usize>),
    Kernels(Vec<WeightKernel>),
    /// Spline orders `s`; the degree is `2s - 1`.
    SplineOrders(Vec<usize>),
    /// `(alpha, eta)` grid for the analytic optimal sizes.
    Grid { alphas: Vec<f64>, etas: Vec<f64> },
}

/// Variable ordering used by subset sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ordering {
    Prescient,
    /// A fresh random permutation per replicate.
    Random,
}

/// Which replicate computation a scenario runs.
#[derive(Debug, Clone, PartialEq)]
pub enum Kind {
    /// Least squares on nested subsets; outputs are sweep criteria plus
    /// `log_df_random` and `df_approx`.
    Subset { ordering: Ordering },
    RidgeDf,
    LocalConstant { mc_draws: usize },
    WeightSchemes,
    Splines { mc_draws: usize },
    OptimalSize,
    GdSingleTheta,
    /// Prescient and a fixed random sequence of initial variables.
    GdQSweep,
    SquaredNormByQ,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    /// Figure or table this reproduces.
    pub anchor: String,
    pub description: String,
    pub generator: GenConfig64,
    pub sweep: Sweep,
    pub replicates: usize,
    /// Replicate count used in the original study.
    pub paper_replicates: usize,
    /// Metric names to keep; empty keeps everything the kind produces.
    pub outputs: Vec<String>,
    pub master_seed: u64,
    pub kind: Kind,
}

fn parse_num<F: std::str::FromStr>(key: &str, v: &str) -> Result<F> {
    v.trim()
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("{key}: cannot parse '{v}'")))
}

/// `a..b` (inclusive), `a..b:step`, or a comma list.
pub fn parse_usize_list(key: &str, v: &str) -> Result<Vec<usize>> {
    let v = v.trim();
    if let Some((lo, rest)) = v.split_once("..") {
        let (hi, step) = match rest.split_once(':') {
            Some((h, s)) => (h, parse_num::<usize>(key, s)?),
            None => (rest, 1),
        };
        let (lo, hi) = (parse_num::<usize>(key, lo)?, parse_num::<usize>(key, hi)?);
        if step == 0 || lo > hi {
            return Err(Error::InvalidArgument(format!("{key}: empty range '{v}'")));
        }
        return Ok((lo..=hi).step_by(step).collect());
    }
    v.split(',').map(|t| parse_num(key, t)).collect()
}

pub fn parse_f64_list(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',').map(|t| parse_num(key, t)).collect()
}

fn parse_mean(v: &str) -> Result<MeanKind> {
    match v.trim() {
        "linear" => Ok(MeanKind::Linear),
        "nonlinear" | "nonlinear_exp" => Ok(MeanKind::NonlinearExp),
        other => Err(Error::InvalidArgument(format!("mean: unknown kind '{other}'"))),
    }
}

impl Scenario {
    pub fn n_points(&self) -> usize {
        match &self.sweep {
            Sweep::Sizes(v) | Sweep::Qs(v) | Sweep::SplineOrders(v) => v.len(),
            Sweep::Lambdas(v) | Sweep::Bandwidths(v) => v.len(),
            Sweep::Thetas { ranks, thetas } => ranks.len() * thetas.len(),
            Sweep::Kernels(v) => v.len(),
            Sweep::Grid { alphas, etas } => alphas.len() * etas.len(),
        }
    }

    /// Applies one `key = value` override.
    ///
    /// Keys: `replicates`, `master_seed` (alias `seed`), `name`, `n`, `d`,
    /// `kappa`, `beta_norm2`, `sigma_eps2`, `mean`, `rho`, `outputs`, and
    /// `sweep`, whose value is parsed according to the scenario's sweep type.
    /// A rejected override leaves the scenario unchanged.
    pub fn apply_override(&mut self, key: &str, value: &str) -> Result<()> {
        let mut next = self.clone();
        next.set(key, value)?;
        next.validate()?;
        *self = next;
        Ok(())
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let g = &mut self.generator;
        match key {
            "replicates" | "reps" => self.replicates = parse_num(key, value)?,
            "master_seed" | "seed" => self.master_seed = parse_num(key, value)?,
            "name" => self.name = value.trim().to_string(),
            "n" => g.n = parse_num(key, value)?,
            "d" => g.d = parse_num(key, value)?,
            "kappa" => g.beta_kind = BetaKind::PolyDecay(parse_num(key, value)?),
            "beta_norm2" => g.beta_norm2 = parse_num(key, value)?,
            "sigma_eps2" => g.sigma_eps2 = parse_num(key, value)?,
            "mean" => g.mean_kind = parse_mean(value)?,
            "rho" => {
                let rho: f64 = parse_num(key, value)?;
                g.cov_kind = if rho == 0.0 {
                    CovKind::Identity
                } else {
                    CovKind::Equicorrelated(rho)
                };
            }
            "outputs" => {
                self.outputs = value
                    .split(',')
                    .map(|s| s.trim().to_string())
                    .filter(|s| !s.is_empty())
                    .collect()
            }
            "sweep" => {
                self.sweep = match &self.sweep {
                    Sweep::Sizes(_) => Sweep::Sizes(parse_usize_list(key, value)?),
                    Sweep::Qs(_) => Sweep::Qs(parse_usize_list(key, value)?),
                    Sweep::SplineOrders(_) => Sweep::SplineOrders(parse_usize_list(key, value)?),
                    Sweep::Lambdas(_) => Sweep::Lambdas(parse_f64_list(key, value)?),
                    Sweep::Bandwidths(_) => Sweep::Bandwidths(parse_f64_list(key, value)?),
                    Sweep::Thetas { ranks, .. } => Sweep::Thetas {
                        ranks: ranks.clone(),
                        thetas: parse_f64_list(key, value)?,
                    },
                    Sweep::Kernels(_) => Sweep::Kernels(
                        value
                            .split(',')
                            .map(|t| {
                                WeightKernel::parse(t.trim())
                                    .ok_or_else(|| Error::InvalidArgument(format!("sweep: unknown kernel '{t}'")))
                            })
                            .collect::<Result<_>>()?,
                    ),
                    Sweep::Grid { .. } => {
                        return Err(Error::InvalidArgument(
                            "sweep: use alphas/etas for the optimal-size grid".into(),
                        ))
                    }
                }
            }
            "alphas" | "etas" => match &mut self.sweep {
                Sweep::Grid { alphas, etas } => {
                    let v = parse_f64_list(key, value)?;
                    if key == "alphas" {
                        *alphas = v;
                    } else {
                        *etas = v;
                    }
                }
                _ => return Err(Error::InvalidArgument(format!("{key}: scenario has no (alpha, eta) grid"))),
            },
            "ranks" => match &mut self.sweep {
                Sweep::Thetas { ranks, .. } => *ranks = parse_usize_list(key, value)?,
                _ => return Err(Error::InvalidArgument("ranks: scenario has no theta sweep".into())),
            },
            other => return Err(Error::InvalidArgument(format!("unknown scenario key '{other}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::InvalidArgument("replicates must be positive".into()));
        }
        if self.n_points() == 0 {
            return Err(Error::InvalidArgument("sweep is empty".into()));
        }
        let g = &self.generator;
        if g.n < 2 || g.d < 1 {
            return Err(Error::InvalidArgument(format!("need n >= 2 and d >= 1, got n = {}, d = {}", g.n, g.d)));
        }
        match (&self.kind, &self.sweep) {
            (Kind::Subset { .. }, Sweep::Sizes(v)) => {
                if let Some(p) = v.iter().find(|&&p| p > g.d) {
                    return Err(Error::InvalidArgument(format!("subset size {p} exceeds d = {}", g.d)));
                }
            }
            (Kind::GdQSweep | Kind::SquaredNormByQ, Sweep::Qs(v)) => {
                if let Some(q) = v.iter().find(|&&q| q > g.n.min(g.d)) {
                    return Err(Error::InvalidArgument(format!("q = {q} exceeds min(n, d)")));
                }
            }
            (Kind::GdSingleTheta, Sweep::Thetas { ranks, thetas }) => {
                if ranks.iter().any(|&r| r == 0 || r > g.d) {
                    return Err(Error::InvalidArgument(format!("ranks must lie in 1..={}", g.d)));
                }
                if thetas.iter().any(|t| !(0.0..=1.0).contains(t)) {
                    return Err(Error::InvalidArgument("theta must lie in [0, 1]".into()));
                }
            }
            (Kind::RidgeDf, Sweep::Lambdas(v)) => {
                if v.iter().any(|&l| !(l > 0.0)) {
                    return Err(Error::InvalidArgument("lambda must be positive".into()));
                }
            }
            (Kind::LocalConstant { .. }, Sweep::Bandwidths(v)) => {
                if v.iter().any(|&w| !(w > 0.0)) {
                    return Err(Error::InvalidArgument("bandwidth must be positive".into()));
                }
            }
            (Kind::WeightSchemes, Sweep::Kernels(_)) | (Kind::OptimalSize, Sweep::Grid { .. }) => {}
            (Kind::Splines { .. }, Sweep::SplineOrders(v)) => {
                if v.iter().any(|&s| s == 0 || s >= g.n) {
                    return Err(Error::InvalidArgument(format!("spline orders must lie in 1..{}", g.n)));
                }
            }
            (k, s) => {
                return Err(Error::InvalidArgument(format!(
                    "sweep {s:?} does not fit scenario kind {k:?}"
                )))
            }
        }
        Ok(())
    }
}

//! One replicate of each scenario kind.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use dfr_core::dof::{df_approx, df_random, ApproxFamily, CovariateLaw, McConfig};
use dfr_core::gd::{expected_init_distance, init_simple_regression, interpolant_excess_bias, FMatrix};
use dfr_core::model::{draw_design, format_float, generate_dataset_with, make_covariance, random_permutation, Dataset};
use dfr_core::procedures::{HatSystem, ProcedureSpec};
use dfr_core::risk::excess_bias_analytic;
use dfr_core::sampling::{stream_rng, StreamRng, UniformSampler};
use dfr_core::selection::{analytic_optimal_size, criterion_sweep, prescient_order, Criterion, CvConfig, SweepOptions};
use dfr_core::{dof::weight_e_h_norm2_uniform, Error, Result};

use crate::scenario::{Kind, Ordering, Scenario, Sweep};

/// `(sweep_value, metric, value)`.
pub type Cell = (String, String, f64);

fn cell(sweep: impl Into<String>, metric: &str, value: f64) -> Cell {
    (sweep.into(), metric.to_string(), value)
}

fn mismatch(s: &Scenario) -> Error {
    Error::InvalidArgument(format!("scenario '{}': sweep does not fit its kind", s.name))
}

/// Stream reserved for draws shared by every replicate.
pub const SHARED_STREAM: u64 = u64::MAX;

/// Runs replicate `r` on stream `(master_seed, r)`.
pub fn run_replicate(s: &Scenario, r: usize) -> Result<Vec<Cell>> {
    let mut rng = stream_rng(s.master_seed, r as u64);
    let cells = match &s.kind {
        Kind::Subset { ordering } => subset(s, *ordering, &mut rng)?,
        Kind::RidgeDf => ridge(s, &mut rng)?,
        Kind::LocalConstant { mc_draws } => local_constant(s, *mc_draws, &mut rng)?,
        Kind::WeightSchemes => weight_schemes(s, &mut rng)?,
        Kind::Splines { mc_draws } => splines(s, *mc_draws, &mut rng)?,
        Kind::OptimalSize => optimal_size(s)?,
        Kind::GdSingleTheta => gd_single_theta(s, &mut rng)?,
        Kind::GdQSweep => gd_q_sweep(s, &mut rng)?,
        Kind::SquaredNormByQ => squared_norm_by_q(s, &mut rng)?,
    };
    Ok(if s.outputs.is_empty() {
        cells
    } else {
        cells.into_iter().filter(|c| s.outputs.contains(&c.1)).collect()
    })
}

fn subset(s: &Scenario, ordering: Ordering, rng: &mut StreamRng) -> Result<Vec<Cell>> {
    let Sweep::Sizes(sizes) = &s.sweep else {
        return Err(mismatch(s));
    };
    let data = generate_dataset_with(&s.generator, rng)?;
    let (n, d) = (data.n(), data.d());
    let beta = &data.mean_fn.as_ref().expect("generated data carries its truth").beta;
    let order = match ordering {
        Ordering::Prescient => prescient_order(beta),
        Ordering::Random => random_permutation(d, rng),
    };
    let wanted: Vec<&str> = if s.outputs.is_empty() {
        vec!["err_test", "df_random"]
    } else {
        s.outputs.iter().map(String::as_str).collect()
    };
    let mut criteria = Vec::new();
    for name in &wanted {
        let c = match *name {
            "log_df_random" => Criterion::DfRandom,
            "df_approx" => continue,
            other => Criterion::parse(other)
                .ok_or_else(|| Error::InvalidArgument(format!("unknown subset output '{other}'")))?,
        };
        if !criteria.contains(&c) {
            criteria.push(c);
        }
    }
    let cv = criteria.contains(&Criterion::KfoldCv).then(|| CvConfig {
        k: 5,
        seed: rng.random(),
    });
    let opts = SweepOptions {
        criteria,
        cv,
        test: None,
        sizes: Some(sizes.clone()),
    };
    let table = criterion_sweep(&data, &order, &opts)?;
    let mut out = Vec::new();
    for row in &table.rows {
        let p = row.p.to_string();
        for (c, v) in table.criteria.iter().zip(&row.values) {
            if let Some(v) = v {
                out.push(cell(&p, c.name(), *v));
                if *c == Criterion::DfRandom && *v > 0.0 {
                    out.push(cell(&p, "log_df_random", v.ln()));
                }
            }
        }
        if wanted.contains(&"df_approx") {
            if let Ok(v) = df_approx(n, row.p, ApproxFamily::AsymptoticEquicorrelated) {
                out.push(cell(&p, "df_approx", v));
            }
        }
    }
    Ok(out)
}

fn ridge(s: &Scenario, rng: &mut StreamRng) -> Result<Vec<Cell>> {
    let Sweep::Lambdas(lambdas) = &s.sweep else {
        return Err(mismatch(s));
    };
    let g = &s.generator;
    let sigma = make_covariance(&g.cov_kind, g.d)?;
    let x = draw_design(&sigma, g.n, rng)?;
    let mut out = Vec::new();
    for &lambda in lambdas {
        let hs = HatSystem::fit(ProcedureSpec::Ridge { lambda }, &x)?;
        let rep = df_random(&hs, CovariateLaw::Gaussian(&sigma), &McConfig::default())?;
        let v = format_float(lambda);
        out.push(cell(&v, "df_fixed", rep.df_fixed));
        out.push(cell(&v, "df_random", rep.df_random));
    }
    Ok(out)
}

fn column(nodes: &[f64]) -> DMatrix<f64> {
    DMatrix::from_column_slice(nodes.len(), 1, nodes)
}

fn equispaced(n: usize) -> Vec<f64> {
    (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
}

fn unit_uniform_df(hs: &HatSystem<f64>, mc_draws: usize, seed: u64) -> Result<(f64, f64)> {
    let sampler = UniformSampler { a: 0.0, b: 1.0 };
    let mc = McConfig {
        n_draws: mc_draws,
        seed,
        se_tolerance: None,
    };
    let rep = df_random(hs, CovariateLaw::Sampler(&sampler), &mc)?;
    Ok((rep.df_random, rep.se()))
}

fn local_constant(s: &Scenario, mc_draws: usize, rng: &mut StreamRng) -> Result<Vec<Cell>> {
    let Sweep::Bandwidths(omegas) = &s.sweep else {
        return Err(mismatch(s));
    };
    let x = column(&equispaced(s.generator.n));
    let seed: u64 = rng.random();
    let mut out = Vec::new();
    for &omega in omegas {
        let hs = HatSystem::fit(ProcedureSpec::LocalConstant { omega, a: 0.0, b: 1.0 }, &x)?;
        let (df, _) = unit_uniform_df(&hs, mc_draws, seed)?;
        let v = format_float(omega);
        out.push(cell(&v, "df_fixed", hs.h().trace()));
        out.push(cell(&v, "df_random", df));
    }
    Ok(out)
}

fn weight_schemes(s: &Scenario, rng: &mut StreamRng) -> Result<Vec<Cell>> {
    let Sweep::Kernels(kernels) = &s.sweep else {
        return Err(mismatch(s));
    };
    let n = s.generator.n;
    let mut nodes: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    nodes.sort_by(f64::total_cmp);
    let x = column(&nodes);
    let nf = n as f64;
    let mut out = Vec::new();
    for &kernel in kernels {
        let hs = HatSystem::fit(ProcedureSpec::WeightInterp { kernel, a: 0.0, b: 1.0 }, &x)?;
        let e_h = weight_e_h_norm2_uniform(kernel, &nodes, 0.0, 1.0)?;
        let df = hs.h().trace() + 0.5 * nf * (e_h - hs.h().norm_squared() / nf);
        out.push(cell(kernel.name(), "df_random", df));
        out.push(cell(kernel.name(), "df_random_over_n", df / nf));
    }
    Ok(out)
}

fn splines(s: &Scenario, mc_draws: usize, rng: &mut StreamRng) -> Result<Vec<Cell>> {
    let Sweep::SplineOrders(orders) = &s.sweep else {
        return Err(mismatch(s));
    };
    let n = s.generator.n;
    let x = column(&equispaced(n));
    let seed: u64 = rng.random();
    let mut out = Vec::new();
    for &order in orders {
        let hs = HatSystem::fit(ProcedureSpec::Spline { s: order }, &x)?;
        let (df, se) = unit_uniform_df(&hs, mc_draws, seed)?;
        let degree = (2 * order - 1).to_string();
        out.push(cell(&degree, "df_random", df));
        out.push(cell(&degree, "df_random_over_n", df / n as f64));
        out.push(cell(&degree, "mc_se", se / n as f64));
    }
    Ok(out)
}

fn optimal_size(s: &Scenario) -> Result<Vec<Cell>> {
    let Sweep::Grid { alphas, etas } = &s.sweep else {
        return Err(mismatch(s));
    };
    let mut out = Vec::new();
    for &alpha in alphas {
        for &eta in etas {
            let (gf, gr) = analytic_optimal_size(alpha, eta, s.generator.n)?;
            let v = format!("alpha={};eta={}", format_float(alpha), format_float(eta));
            out.push(cell(&v, "gamma_f", gf));
            out.push(cell(&v, "gamma_r", gr));
        }
    }
    Ok(out)
}

/// `(df_R, excess bias, ErrR_X)` of the gradient-descent limit started at `F y`.
///
/// `ErrR_X = ErrT_X + dB_X + 2 sigma^2 df_R / n`, with the expected training
/// error `||(I - H) mu||^2 / n + sigma^2 (1 - 2 tr H / n + tr(H^T H) / n)`.
pub fn gd_metrics(data: &Dataset<f64>, f: FMatrix<f64>) -> Result<(f64, f64, f64)> {
    let hs = HatSystem::fit(ProcedureSpec::GdInterp { f }, &data.x)?;
    let rep = df_random(&hs, CovariateLaw::Gaussian(&data.sigma), &McConfig::default())?;
    let mu = data.mu.as_ref().ok_or_else(|| Error::Missing("true means".into()))?;
    let mean_fn = data.mean_fn.as_ref().ok_or_else(|| Error::Missing("mean function".into()))?;
    let eb = excess_bias_analytic(&hs, mu, mean_fn, &data.sigma)?;
    let n = data.n() as f64;
    let h = hs.h();
    let resid = mu - h * mu;
    let s2 = data.sigma_eps2;
    let err_t = resid.norm_squared() / n + s2 * (1.0 - 2.0 * h.trace() / n + h.norm_squared() / n);
    Ok((rep.df_random, eb, err_t + eb + 2.0 * s2 * rep.df_random / n))
}

fn truth(data: &Dataset<f64>) -> &DVector<f64> {
    &data.mean_fn.as_ref().expect("generated data carries its truth").beta
}

fn gd_single_theta(s: &Scenario, rng: &mut StreamRng) -> Result<Vec<Cell>> {
    let Sweep::Thetas { ranks, thetas } = &s.sweep else {
        return Err(mismatch(s));
    };
    let data = generate_dataset_with(&s.generator, rng)?;
    let order = prescient_order(truth(&data));
    let mut out = Vec::new();
    for &rank in ranks {
        let j = order[rank - 1];
        for &theta in thetas {
            let (_, f) = init_simple_regression(&data.x, &data.y, &[j], &[theta])?;
            let (df, eb, err) = gd_metrics(&data, f)?;
            let v = format!("rank={rank};theta={}", format_float(theta));
            out.push(cell(&v, "df_random", df));
            out.push(cell(&v, "excess_bias", eb));
            out.push(cell(&v, "err_random", err));
        }
    }
    Ok(out)
}

/// The prescient sequence and the shared random one, with their labels.
fn gd_sequences(s: &Scenario, beta: &DVector<f64>) -> [(&'static str, Vec<usize>); 2] {
    let mut shared = stream_rng(s.master_seed, SHARED_STREAM);
    [
        ("prescient", prescient_order(beta)),
        ("random", random_permutation(beta.len(), &mut shared)),
    ]
}

fn gd_q_sweep(s: &Scenario, rng: &mut StreamRng) -> Result<Vec<Cell>> {
    let Sweep::Qs(qs) = &s.sweep else {
        return Err(mismatch(s));
    };
    let data = generate_dataset_with(&s.generator, rng)?;
    let mut out = Vec::new();
    for (label, seq) in gd_sequences(s, truth(&data)) {
        for &q in qs {
            let (_, f) = init_simple_regression(&data.x, &data.y, &seq[..q], &vec![1.0; q])?;
            let (df, eb, err) = gd_metrics(&data, f)?;
            let v = format!("{label};q={q}");
            out.push(cell(&v, "df_random", df));
            out.push(cell(&v, "excess_bias", eb));
            out.push(cell(&v, "err_random", err));
        }
    }
    Ok(out)
}

fn squared_norm_by_q(s: &Scenario, rng: &mut StreamRng) -> Result<Vec<Cell>> {
    let Sweep::Qs(qs) = &s.sweep else {
        return Err(mismatch(s));
    };
    let data = generate_dataset_with(&s.generator, rng)?;
    let beta = truth(&data);
    let order = prescient_order(beta);
    let n = data.n();
    let mut out = Vec::new();
    for &q in qs {
        let subset = &order[..q];
        let (_, f) = init_simple_regression(&data.x, &data.y, subset, &vec![1.0; q])?;
        let z = beta - &f.f * (&data.x * beta);
        let parts = interpolant_excess_bias(&data.x, beta, &f)?;
        let v = q.to_string();
        out.push(cell(&v, "expected_distance", expected_init_distance(beta, subset, n)?));
        out.push(cell(&v, "distance", z.norm_squared()));
        out.push(cell(&v, "null_distance", parts.norm_v2_z));
    }
    Ok(out)
}

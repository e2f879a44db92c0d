use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use dfr_core::dof::{df_random, DofMethod, DofReport};
use dfr_core::gd::{gd_limit, gd_run, init_simple_regression, interpolant_df, max_step, GDConfig};
use dfr_core::model::format_float;
use dfr_core::procedures::HatSystem;
use dfr_core::risk::{risk_report, Estimators, TruthConfig};
use dfr_core::sampling::{GaussianSampler, McEstimate};
use dfr_core::selection::{
    criterion_sweep, ingest_csv, order_variables, select, Criterion, CvConfig, Imputation, OrderStrategy, PipelineConfig,
    SweepOptions, Transform,
};
use dfr_core::{Dataset64, Error};
use dfr_experiments::{find, registry, run_scenario_to};
use nalgebra::DMatrix;

use crate::config::{echo, DataArgs, Experiment, GdArgs, IngestArgs, ProcArgs, SweepArgs};
use crate::inputs::{self, columns, Loaded};

const DEFAULT_CRITERIA: &str = "cp,aic,bic,loocv,err_hat_plus";

fn line(out: &mut dyn Write, key: &str, value: impl std::fmt::Display) -> Result<()> {
    writeln!(out, "{key} = {value}")?;
    Ok(())
}

fn num(v: f64) -> String {
    format_float(v)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), format_float)
}

fn method_name(m: DofMethod) -> String {
    match m {
        DofMethod::ExactLs => "exact_ls".into(),
        DofMethod::ExactRidge => "exact_ridge".into(),
        DofMethod::Analytic => "analytic".into(),
        DofMethod::Empirical => "empirical".into(),
        DofMethod::MonteCarlo { n_draws, .. } => format!("monte_carlo({n_draws})"),
    }
}

fn fit_dof(data: &DataArgs, proc: &ProcArgs, loaded: &Loaded) -> Result<(HatSystem<f64>, DofReport<f64>)> {
    let spec = inputs::procedure(proc, &loaded.data)?;
    let hs = HatSystem::fit(spec, &loaded.data.x)?;
    let law = inputs::law(data, proc, loaded)?;
    let rep = df_random(&hs, law.as_law(), &inputs::mc_config(proc))?;
    Ok((hs, rep))
}

fn print_dof(hs: &HatSystem<f64>, rep: &DofReport<f64>, data: &Dataset64, out: &mut dyn Write) -> Result<()> {
    line(out, "procedure", hs.spec().name())?;
    line(out, "n", data.n())?;
    line(out, "d", data.d())?;
    line(out, "df_fixed", num(rep.df_fixed))?;
    line(out, "df_random", num(rep.df_random))?;
    line(out, "df_random_se", num(rep.se()))?;
    line(out, "e_h_norm2", num(rep.e_h_norm2))?;
    line(out, "trace_hth_over_n", num(rep.trace_hth_over_n))?;
    line(out, "method", method_name(rep.method))?;
    line(out, "flagged", rep.flagged)
}

pub fn dof(data: &DataArgs, proc: &ProcArgs, out: &mut dyn Write) -> Result<()> {
    let loaded = inputs::load(data, Some(proc))?;
    let (hs, rep) = fit_dof(data, proc, &loaded)?;
    print_dof(&hs, &rep, &loaded.data, out)
}

fn estimate(v: &Option<McEstimate<f64>>) -> String {
    match v {
        Some(e) => format!("{} (se {})", num(e.value), num(e.se)),
        None => "undefined".into(),
    }
}

pub fn risk(data: &DataArgs, proc: &ProcArgs, truth_draws: Option<usize>, out: &mut dyn Write) -> Result<()> {
    let loaded = inputs::load(data, Some(proc))?;
    loaded.require_y()?;
    let (hs, rep) = fit_dof(data, proc, &loaded)?;
    let sampler = match truth_draws {
        Some(_) if loaded.data.mean_fn.is_some() => Some(GaussianSampler::new(&loaded.data.sigma)?),
        Some(_) => bail!(Error::Missing("true risks need generated data".into())),
        None => None,
    };
    let truth = sampler.as_ref().map(|s| TruthConfig {
        sampler: s,
        n_draws: truth_draws.unwrap_or(0),
        seed: proc.mc_seed.unwrap_or(0),
    });
    let report = risk_report(&hs, &loaded.data, &rep, truth)?;
    line(out, "procedure", hs.spec().name())?;
    line(out, "n", loaded.data.n())?;
    line(out, "d", loaded.data.d())?;
    line(out, "err_train", num(report.err_train))?;
    line(out, "err_fixed", opt(report.err_fixed))?;
    line(out, "err_random_true", estimate(&report.err_random_true))?;
    line(out, "excess_bias_true", estimate(&report.excess_bias_true))?;
    line(out, "df_fixed", num(report.df_fixed))?;
    line(out, "df_random", num(report.df_random))?;
    line(out, "xi", opt(report.xi))?;
    for name in Estimators::<f64>::NAMES {
        line(out, name, opt(report.estimators.get(name)))?;
    }
    Ok(())
}

fn order_strategy(spec: &str, data: &Dataset64) -> Result<OrderStrategy<f64>> {
    let (kind, arg) = spec.split_once(':').unwrap_or((spec, ""));
    Ok(match kind {
        "prescient" => {
            let f = data
                .mean_fn
                .as_ref()
                .ok_or_else(|| Error::Missing("prescient ordering needs generated data".into()))?;
            OrderStrategy::Prescient(f.beta.clone())
        }
        "forward" | "forward_rss" => OrderStrategy::ForwardRss,
        "random" => OrderStrategy::Random(if arg.is_empty() {
            0
        } else {
            arg.parse()
                .map_err(|_| Error::InvalidArgument(format!("bad seed in '{spec}'")))?
        }),
        "given" => OrderStrategy::Given(columns("order", arg, data.d())?),
        other => bail!(Error::InvalidArgument(format!("unknown ordering '{other}'"))),
    })
}

fn criterion(name: &str) -> Result<Criterion> {
    Criterion::parse(name).ok_or_else(|| anyhow!(Error::InvalidArgument(format!("unknown criterion '{name}'"))))
}

pub fn sweep(data: &DataArgs, args: &SweepArgs, out: &mut dyn Write) -> Result<()> {
    let loaded = inputs::load(data, None)?;
    loaded.require_y()?;
    let ds = &loaded.data;
    let default_order = if ds.mean_fn.is_some() { "prescient" } else { "forward" };
    let effective = SweepArgs {
        order: Some(args.order.clone().unwrap_or_else(|| default_order.to_string())),
        criteria: Some(args.criteria.clone().unwrap_or_else(|| DEFAULT_CRITERIA.to_string())),
        ..args.clone()
    };
    let order = order_variables(&ds.x, &ds.y, &order_strategy(effective.order.as_deref().unwrap_or_default(), ds)?)?;
    let mut criteria = Criterion::parse_list(effective.criteria.as_deref().unwrap_or_default())?;
    let chosen = args.select.as_deref().map(criterion).transpose()?;
    if let Some(c) = chosen {
        if !criteria.contains(&c) {
            criteria.push(c);
        }
    }
    let cv = (criteria.contains(&Criterion::KfoldCv) || args.cv_k.is_some()).then(|| CvConfig {
        k: args.cv_k.unwrap_or(CvConfig::default().k),
        seed: args.cv_seed.unwrap_or(0),
    });
    let test = args.test.as_deref().map(inputs::read_xy).transpose()?;
    let sizes = args
        .sizes
        .as_deref()
        .map(|s| dfr_experiments::scenario::parse_usize_list("sizes", s))
        .transpose()?;
    let table = criterion_sweep(ds, &order, &SweepOptions { criteria, cv, test, sizes })?;
    match &args.output {
        Some(path) => {
            write_file(path, |w| Ok(table.write_long_csv(w)?))?;
            let meta = format!("{}{}", echo("data", data), echo("sweep", &effective));
            fs::write(path.with_extension("meta"), meta).with_context(|| format!("writing meta for {}", path.display()))?;
        }
        None => table.write_long_csv(&mut *out)?,
    }
    if let Some(c) = chosen {
        let p_hat = select(&table, c)?;
        let text = format!("{} p_hat = {p_hat}", c.name());
        if args.output.is_some() {
            writeln!(out, "{text}")?;
        } else {
            eprintln!("{text}");
        }
    }
    Ok(())
}

fn write_file(path: &Path, body: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    body(&mut w)?;
    w.flush()?;
    Ok(())
}

pub fn gd(data: &DataArgs, args: &GdArgs, out: &mut dyn Write) -> Result<()> {
    let loaded = inputs::load(data, None)?;
    loaded.require_y()?;
    let ds = &loaded.data;
    let q = args.q.unwrap_or(5);
    if q > ds.d() {
        bail!(Error::InvalidArgument(format!("q = {q} exceeds d = {}", ds.d())));
    }
    let default_order = if ds.mean_fn.is_some() { "prescient" } else { "forward" };
    let order = order_variables(&ds.x, &ds.y, &order_strategy(args.order.as_deref().unwrap_or(default_order), ds)?)?;
    let theta = vec![args.theta.unwrap_or(1.0); q];
    let (beta0, f) = init_simple_regression(&ds.x, &ds.y, &order[..q], &theta)?;
    line(out, "q", q)?;
    match (&ds.mu, &ds.mean_fn) {
        (Some(_), Some(_)) => {
            let (df, eb, err) = dfr_experiments::replicate::gd_metrics(ds, f)?;
            line(out, "df_random", num(df))?;
            line(out, "excess_bias", num(eb))?;
            line(out, "err_random", num(err))?;
        }
        _ => line(out, "df_random", num(interpolant_df(&ds.x, &f, &ds.sigma)?))?,
    }
    if let Some(factor) = args.alpha_factor {
        let cfg = GDConfig {
            alpha: factor * max_step(&ds.x)?,
            max_iter: args.max_iter.unwrap_or(100_000),
            tol: 1e-12,
            beta0: beta0.clone(),
        };
        let run = gd_run(&ds.x, &ds.y, &cfg)?;
        let limit = gd_limit(&ds.x, &ds.y, &beta0)?;
        line(out, "iterations", run.iterations)?;
        line(out, "converged", run.converged)?;
        line(out, "residual_norm", num(run.residual_norm))?;
        line(out, "distance_to_limit", num((&run.beta - limit).norm()))?;
    }
    Ok(())
}

pub fn experiment(
    name: Option<String>,
    args: &Experiment,
    set: &[(String, String)],
    root: &Path,
    out: &mut dyn Write,
) -> Result<()> {
    if args.list {
        for s in registry() {
            writeln!(out, "{}\t{}\t{}", s.name, s.anchor, s.description)?;
        }
        return Ok(());
    }
    let name = name
        .or_else(|| args.name_from_file.clone())
        .ok_or_else(|| Error::Missing("scenario name (or --list)".into()))?;
    let mut s = find(&name)?;
    let mut overrides: Vec<(String, String)> = set.to_vec();
    if args.paper_scale {
        overrides.push(("reps".into(), s.paper_replicates.to_string()));
    }
    if let Some(r) = args.reps {
        overrides.push(("reps".into(), r.to_string()));
    }
    if let Some(seed) = args.seed {
        overrides.push(("seed".into(), seed.to_string()));
    }
    for (k, v) in &overrides {
        s.apply_override(k, v)?;
    }
    let result = run_scenario_to(&s, root, &overrides)?;
    line(out, "scenario", &s.name)?;
    line(out, "output", root.join(&s.name).display())?;
    line(out, "replicates", s.replicates)?;
    line(out, "summary_rows", result.summary.len())?;
    line(out, "failed_replicates", format!("{:?}", result.failed_replicates()))
}

fn parse_transforms(list: &[String]) -> Result<std::collections::BTreeMap<String, Transform>> {
    list.iter()
        .map(|kv| {
            let (col, kind) = kv
                .split_once('=')
                .ok_or_else(|| Error::InvalidArgument(format!("transform '{kv}' is not COL=KIND")))?;
            let t = Transform::parse(kind.trim())
                .ok_or_else(|| Error::InvalidArgument(format!("unknown transform '{kind}'")))?;
            Ok((col.trim().to_string(), t))
        })
        .collect()
}

fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    write_file(path, |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record((1..=m.ncols()).map(|j| format!("x{j}")))?;
        for i in 0..m.nrows() {
            csv.write_record(m.row(i).iter().map(|&v| format_float(v)))?;
        }
        csv.flush()?;
        Ok(())
    })
}

pub fn ingest(args: &IngestArgs, root: &Path, out: &mut dyn Write) -> Result<()> {
    let input = args.input.as_deref().ok_or_else(|| Error::Missing("--input".into()))?;
    let cfg = PipelineConfig {
        target: args.target.clone().ok_or_else(|| Error::Missing("--target".into()))?,
        features: args
            .features
            .as_deref()
            .map(|f| f.split(',').map(|s| s.trim().to_string()).collect()),
        train_size: args.train_size.ok_or_else(|| Error::Missing("--train-size".into()))?,
        test_size: args.test_size.ok_or_else(|| Error::Missing("--test-size".into()))?,
        strata_column: args.strata.clone(),
        transforms: parse_transforms(&args.transform)?,
        imputation: match &args.impute_group {
            Some(g) => Imputation::GroupMedian(g.clone()),
            None => Imputation::None,
        },
        seed: args.seed.unwrap_or(0),
    };
    let file = File::open(input).with_context(|| format!("opening {}", input.display()))?;
    let ing = ingest_csv::<f64, _>(file, &cfg)?;
    let dir = root.join(args.out_dir.as_deref().unwrap_or("ingest"));
    fs::create_dir_all(&dir)?;
    for (name, ds) in [("train.csv", &ing.train), ("test.csv", &ing.test), ("aux.csv", &ing.aux)] {
        write_file(&dir.join(name), |w| Ok(ds.write_csv(w)?))?;
    }
    write_matrix(&dir.join("sigma.csv"), &ing.train.sigma)?;
    let mut meta = echo("ingest", args);
    meta.push_str(&format!(
        "\n[result]\nfeatures = {:?}\nsigma_eps2 = {}\ntrain_rows = {}\ntest_rows = {}\naux_rows = {}\n",
        ing.features,
        num(ing.train.sigma_eps2),
        ing.train_rows.len(),
        ing.test_rows.len(),
        ing.aux_rows.len()
    ));
    fs::write(dir.join("meta"), meta)?;
    line(out, "output", dir.display())?;
    line(out, "features", ing.features.join(","))?;
    line(out, "train", ing.train.n())?;
    line(out, "test", ing.test.n())?;
    line(out, "aux", ing.aux.n())?;
    line(out, "sigma_eps2", num(ing.train.sigma_eps2))
}

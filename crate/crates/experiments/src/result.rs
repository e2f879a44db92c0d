//! Long and summary records, the on-disk layout and resumable execution.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use dfr_core::linalg::pairwise_sum;
use dfr_core::model::format_float;
use dfr_core::{Error, Result};

use crate::replicate::{run_replicate, Cell};
use crate::scenario::Scenario;

/// Metric recorded (with value 1 and an empty sweep value) for a replicate
/// that failed numerically.
pub const FAILED: &str = "failed";

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub scenario: String,
    pub replicate: usize,
    pub sweep_value: String,
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRecord {
    pub scenario: String,
    pub sweep_value: String,
    pub metric: String,
    pub mean: f64,
    /// Undefined for a single replicate.
    pub sd: Option<f64>,
    pub se: Option<f64>,
    pub n_reps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub scenario: String,
    pub long: Vec<Record>,
    pub summary: Vec<SummaryRecord>,
}

impl ExperimentResult {
    /// Builds the summary from long records in replicate order.
    pub fn from_long(scenario: &str, long: Vec<Record>) -> Self {
        let summary = summarise(scenario, &long);
        Self {
            scenario: scenario.to_string(),
            long,
            summary,
        }
    }

    pub fn failed_replicates(&self) -> Vec<usize> {
        self.long
            .iter()
            .filter(|r| r.metric == FAILED)
            .map(|r| r.replicate)
            .collect()
    }

    pub fn summary_row(&self, sweep_value: &str, metric: &str) -> Option<&SummaryRecord> {
        self.summary
            .iter()
            .find(|s| s.sweep_value == sweep_value && s.metric == metric)
    }

    /// Replicate values of one cell, in replicate order.
    pub fn values(&self, sweep_value: &str, metric: &str) -> Vec<f64> {
        self.long
            .iter()
            .filter(|r| r.sweep_value == sweep_value && r.metric == metric)
            .map(|r| r.value)
            .collect()
    }

    pub fn write_long_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(w);
        w.write_record(["scenario", "replicate", "sweep_value", "metric", "value"])?;
        for r in &self.long {
            w.write_record([
                r.scenario.as_str(),
                &r.replicate.to_string(),
                &r.sweep_value,
                &r.metric,
                &format_float(r.value),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_summary_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(w);
        w.write_record(["scenario", "sweep_value", "metric", "mean", "sd", "se", "n_reps"])?;
        let opt = |v: Option<f64>| v.map(format_float).unwrap_or_default();
        for s in &self.summary {
            w.write_record([
                s.scenario.as_str(),
                &s.sweep_value,
                &s.metric,
                &format_float(s.mean),
                &opt(s.sd),
                &opt(s.se),
                &s.n_reps.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a `long.csv` back.
    pub fn read_long_csv<R: std::io::Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut long = Vec::new();
        let mut scenario = String::new();
        for rec in rdr.records() {
            let rec = rec?;
            if rec.len() != 5 {
                return Err(Error::Csv(format!("expected 5 columns, got {}", rec.len())));
            }
            let parse_err = |what: &str| Error::Csv(format!("bad {what} in long.csv"));
            scenario = rec[0].to_string();
            long.push(Record {
                scenario: rec[0].to_string(),
                replicate: rec[1].parse().map_err(|_| parse_err("replicate"))?,
                sweep_value: rec[2].to_string(),
                metric: rec[3].to_string(),
                value: rec[4].parse().map_err(|_| parse_err("value"))?,
            });
        }
        Ok(Self::from_long(&scenario, long))
    }
}

/// Groups by `(sweep_value, metric)` in order of first appearance.
fn summarise(scenario: &str, long: &[Record]) -> Vec<SummaryRecord> {
    let mut index: HashMap<(&str, &str), usize> = HashMap::new();
    let mut groups: Vec<(&str, &str, Vec<f64>)> = Vec::new();
    for r in long {
        let key = (r.sweep_value.as_str(), r.metric.as_str());
        let k = *index.entry(key).or_insert_with(|| {
            groups.push((key.0, key.1, Vec::new()));
            groups.len() - 1
        });
        groups[k].2.push(r.value);
    }
    groups
        .into_iter()
        .map(|(sweep_value, metric, v)| {
            let m = v.len() as f64;
            let mean = pairwise_sum(&v) / m;
            let sd = (v.len() > 1).then(|| {
                let dev: Vec<f64> = v.iter().map(|x| (x - mean) * (x - mean)).collect();
                (pairwise_sum(&dev) / (m - 1.0)).sqrt()
            });
            SummaryRecord {
                scenario: scenario.to_string(),
                sweep_value: sweep_value.to_string(),
                metric: metric.to_string(),
                mean,
                sd,
                se: sd.map(|s| s / m.sqrt()),
                n_reps: v.len(),
            }
        })
        .collect()
}

/// Cells of one replicate; numerical failures become a single failure flag.
fn replicate_cells(s: &Scenario, r: usize) -> Result<Vec<Cell>> {
    match run_replicate(s, r) {
        Ok(cells) => Ok(cells),
        Err(e) if e.is_numerical() => Ok(vec![(String::new(), FAILED.to_string(), 1.0)]),
        Err(e) => Err(e),
    }
}

fn to_records(s: &Scenario, r: usize, cells: Vec<Cell>) -> impl Iterator<Item = Record> + '_ {
    cells.into_iter().map(move |(sweep_value, metric, value)| Record {
        scenario: s.name.clone(),
        replicate: r,
        sweep_value,
        metric,
        value,
    })
}

/// Runs every replicate in memory. Replicates run concurrently; the result
/// does not depend on the number of threads.
pub fn run_scenario(s: &Scenario) -> Result<ExperimentResult> {
    s.validate()?;
    let reps: Vec<Vec<Cell>> = (0..s.replicates)
        .into_par_iter()
        .map(|r| replicate_cells(s, r))
        .collect::<Result<_>>()?;
    let long = reps
        .into_iter()
        .enumerate()
        .flat_map(|(r, cells)| to_records(s, r, cells).collect::<Vec<_>>())
        .collect();
    Ok(ExperimentResult::from_long(&s.name, long))
}

/// Everything that determines a replicate's output; the replicate count is
/// deliberately absent so runs can be extended.
pub fn fingerprint(s: &Scenario) -> String {
    let mut t = s.clone();
    t.replicates = 0;
    t.paper_replicates = 0;
    format!("{t:?}")
}

/// Version string of the build, `git describe` style when available.
pub fn version() -> String {
    match option_env!("DFR_GIT_DESCRIBE") {
        Some(g) if !g.is_empty() => format!("{} ({g})", env!("CARGO_PKG_VERSION")),
        _ => env!("CARGO_PKG_VERSION").to_string(),
    }
}

fn toml_string(s: &str) -> String {
    let mut out = String::from("\"");
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// The `meta` file: scenario echo, seed, version and overrides, as `key = value` lines.
pub fn meta_text(s: &Scenario, overrides: &[(String, String)], result: &ExperimentResult) -> String {
    let mut m = String::new();
    let mut line = |k: &str, v: String| m.push_str(&format!("{k} = {v}\n"));
    line("scenario", toml_string(&s.name));
    line("anchor", toml_string(&s.anchor));
    line("description", toml_string(&s.description));
    line("master_seed", s.master_seed.to_string());
    line("replicates", s.replicates.to_string());
    line("paper_replicates", s.paper_replicates.to_string());
    line("version", toml_string(&version()));
    let g = &s.generator;
    line("n", g.n.to_string());
    line("d", g.d.to_string());
    line("mean_kind", toml_string(&format!("{:?}", g.mean_kind)));
    line("beta_kind", toml_string(&format!("{:?}", g.beta_kind)));
    line("beta_norm2", format_float(g.beta_norm2));
    line("cov_kind", toml_string(&format!("{:?}", g.cov_kind)));
    line("sigma_eps2", format_float(g.sigma_eps2));
    line("kind", toml_string(&format!("{:?}", s.kind)));
    line("sweep", toml_string(&format!("{:?}", s.sweep)));
    let list = |v: Vec<String>| format!("[{}]", v.join(", "));
    line("outputs", list(s.outputs.iter().map(|o| toml_string(o)).collect()));
    line(
        "overrides",
        list(overrides.iter().map(|(k, v)| toml_string(&format!("{k}={v}"))).collect()),
    );
    line(
        "failed_replicates",
        list(result.failed_replicates().iter().map(|r| r.to_string()).collect()),
    );
    m
}

fn shard_path(dir: &Path, r: usize) -> PathBuf {
    dir.join(format!("r{r:06}.csv"))
}

fn write_shard(dir: &Path, r: usize, cells: &[Cell]) -> Result<()> {
    let tmp = dir.join(format!(".r{r:06}.tmp"));
    {
        let mut w = csv::Writer::from_path(&tmp)?;
        w.write_record(["sweep_value", "metric", "value"])?;
        for (sv, m, v) in cells {
            w.write_record([sv.as_str(), m.as_str(), &format_float(*v)])?;
        }
        w.flush()?;
    }
    fs::rename(&tmp, shard_path(dir, r))?;
    Ok(())
}

fn read_shard(path: &Path) -> Result<Vec<Cell>> {
    let mut rdr = csv::Reader::from_path(path)?;
    rdr.records()
        .map(|rec| {
            let rec = rec?;
            let v = rec[2]
                .parse()
                .map_err(|_| Error::Csv(format!("bad value in {}", path.display())))?;
            Ok((rec[0].to_string(), rec[1].to_string(), v))
        })
        .collect()
}

/// Runs a scenario into `root/<name>/{long.csv, summary.csv, meta}`.
///
/// Finished replicates are kept as shards under `replicates/` and reused on
/// the next run of the same configuration, so an interrupted run resumes and
/// a rerun recomputes nothing.
pub fn run_scenario_to(s: &Scenario, root: &Path, overrides: &[(String, String)]) -> Result<ExperimentResult> {
    s.validate()?;
    let dir = root.join(&s.name);
    let shards = dir.join("replicates");
    let stamp = shards.join("fingerprint");
    let fp = fingerprint(s);
    if shards.exists() && fs::read_to_string(&stamp).ok().as_deref() != Some(fp.as_str()) {
        fs::remove_dir_all(&shards)?;
    }
    fs::create_dir_all(&shards)?;
    fs::write(&stamp, &fp)?;

    let missing: Vec<usize> = (0..s.replicates).filter(|&r| !shard_path(&shards, r).exists()).collect();
    missing
        .par_iter()
        .map(|&r| write_shard(&shards, r, &replicate_cells(s, r)?))
        .collect::<Result<Vec<()>>>()?;

    let mut long = Vec::new();
    for r in 0..s.replicates {
        long.extend(to_records(s, r, read_shard(&shard_path(&shards, r))?));
    }
    let result = ExperimentResult::from_long(&s.name, long);
    result.write_long_csv(fs::File::create(dir.join("long.csv"))?)?;
    result.write_summary_csv(fs::File::create(dir.join("summary.csv"))?)?;
    fs::write(dir.join("meta"), meta_text(s, overrides, &result))?;
    Ok(result)
}

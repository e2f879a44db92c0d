//! Flag sets and the TOML file that backs them. Every flag is optional so
//! that `flag.or(file)` followed by the command's own default gives the
//! override order defaults < file < flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use serde::{Deserialize, Serialize};

macro_rules! merge_options {
    ($ty:ident { $($field:ident),* $(,)? }) => {
        impl $ty {
            pub fn merge(self, file: Self) -> Self {
                Self { $($field: self.$field.or(file.$field)),* }
            }
        }
    };
}

/// Where the data comes from: a CSV file or the simulation generator.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataArgs {
    /// `x1..xd,y` CSV, or a bare design matrix when there is no `y` column.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Generator: observations.
    #[arg(long)]
    pub n: Option<usize>,
    /// Generator: covariates.
    #[arg(long)]
    pub d: Option<usize>,
    /// Generator: polynomial decay exponent of beta.
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Generator: coefficient shape, `poly` or `inverse`.
    #[arg(long)]
    pub beta: Option<String>,
    #[arg(long)]
    pub beta_norm2: Option<f64>,
    /// Noise variance; for CSV input it is the assumed sigma^2.
    #[arg(long)]
    pub sigma_eps2: Option<f64>,
    /// Generator: `linear` or `nonlinear`.
    #[arg(long)]
    pub mean: Option<String>,
    /// Generator: equicorrelation of the covariates.
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Law of x*: `identity`, `equicorrelated:RHO`, `empirical`, `uniform`, or a covariance CSV.
    #[arg(long)]
    pub sigma: Option<String>,
    /// Nodes of one-dimensional procedures without input: `equispaced` or `uniform`.
    #[arg(long)]
    pub nodes: Option<String>,
}

merge_options!(DataArgs { input, n, d, kappa, beta, beta_norm2, sigma_eps2, mean, rho, seed, sigma, nodes });

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProcArgs {
    /// `ls`, `ols`, `min_norm`, `ridge`, `weight`, `local_constant` or `spline`.
    #[arg(long)]
    pub proc: Option<String>,
    /// 1-based columns, `a..b`, `a..b:step` or a comma list.
    #[arg(long)]
    pub subset: Option<String>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Weight kernel: `constant`, `linear`, `quadratic` or `cosine`.
    #[arg(long)]
    pub kernel: Option<String>,
    /// Local constant bandwidth.
    #[arg(long)]
    pub omega: Option<f64>,
    /// Spline order; the degree is 2s - 1.
    #[arg(long)]
    pub s: Option<usize>,
    /// Interval of one-dimensional procedures.
    #[arg(long)]
    pub a: Option<f64>,
    #[arg(long)]
    pub b: Option<f64>,
    /// Monte Carlo draws where df_R has no closed form.
    #[arg(long)]
    pub draws: Option<usize>,
    #[arg(long)]
    pub mc_seed: Option<u64>,
}

merge_options!(ProcArgs { proc, subset, lambda, kernel, omega, s, a, b, draws, mc_seed });

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RiskFile {
    pub truth_draws: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepArgs {
    /// `prescient`, `forward`, `random[:SEED]` or `given:LIST` (1-based).
    #[arg(long)]
    pub order: Option<String>,
    /// Comma-separated criterion names.
    #[arg(long)]
    pub criteria: Option<String>,
    /// Model sizes; all of `0..=d` when absent.
    #[arg(long)]
    pub sizes: Option<String>,
    #[arg(long)]
    pub cv_k: Option<usize>,
    #[arg(long)]
    pub cv_seed: Option<u64>,
    /// Held-out `x1..xd,y` CSV for `err_test`.
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Long CSV destination; stdout when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Print the size chosen by this criterion.
    #[arg(long)]
    pub select: Option<String>,
}

merge_options!(SweepArgs { order, criteria, sizes, cv_k, cv_seed, test, output, select });

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GdArgs {
    /// Number of initial variables.
    #[arg(long)]
    pub q: Option<usize>,
    /// `prescient` or `random[:SEED]`.
    #[arg(long)]
    pub order: Option<String>,
    /// Shrinkage of every initial simple regression.
    #[arg(long)]
    pub theta: Option<f64>,
    /// Also iterate with step `factor * 2 / lambda_max`.
    #[arg(long)]
    pub alpha_factor: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
}

merge_options!(GdArgs { q, order, theta, alpha_factor, max_iter });

#[derive(Debug, Clone, Default, Args)]
pub struct ExperimentArgs {
    /// List registered scenarios with their anchors.
    #[arg(long)]
    pub list: bool,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Use the replicate count of the original study.
    #[arg(long, conflicts_with = "reps")]
    pub paper_scale: bool,
    /// Scenario override `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentFile {
    pub name: Option<String>,
    pub reps: Option<usize>,
    pub seed: Option<u64>,
    pub paper_scale: Option<bool>,
    pub set: BTreeMap<String, toml::Value>,
}

/// Effective experiment options after merging.
#[derive(Debug, Clone, Default)]
pub struct Experiment {
    pub list: bool,
    pub name_from_file: Option<String>,
    pub reps: Option<usize>,
    pub seed: Option<u64>,
    pub paper_scale: bool,
}

fn value_text(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

impl ExperimentArgs {
    /// Merged options plus the ordered `key=value` overrides, file first.
    pub fn merge(self, file: ExperimentFile) -> (Experiment, Vec<(String, String)>) {
        let mut set: Vec<(String, String)> = file.set.iter().map(|(k, v)| (k.clone(), value_text(v))).collect();
        for kv in &self.set {
            let (k, v) = kv.split_once('=').unwrap_or((kv.as_str(), ""));
            set.push((k.trim().to_string(), v.trim().to_string()));
        }
        let paper_scale = self.paper_scale || (self.reps.is_none() && file.paper_scale.unwrap_or(false));
        let reps = if self.paper_scale { None } else { self.reps.or(file.reps) };
        let merged = Experiment {
            list: self.list,
            name_from_file: file.name,
            reps,
            seed: self.seed.or(file.seed),
            paper_scale,
        };
        (merged, set)
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestArgs {
    /// Raw CSV with a header row.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub target: Option<String>,
    /// Comma-separated feature columns; every other numeric column when absent.
    #[arg(long)]
    pub features: Option<String>,
    #[arg(long)]
    pub train_size: Option<usize>,
    #[arg(long)]
    pub test_size: Option<usize>,
    /// Stratify the split by this column.
    #[arg(long)]
    pub strata: Option<String>,
    /// Impute missing values by the median within this column's groups.
    #[arg(long)]
    pub impute_group: Option<String>,
    /// `column=log|logit|none`; repeatable.
    #[arg(long = "transform", value_name = "COL=KIND")]
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub transform: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory name under the output root.
    #[arg(long)]
    pub out_dir: Option<String>,
}

impl IngestArgs {
    pub fn merge(self, file: Self) -> Self {
        Self {
            input: self.input.or(file.input),
            target: self.target.or(file.target),
            features: self.features.or(file.features),
            train_size: self.train_size.or(file.train_size),
            test_size: self.test_size.or(file.test_size),
            strata: self.strata.or(file.strata),
            impute_group: self.impute_group.or(file.impute_group),
            transform: if self.transform.is_empty() { file.transform } else { self.transform },
            seed: self.seed.or(file.seed),
            out_dir: self.out_dir.or(file.out_dir),
        }
    }
}

/// Sections of the configuration file; all optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub data: DataArgs,
    pub procedure: ProcArgs,
    pub risk: RiskFile,
    pub sweep: SweepArgs,
    pub gd: GdArgs,
    pub experiment: ExperimentFile,
    pub ingest: IngestArgs,
}

impl FileConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

/// `[section]` TOML echo of an effective configuration.
pub fn echo<S: Serialize>(section: &str, value: &S) -> String {
    let mut table = toml::Table::new();
    if let Ok(toml::Value::Table(t)) = toml::Value::try_from(value) {
        table.insert(section.to_string(), toml::Value::Table(t));
    }
    toml::to_string(&table).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_values() {
        let file: FileConfig = toml::from_str("[data]\nn = 30\nd = 4\n[procedure]\nproc = \"ridge\"\nlambda = 2.0\n").unwrap();
        let flags = DataArgs {
            n: Some(40),
            ..DataArgs::default()
        };
        let data = flags.merge(file.data);
        assert_eq!((data.n, data.d), (Some(40), Some(4)));
        let proc = ProcArgs::default().merge(file.procedure);
        assert_eq!(proc.lambda, Some(2.0));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<FileConfig>("[data]\nnn = 3\n").is_err());
        assert!(toml::from_str::<FileConfig>("[nope]\n").is_err());
    }

    #[test]
    fn experiment_overrides_keep_file_then_flag_order() {
        let file: FileConfig = toml::from_str("[experiment]\nreps = 4\n[experiment.set]\nsweep = \"1..9\"\nn = 30\n").unwrap();
        let flags = ExperimentArgs {
            set: vec!["sweep=1..5".into()],
            ..ExperimentArgs::default()
        };
        let (e, set) = flags.merge(file.experiment);
        assert_eq!(e.reps, Some(4));
        assert_eq!(
            set,
            vec![
                ("n".into(), "30".into()),
                ("sweep".into(), "1..9".into()),
                ("sweep".into(), "1..5".into())
            ]
        );
    }

    #[test]
    fn echo_skips_unset_fields() {
        let d = DataArgs {
            n: Some(5),
            ..DataArgs::default()
        };
        assert_eq!(echo("data", &d), "[data]\nn = 5\n");
    }
}

//! Real-data pipeline: imputation, transforms, stratified three-way split,
//! centering by the auxiliary split and plug-in estimates of `Sigma` and `sigma^2`.

use std::collections::BTreeMap;
use std::io::Read;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{random_permutation, Dataset};
use crate::procedures::{HatSystem, ProcedureSpec};
use crate::sampling::stream_rng;
use crate::scalar::{lit, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transform {
    None,
    Log,
    Logit,
}

impl Transform {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "none" => Some(Self::None),
            "log" => Some(Self::Log),
            "logit" => Some(Self::Logit),
            _ => None,
        }
    }

    pub fn apply(self, v: f64) -> Option<f64> {
        let out = match self {
            Self::None => v,
            Self::Log => v.ln(),
            Self::Logit => (v / (1.0 - v)).ln(),
        };
        out.is_finite().then_some(out)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Imputation {
    None,
    /// Median of the observed values within each level of this column.
    GroupMedian(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub target: String,
    /// Feature columns; every other numeric column when absent.
    pub features: Option<Vec<String>>,
    pub train_size: usize,
    pub test_size: usize,
    pub strata_column: Option<String>,
    pub transforms: BTreeMap<String, Transform>,
    pub imputation: Imputation,
    pub seed: u64,
}

/// The three disjoint splits; all share the auxiliary centring, `Sigma_hat` and `sigma_hat^2`.
#[derive(Debug, Clone)]
pub struct Ingested<T: Scalar> {
    pub train: Dataset<T>,
    pub test: Dataset<T>,
    pub aux: Dataset<T>,
    pub features: Vec<String>,
    /// Original row indices (0-based, data rows only) of each split.
    pub train_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
    pub aux_rows: Vec<usize>,
}

fn is_missing(s: &str) -> bool {
    matches!(s.trim(), "" | "NA" | "na" | "NaN" | "nan" | "null" | "NULL")
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

/// Proportional allocation of `total` over `sizes` with largest-remainder rounding.
pub fn proportional_allocation(sizes: &[usize], total: usize) -> Result<Vec<usize>> {
    let all: usize = sizes.iter().sum();
    if total > all {
        return Err(Error::InvalidArgument(format!("cannot allocate {total} of {all} rows")));
    }
    if all == 0 {
        return Ok(vec![0; sizes.len()]);
    }
    let exact: Vec<f64> = sizes.iter().map(|&s| s as f64 * total as f64 / all as f64).collect();
    let mut alloc: Vec<usize> = exact.iter().map(|v| v.floor() as usize).collect();
    let mut left = total - alloc.iter().sum::<usize>();
    let mut by_rem: Vec<usize> = (0..sizes.len()).collect();
    by_rem.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &k in by_rem.iter().cycle() {
        if left == 0 {
            break;
        }
        if alloc[k] < sizes[k] {
            alloc[k] += 1;
            left -= 1;
        }
    }
    Ok(alloc)
}

/// Reads, imputes, transforms, splits and centres a CSV file.
pub fn ingest_csv<T: Scalar, R: Read>(reader: R, cfg: &PipelineConfig) -> Result<Ingested<T>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let records: Vec<csv::StringRecord> = rdr.records().collect::<std::result::Result<_, _>>()?;
    let m = records.len();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Missing(format!("column '{name}' not in the header")))
    };
    let target = col(&cfg.target)?;
    let strata = cfg.strata_column.as_deref().map(col).transpose()?;
    let group = match &cfg.imputation {
        Imputation::GroupMedian(g) => Some(col(g)?),
        Imputation::None => None,
    };
    let features: Vec<usize> = match &cfg.features {
        Some(names) => names.iter().map(|s| col(s)).collect::<Result<_>>()?,
        None => (0..header.len())
            .filter(|&j| j != target && Some(j) != strata && Some(j) != group)
            .filter(|&j| {
                records
                    .iter()
                    .all(|r| is_missing(&r[j]) || r[j].parse::<f64>().is_ok())
            })
            .collect(),
    };
    if features.is_empty() {
        return Err(Error::InvalidArgument("no feature columns".into()));
    }
    for name in cfg.transforms.keys() {
        col(name)?;
    }
    let cols: Vec<usize> = features.iter().copied().chain(std::iter::once(target)).collect();

    // Raw numeric matrix with NaN for missing cells.
    let mut raw = vec![vec![f64::NAN; cols.len()]; m];
    for (i, r) in records.iter().enumerate() {
        for (k, &j) in cols.iter().enumerate() {
            let s = &r[j];
            if !is_missing(s) {
                raw[i][k] = s.trim().parse::<f64>().map_err(|_| {
                    Error::InvalidArgument(format!("row {}: column '{}' is not numeric: '{s}'", i + 1, header[j]))
                })?;
            }
        }
    }

    if let Some(g) = group {
        let mut levels: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, r) in records.iter().enumerate() {
            levels.entry(r.get(g).unwrap_or("")).or_default().push(i);
        }
        for k in 0..cols.len() {
            for (level, idx) in &levels {
                let mut obs: Vec<f64> = idx.iter().map(|&i| raw[i][k]).filter(|v| !v.is_nan()).collect();
                if obs.len() == idx.len() {
                    continue;
                }
                if obs.is_empty() {
                    return Err(Error::InvalidArgument(format!(
                        "column '{}' has no observed values in group '{level}'",
                        header[cols[k]]
                    )));
                }
                let med = median(&mut obs);
                for &i in idx {
                    if raw[i][k].is_nan() {
                        raw[i][k] = med;
                    }
                }
            }
        }
    }
    for (k, &j) in cols.iter().enumerate() {
        let t = cfg.transforms.get(&header[j]).copied().unwrap_or(Transform::None);
        for (i, row) in raw.iter_mut().enumerate() {
            if row[k].is_nan() {
                return Err(Error::InvalidArgument(format!(
                    "row {}: column '{}' is missing after imputation",
                    i + 1,
                    header[j]
                )));
            }
            row[k] = t.apply(row[k]).ok_or_else(|| {
                Error::InvalidArgument(format!("row {}: {t:?} undefined for column '{}'", i + 1, header[j]))
            })?;
        }
    }

    // Stratified split.
    if cfg.train_size + cfg.test_size > m {
        return Err(Error::InvalidArgument(format!(
            "train_size + test_size = {} exceeds {m} rows",
            cfg.train_size + cfg.test_size
        )));
    }
    let mut strata_rows: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        let key = strata.map(|s| r[s].to_string()).unwrap_or_default();
        strata_rows.entry(key).or_default().push(i);
    }
    let mut rng = stream_rng(cfg.seed, 0);
    let groups: Vec<Vec<usize>> = strata_rows
        .into_values()
        .map(|rows| {
            let perm = random_permutation(rows.len(), &mut rng);
            perm.into_iter().map(|k| rows[k]).collect()
        })
        .collect();
    let sizes: Vec<usize> = groups.iter().map(Vec::len).collect();
    let train_alloc = proportional_allocation(&sizes, cfg.train_size)?;
    let rest: Vec<usize> = sizes.iter().zip(&train_alloc).map(|(s, a)| s - a).collect();
    let test_alloc = proportional_allocation(&rest, cfg.test_size)?;
    let (mut train_rows, mut test_rows, mut aux_rows) = (Vec::new(), Vec::new(), Vec::new());
    for (g, rows) in groups.iter().enumerate() {
        let (a, b) = (train_alloc[g], test_alloc[g]);
        train_rows.extend_from_slice(&rows[..a]);
        test_rows.extend_from_slice(&rows[a..a + b]);
        aux_rows.extend_from_slice(&rows[a + b..]);
    }
    train_rows.sort_unstable();
    test_rows.sort_unstable();
    aux_rows.sort_unstable();
    let d = features.len();
    if aux_rows.len() <= d + 1 {
        return Err(Error::InvalidArgument(format!(
            "auxiliary split has {} rows; estimating Sigma and sigma^2 needs more than d + 1 = {}",
            aux_rows.len(),
            d + 1
        )));
    }

    // Centre by auxiliary means.
    let mean: Vec<f64> = (0..=d)
        .map(|k| aux_rows.iter().map(|&i| raw[i][k]).sum::<f64>() / aux_rows.len() as f64)
        .collect();
    let block = |rows: &[usize]| -> (DMatrix<T>, DVector<T>) {
        let x = DMatrix::from_fn(rows.len(), d, |i, k| lit(raw[rows[i]][k] - mean[k]));
        let y = DVector::from_fn(rows.len(), |i, _| lit(raw[rows[i]][d] - mean[d]));
        (x, y)
    };
    let (xa, ya) = block(&aux_rows);
    let ma = lit::<T>(aux_rows.len() as f64);
    let mut sigma = xa.tr_mul(&xa) / (ma - T::one());
    crate::linalg::symmetrize(&mut sigma);
    let full = HatSystem::fit(ProcedureSpec::Ols { subset: (0..d).collect() }, &xa)?;
    let rss = (&ya - full.fitted(&ya)?).norm_squared();
    let sigma_eps2 = rss / lit((aux_rows.len() - d - 1) as f64);

    let make = |rows: &[usize]| -> Result<Dataset<T>> {
        let (x, y) = block(rows);
        Dataset::observed(x, y, sigma_eps2, sigma.clone())
    };
    Ok(Ingested {
        train: make(&train_rows)?,
        test: make(&test_rows)?,
        aux: make(&aux_rows)?,
        features: features.iter().map(|&j| header[j].clone()).collect(),
        train_rows,
        test_rows,
        aux_rows,
    })
}

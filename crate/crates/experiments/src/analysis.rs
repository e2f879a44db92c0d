//! Cross-replicate comparisons of risk estimators over a size sweep.

use std::collections::{BTreeMap, HashMap};

use dfr_core::linalg::pairwise_sum;

use crate::result::ExperimentResult;

/// One metric of one result.
pub type Series<'a> = (&'a ExperimentResult, &'a str);

/// `(replicate, p) -> value` for a size sweep; non-numeric sweep values are skipped.
fn by_replicate_and_size(series: Series<'_>) -> HashMap<(usize, usize), f64> {
    let (res, metric) = series;
    res.long
        .iter()
        .filter(|r| r.metric == metric)
        .filter_map(|r| Some(((r.replicate, r.sweep_value.parse().ok()?), r.value)))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelativeMse {
    pub p: usize,
    /// `None` when the reference has zero squared error.
    pub pi: Option<f64>,
    /// Replicates with all three values defined.
    pub n_reps: usize,
}

/// `Pi(p) = sum_m (est_m - truth_m)^2 / sum_m (ref_m - truth_m)^2` over the
/// replicates where all three are defined, for every swept `p != n`.
pub fn relative_mse(estimator: Series<'_>, reference: Series<'_>, truth: Series<'_>, n: usize) -> Vec<RelativeMse> {
    let est = by_replicate_and_size(estimator);
    let refr = by_replicate_and_size(reference);
    let tru = by_replicate_and_size(truth);
    let mut keys: Vec<(usize, usize)> = tru.keys().copied().collect();
    keys.sort_by_key(|&(r, p)| (p, r));
    let mut out = Vec::new();
    let mut i = 0;
    while i < keys.len() {
        let p = keys[i].1;
        let (mut num, mut den) = (Vec::new(), Vec::new());
        while i < keys.len() && keys[i].1 == p {
            let k = keys[i];
            if let (Some(e), Some(f)) = (est.get(&k), refr.get(&k)) {
                let t = tru[&k];
                num.push((e - t) * (e - t));
                den.push((f - t) * (f - t));
            }
            i += 1;
        }
        if p == n || num.is_empty() {
            continue;
        }
        let d = pairwise_sum(&den);
        out.push(RelativeMse {
            p,
            pi: (d > 0.0).then(|| pairwise_sum(&num) / d),
            n_reps: num.len(),
        });
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionHistogram {
    pub criterion: String,
    /// Count of replicates per offset `p_hat - p_star`.
    pub counts: BTreeMap<i64, usize>,
    /// Replicates contributing (both minimisers defined).
    pub total: usize,
    /// Fraction of replicates with `|p_hat - p_star| <= 2`.
    pub mass_within_2: f64,
}

impl SelectionHistogram {
    pub fn count(&self, offset: i64) -> usize {
        self.counts.get(&offset).copied().unwrap_or(0)
    }
}

/// Smallest minimising `p` per replicate.
fn minimisers(series: Series<'_>) -> BTreeMap<usize, usize> {
    let mut best: BTreeMap<usize, (usize, f64)> = BTreeMap::new();
    for ((r, p), v) in by_replicate_and_size(series) {
        if v.is_nan() {
            continue;
        }
        let e = best.entry(r).or_insert((p, v));
        if v < e.1 || (v == e.1 && p < e.0) {
            *e = (p, v);
        }
    }
    best.into_iter().map(|(r, (p, _))| (r, p)).collect()
}

/// Histogram of `p_hat - p_star` per criterion, with `p_star` the minimiser of `truth`.
pub fn selection_histogram(result: &ExperimentResult, criteria: &[&str], truth: &str) -> Vec<SelectionHistogram> {
    let star = minimisers((result, truth));
    criteria
        .iter()
        .map(|&c| {
            let hat = minimisers((result, c));
            let mut counts = BTreeMap::new();
            let mut total = 0;
            for (r, &ps) in &star {
                if let Some(&ph) = hat.get(r) {
                    *counts.entry(ph as i64 - ps as i64).or_insert(0) += 1;
                    total += 1;
                }
            }
            let near: usize = counts.iter().filter(|(o, _)| o.abs() <= 2).map(|(_, c)| c).sum();
            SelectionHistogram {
                criterion: c.to_string(),
                counts,
                total,
                mass_within_2: if total > 0 { near as f64 / total as f64 } else { 0.0 },
            }
        })
        .collect()
}

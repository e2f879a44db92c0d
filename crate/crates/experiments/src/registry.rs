//! Built-in scenarios, one per reproduced figure or table.

use dfr_core::model::{BetaKind, CovKind, MeanKind};
use dfr_core::procedures::WeightKernel;
use dfr_core::{Error, GenConfig64, Result};

use crate::scenario::{Kind, Ordering, Scenario, Sweep};

pub const DEFAULT_SEED: u64 = 20_240_611;

fn generator(n: usize, d: usize, mean_kind: MeanKind, beta_kind: BetaKind<f64>, cov_kind: CovKind<f64>) -> GenConfig64 {
    GenConfig64 {
        n,
        d,
        mean_kind,
        beta_kind,
        beta_norm2: 10.0,
        cov_kind,
        sigma_eps2: 1.0,
        seed: 0,
    }
}

fn poly(n: usize, d: usize, mean: MeanKind, kappa: f64) -> GenConfig64 {
    generator(n, d, mean, BetaKind::PolyDecay(kappa), CovKind::Identity)
}

fn logspace(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    let (a, b) = (lo.log10(), hi.log10());
    (0..k).map(|i| 10f64.powf(a + (b - a) * i as f64 / (k - 1) as f64)).collect()
}

fn linspace(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    (0..k).map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64).collect()
}

fn strings(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

#[allow(clippy::too_many_arguments)]
fn scenario(
    name: &str,
    anchor: &str,
    description: &str,
    generator: GenConfig64,
    sweep: Sweep,
    replicates: usize,
    paper_replicates: usize,
    outputs: &[&str],
    kind: Kind,
) -> Scenario {
    Scenario {
        name: name.into(),
        anchor: anchor.into(),
        description: description.into(),
        generator,
        sweep,
        replicates,
        paper_replicates,
        outputs: strings(outputs),
        master_seed: DEFAULT_SEED,
        kind,
    }
}

fn estimation_study(name: &str, anchor: &str, description: &str, mean: MeanKind, kappa: f64, outputs: &[&str]) -> Scenario {
    scenario(
        name,
        anchor,
        description,
        poly(50, 120, mean, kappa),
        Sweep::Sizes((1..=120).collect()),
        500,
        500,
        outputs,
        Kind::Subset {
            ordering: Ordering::Prescient,
        },
    )
}

/// Every registered scenario, in a stable order.
pub fn registry() -> Vec<Scenario> {
    let subset = Kind::Subset {
        ordering: Ordering::Prescient,
    };
    let fig1 = generator(20, 100, MeanKind::Linear, BetaKind::InverseIndex, CovKind::Identity);
    let delta = ["delta", "delta_plus", "delta_plusplus", "excess_bias"];
    let mut out = vec![
        scenario(
            "double_descent_fig1",
            "Fig 1",
            "Test error and df of least squares along the prescient order, n = 20, d = 100, beta ~ 1/j",
            fig1.clone(),
            Sweep::Sizes((1..=100).collect()),
            200,
            200,
            &["err_test", "err_train", "df_fixed", "df_random"],
            subset.clone(),
        ),
        scenario(
            "ridge_df_p10",
            "Fig (ridge df), left",
            "df_R and df_F of ridge against lambda, n = 20, p = 10",
            poly(20, 10, MeanKind::Linear, 5.0),
            Sweep::Lambdas(logspace(1e-3, 1e3, 31)),
            100,
            1,
            &["df_fixed", "df_random"],
            Kind::RidgeDf,
        ),
        scenario(
            "ridge_df_p80",
            "Fig (ridge df), right",
            "df_R and df_F of ridge against lambda, n = 20, p = 80",
            poly(20, 80, MeanKind::Linear, 5.0),
            Sweep::Lambdas(logspace(1e-3, 1e3, 31)),
            100,
            1,
            &["df_fixed", "df_random"],
            Kind::RidgeDf,
        ),
        scenario(
            "local_constant_bandwidth",
            "Fig (local constant bandwidth)",
            "df_R and df_F of the local constant smoother against the bandwidth, n = 11 equispaced nodes",
            poly(11, 1, MeanKind::Linear, 1.0),
            Sweep::Bandwidths(linspace(0.05, 1.2, 47)),
            1,
            1,
            &["df_fixed", "df_random"],
            Kind::LocalConstant { mc_draws: 100_000 },
        ),
        scenario(
            "weight_table1",
            "Table 1",
            "df_R / n of the four weight-scheme interpolants, n = 2000 uniform nodes",
            poly(2000, 1, MeanKind::Linear, 1.0),
            Sweep::Kernels(vec![
                WeightKernel::Constant,
                WeightKernel::Linear,
                WeightKernel::Quadratic,
                WeightKernel::Cosine,
            ]),
            50,
            50,
            &["df_random_over_n"],
            Kind::WeightSchemes,
        ),
        scenario(
            "spline_table2",
            "Table 2",
            "df_R / n of interpolating splines of degree 2s - 1, n = 21 equispaced nodes, 10^4 draws",
            poly(21, 1, MeanKind::Linear, 1.0),
            Sweep::SplineOrders((1..=6).collect()),
            1,
            1,
            &["df_random_over_n", "mc_se"],
            Kind::Splines { mc_draws: 10_000 },
        ),
        scenario(
            "df_limit_equicorrelated",
            "Fig (df limit)",
            "df_R along random orders with equicorrelated features against its limit, n = 20, d = 100",
            generator(20, 100, MeanKind::Linear, BetaKind::InverseIndex, CovKind::Equicorrelated(0.5)),
            Sweep::Sizes((1..=100).collect()),
            100,
            100,
            &["df_random", "df_fixed", "df_approx"],
            Kind::Subset {
                ordering: Ordering::Random,
            },
        ),
        scenario(
            "double_descent_fold",
            "Fig (double-descent fold)",
            "Test error against log df_R for the double-descent setting",
            fig1,
            Sweep::Sizes((1..=100).collect()),
            200,
            200,
            &["err_test", "log_df_random"],
            subset,
        ),
        scenario(
            "cp_vs_errtilde",
            "Fig (Cp vs ErrR-tilde)",
            "Optimal relative model sizes under expected Cp and the C_p-type Random-X criterion, d = n = 100",
            poly(100, 100, MeanKind::Linear, 1.0),
            Sweep::Grid {
                alphas: (1..=20).map(|k| 0.25 * k as f64).collect(),
                etas: linspace(1.0, 10.0, 20),
            },
            1,
            1,
            &["gamma_f", "gamma_r"],
            Kind::OptimalSize,
        ),
    ];
    for (mean, m) in [(MeanKind::Linear, "linear"), (MeanKind::NonlinearExp, "nonlinear")] {
        for kappa in [1.0, 5.0] {
            out.push(estimation_study(
                &format!("delta_comparison_{m}_k{kappa}"),
                "Fig (delta comparison)",
                &format!("delta-hat and its corrections against the true excess bias, {m} mean, kappa = {kappa}"),
                mean,
                kappa,
                &delta,
            ));
        }
    }
    out.extend([
        estimation_study(
            "estimator_comparison",
            "Fig (estimator comparison)",
            "LOOCV against the corrected Random-X estimator, linear mean, kappa = 5",
            MeanKind::Linear,
            5.0,
            &["loocv", "err_hat_plus", "err_random", "err_test"],
        ),
        estimation_study(
            "relative_mse",
            "Fig (relative MSE)",
            "Replicates for the relative MSE of the corrected estimator to LOOCV against ErrR_X, linear mean, kappa = 5",
            MeanKind::Linear,
            5.0,
            &["loocv", "err_hat_plus", "err_random"],
        ),
        estimation_study(
            "selection_histogram",
            "Fig (selection histograms)",
            "Selected minus optimal size for LOOCV, 5-fold CV and the corrected estimator, linear mean, kappa = 5",
            MeanKind::Linear,
            5.0,
            &["loocv", "kfold_cv", "err_hat_plus", "err_test"],
        ),
        scenario(
            "gd_single_theta",
            "Fig (gd single-theta)",
            "df_R, excess bias and risk of gradient-descent interpolants started from one variable, n = 20, p = 60",
            poly(20, 60, MeanKind::Linear, 5.0),
            Sweep::Thetas {
                ranks: vec![1, 5, 15, 40],
                thetas: linspace(0.0, 1.0, 11),
            },
            500,
            500,
            &["df_random", "excess_bias", "err_random"],
            Kind::GdSingleTheta,
        ),
        scenario(
            "gd_q_sweep",
            "Fig (gd q-sweep)",
            "df_R, excess bias and risk against the number of initial variables, prescient and fixed random sequences",
            poly(20, 60, MeanKind::Linear, 5.0),
            Sweep::Qs((0..=20).collect()),
            500,
            500,
            &["df_random", "excess_bias", "err_random"],
            Kind::GdQSweep,
        ),
        scenario(
            "squared_norm_by_q",
            "Fig (squared-norm-by-q)",
            "||beta - beta_tilde||^2, its null-space part and the expected distance along the prescient sequence",
            poly(20, 60, MeanKind::Linear, 5.0),
            Sweep::Qs((0..=20).collect()),
            500,
            500,
            &["expected_distance", "distance", "null_distance"],
            Kind::SquaredNormByQ,
        ),
    ]);
    out
}

pub fn scenario_names() -> Vec<String> {
    registry().into_iter().map(|s| s.name).collect()
}

/// Looks up a registered scenario by name.
pub fn find(name: &str) -> Result<Scenario> {
    registry().into_iter().find(|s| s.name == name).ok_or_else(|| {
        Error::InvalidArgument(format!(
            "unknown scenario '{name}'; valid names: {}",
            scenario_names().join(", ")
        ))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_is_valid_and_unique() {
        let all = registry();
        let mut names: Vec<_> = all.iter().map(|s| s.name.clone()).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), all.len());
        for s in &all {
            s.validate().unwrap();
            assert!(!s.anchor.is_empty());
        }
        for anchor in ["Fig 1", "Table 1", "Table 2", "Fig (df limit)", "Fig (gd q-sweep)"] {
            assert!(all.iter().any(|s| s.anchor == anchor), "{anchor}");
        }
    }

    #[test]
    fn unknown_name_lists_valid_ones() {
        let e = find("nope").unwrap_err().to_string();
        assert!(e.contains("double_descent_fig1") && e.contains("spline_table2"));
    }

    #[test]
    fn overrides_are_validated() {
        let mut s = find("double_descent_fig1").unwrap();
        s.apply_override("reps", "50").unwrap();
        s.apply_override("seed", "7").unwrap();
        s.apply_override("sweep", "1..40:3").unwrap();
        assert_eq!(s.replicates, 50);
        assert_eq!(s.master_seed, 7);
        assert_eq!(s.sweep, Sweep::Sizes((1..=40).step_by(3).collect()));
        assert!(s.apply_override("sweep", "1..101").is_err());
        assert!(s.apply_override("colour", "red").is_err());
        assert!(s.apply_override("alphas", "1,2").is_err());
    }
}

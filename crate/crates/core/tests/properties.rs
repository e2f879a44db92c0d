use dfr_core::dof::{df_random, CovariateLaw, McConfig};
use dfr_core::gd::{gd_limit, interpolant_df, FMatrix};
use dfr_core::model::draw_design;
use dfr_core::procedures::{predict, HatSystem, ProcedureSpec};
use dfr_core::risk::{a_matrix, delta_hat, delta_plus, delta_plusplus, err_hat, loocv_error};
use dfr_core::sampling::{standard_normal_vector, stream_rng};
use dfr_core::selection::{
    check_permutation, prescient_order, proportional_allocation, select, Criterion, SweepRow, SweepTable,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn design(n: usize, d: usize, seed: u64) -> DMatrix<f64> {
    draw_design(&DMatrix::identity(d, d), n, &mut stream_rng(seed, 0)).unwrap()
}

fn brute_loocv(x: &DMatrix<f64>, y: &DVector<f64>, spec: &ProcedureSpec<f64>) -> f64 {
    let n = x.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        let keep: Vec<usize> = (0..n).filter(|&k| k != i).collect();
        let xr = DMatrix::from_fn(n - 1, x.ncols(), |r, c| x[(keep[r], c)]);
        let yr = DVector::from_fn(n - 1, |r, _| y[keep[r]]);
        let hs = HatSystem::fit(spec.clone(), &xr).unwrap();
        let row: Vec<f64> = x.row(i).iter().copied().collect();
        let r = y[i] - predict(&hs, &yr, &row).unwrap();
        acc += r * r;
    }
    acc / n as f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn loocv_identity(n in 8usize..20, frac in 0.1f64..0.8, seed in 0u64..1000, ridge in any::<bool>()) {
        let p = ((n as f64 * frac) as usize).clamp(1, n - 2);
        let x = design(n, p, seed);
        let y = standard_normal_vector::<f64>(&mut stream_rng(seed, 1), n);
        let spec = if ridge {
            ProcedureSpec::Ridge { lambda: 0.3 }
        } else {
            ProcedureSpec::Ols { subset: (0..p).collect() }
        };
        let hs = HatSystem::fit(spec.clone(), &x).unwrap();
        prop_assert!((loocv_error(&hs, &y).unwrap() - brute_loocv(&x, &y, &spec)).abs() < 1e-8);
    }

    #[test]
    fn corrections_are_nonnegative(delta in -10.0f64..10.0, yay in 0.0f64..10.0, tra in 0.0f64..10.0, s2 in 0.0f64..3.0, n in 1usize..200) {
        let p = delta_plus(delta);
        let pp = delta_plusplus(delta, yay, tra, s2, n);
        prop_assert!(p >= 0.0 && pp >= 0.0);
        if delta >= 0.0 {
            prop_assert_eq!(p, delta);
            prop_assert_eq!(pp, delta);
        }
    }

    #[test]
    fn err_hat_forms_agree(n in 10usize..24, p in 1usize..40, seed in 0u64..500) {
        prop_assume!(p != n && p + 1 != n && p != n + 1);
        let x = design(n, p, seed);
        let y = standard_normal_vector::<f64>(&mut stream_rng(seed, 2), n);
        let hs = HatSystem::fit(ProcedureSpec::least_squares((0..p).collect(), n), &x).unwrap();
        let sigma = DMatrix::identity(p, p);
        let df = df_random(&hs, CovariateLaw::Gaussian(&sigma), &McConfig::default()).unwrap().df_random;
        let am = a_matrix(&hs).unwrap();
        let e = err_hat(&am, &hs, &y, 1.0, df).unwrap();
        prop_assert!((e.value - e.via_loocv).abs() < 1e-10 * (1.0 + e.value.abs()));
        prop_assert!((e.delta - delta_hat(&am, &y, 1.0).unwrap()).abs() < 1e-10 * (1.0 + e.delta.abs()));
        prop_assert!(e.plus() >= e.err_train - 1e-12);
    }

    #[test]
    fn gd_limits_interpolate(n in 3usize..10, extra in 1usize..15, seed in 0u64..500) {
        let p = n + extra;
        let x = design(n, p, seed);
        let y = standard_normal_vector::<f64>(&mut stream_rng(seed, 3), n);
        let b0 = standard_normal_vector::<f64>(&mut stream_rng(seed, 4), p);
        let b = gd_limit(&x, &y, &b0).unwrap();
        prop_assert!((&x * b - &y).norm() / y.norm() < 1e-9);
    }

    #[test]
    fn gd_interpolant_df_dominates_min_norm(n in 3usize..10, extra in 2usize..12, seed in 0u64..500) {
        let p = n + extra;
        let x = design(n, p, seed);
        let f = DMatrix::from_fn(p, n, |i, j| ((i * 7 + j * 3 + seed as usize) % 5) as f64 - 2.0);
        let sigma = DMatrix::identity(p, p);
        let base = interpolant_df(&x, &FMatrix::zero(p, n), &sigma).unwrap();
        let other = interpolant_df(&x, &FMatrix::custom(f), &sigma).unwrap();
        prop_assert!(other >= base - 1e-9);
    }

    #[test]
    fn prescient_order_is_a_permutation(beta in proptest::collection::vec(-5.0f64..5.0, 1..40)) {
        let b = DVector::from_vec(beta.clone());
        let order = prescient_order(&b);
        prop_assert!(check_permutation(&order, beta.len()).is_ok());
        for w in order.windows(2) {
            prop_assert!(beta[w[0]].abs() >= beta[w[1]].abs());
        }
    }

    #[test]
    fn allocation_sums_and_fits(sizes in proptest::collection::vec(0usize..30, 1..8), frac in 0.0f64..1.0) {
        let all: usize = sizes.iter().sum();
        let total = (all as f64 * frac) as usize;
        let a = proportional_allocation(&sizes, total).unwrap();
        prop_assert_eq!(a.iter().sum::<usize>(), total);
        for (x, s) in a.iter().zip(&sizes) {
            prop_assert!(x <= s);
        }
    }

    #[test]
    fn selection_ignores_row_order(vals in proptest::collection::vec(proptest::option::of(0u8..5), 1..30), seed in 0u64..100) {
        let rows: Vec<SweepRow> = vals.iter().enumerate().map(|(p, v)| SweepRow {
            p,
            values: vec![v.map(f64::from)],
            error: None,
        }).collect();
        let t = SweepTable { criteria: vec![Criterion::Cp], rows: rows.clone() };
        let mut shuffled = rows;
        let perm = dfr_core::model::random_permutation(shuffled.len(), &mut stream_rng(seed, 0));
        shuffled = perm.iter().map(|&k| shuffled[k].clone()).collect();
        let u = SweepTable { criteria: vec![Criterion::Cp], rows: shuffled };
        match (select(&t, Criterion::Cp), select(&u, Criterion::Cp)) {
            (Ok(a), Ok(b)) => {
                prop_assert_eq!(a, b);
                let min = vals.iter().flatten().min().unwrap();
                prop_assert_eq!(vals.iter().position(|v| v.as_ref() == Some(min)).unwrap(), a);
            }
            (Err(_), Err(_)) => prop_assert!(vals.iter().all(Option::is_none)),
            _ => prop_assert!(false, "selection depends on row order"),
        }
    }
}

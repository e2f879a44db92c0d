use std::fs;

use dfr_experiments::{find, run_scenario, run_scenario_to, scenario_names, ExperimentResult, Scenario};

fn small(name: &str, overrides: &[(&str, &str)]) -> Scenario {
    let mut s = find(name).unwrap();
    for (k, v) in overrides {
        s.apply_override(k, v).unwrap();
    }
    s
}

fn summary_bytes(r: &ExperimentResult) -> Vec<u8> {
    let mut out = Vec::new();
    r.write_summary_csv(&mut out).unwrap();
    out
}

fn long_bytes(r: &ExperimentResult) -> Vec<u8> {
    let mut out = Vec::new();
    r.write_long_csv(&mut out).unwrap();
    out
}

fn owned(o: &[(&str, &str)]) -> Vec<(String, String)> {
    o.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

#[test]
fn summaries_do_not_depend_on_thread_count() {
    let s = small("double_descent_fig1", &[("reps", "12"), ("sweep", "1..40:3")]);
    let single = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(|| run_scenario(&s).unwrap());
    let many = rayon::ThreadPoolBuilder::new()
        .num_threads(4)
        .build()
        .unwrap()
        .install(|| run_scenario(&s).unwrap());
    assert_eq!(summary_bytes(&single), summary_bytes(&many));
    assert_eq!(long_bytes(&single), long_bytes(&many));
}

#[test]
fn summary_is_derivable_from_long_records() {
    let s = small("ridge_df_p10", &[("reps", "5")]);
    let r = run_scenario(&s).unwrap();
    let mut buf = Vec::new();
    r.write_long_csv(&mut buf).unwrap();
    let back = ExperimentResult::read_long_csv(buf.as_slice()).unwrap();
    assert_eq!(summary_bytes(&back), summary_bytes(&r));
    assert_eq!(r.summary.len(), 31 * 2);
    assert!(r.summary.iter().all(|x| x.n_reps == 5 && x.se.is_some()));
}

#[test]
fn seeds_change_results_and_replicates_are_prefix_stable() {
    let a = run_scenario(&small("gd_q_sweep", &[("reps", "4"), ("sweep", "0..3")])).unwrap();
    let b = run_scenario(&small("gd_q_sweep", &[("reps", "4"), ("sweep", "0..3"), ("seed", "99")])).unwrap();
    assert_ne!(long_bytes(&a), long_bytes(&b));
    let c = run_scenario(&small("gd_q_sweep", &[("reps", "6"), ("sweep", "0..3")])).unwrap();
    let first4: Vec<_> = c.long.iter().filter(|r| r.replicate < 4).cloned().collect();
    assert_eq!(first4, a.long);
}

#[test]
fn output_tree_resumes_and_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let overrides = [("reps", "3"), ("sweep", "1..30:4")];
    let s = small("double_descent_fig1", &overrides);
    let first = run_scenario_to(&s, dir.path(), &owned(&overrides)).unwrap();
    let out = dir.path().join("double_descent_fig1");
    for f in ["long.csv", "summary.csv", "meta"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let summary = fs::read(out.join("summary.csv")).unwrap();
    assert_eq!(summary, summary_bytes(&first));
    assert_eq!(fs::read(out.join("long.csv")).unwrap(), long_bytes(&first));

    let shard = out.join("replicates").join("r000001.csv");
    let stamp = fs::metadata(&shard).unwrap().modified().unwrap();
    let again = run_scenario_to(&s, dir.path(), &owned(&overrides)).unwrap();
    assert_eq!(again, first);
    assert_eq!(fs::metadata(&shard).unwrap().modified().unwrap(), stamp);
    assert_eq!(fs::read(out.join("summary.csv")).unwrap(), summary);

    fs::remove_file(&shard).unwrap();
    let resumed = run_scenario_to(&s, dir.path(), &owned(&overrides)).unwrap();
    assert_eq!(resumed, first);

    let kept = out.join("replicates").join("r000000.csv");
    let kept_stamp = fs::metadata(&kept).unwrap().modified().unwrap();
    let more = small("double_descent_fig1", &[("reps", "5"), ("sweep", "1..30:4")]);
    let extended = run_scenario_to(&more, dir.path(), &[]).unwrap();
    assert_eq!(extended, run_scenario(&more).unwrap());
    assert_eq!(fs::metadata(&kept).unwrap().modified().unwrap(), kept_stamp);
}

#[test]
fn changed_configuration_discards_old_shards() {
    let dir = tempfile::tempdir().unwrap();
    let a = small("ridge_df_p10", &[("reps", "2")]);
    let b = small("ridge_df_p10", &[("reps", "2"), ("seed", "5")]);
    run_scenario_to(&a, dir.path(), &[]).unwrap();
    let rb = run_scenario_to(&b, dir.path(), &[]).unwrap();
    assert_eq!(rb, run_scenario(&b).unwrap());
}

#[test]
fn meta_echoes_scenario_seed_version_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let overrides = [("reps", "2"), ("seed", "7"), ("sweep", "1..10")];
    let s = small("double_descent_fig1", &overrides);
    run_scenario_to(&s, dir.path(), &owned(&overrides)).unwrap();
    let meta = fs::read_to_string(dir.path().join("double_descent_fig1").join("meta")).unwrap();
    let table: Vec<(&str, &str)> = meta.lines().filter_map(|l| l.split_once(" = ")).collect();
    let get = |k: &str| table.iter().find(|(key, _)| *key == k).map(|(_, v)| *v).unwrap();
    assert_eq!(get("scenario"), "\"double_descent_fig1\"");
    assert_eq!(get("anchor"), "\"Fig 1\"");
    assert_eq!(get("master_seed"), "7");
    assert_eq!(get("replicates"), "2");
    assert!(get("version").starts_with(&format!("\"{}", env!("CARGO_PKG_VERSION"))));
    assert_eq!(get("overrides"), "[\"reps=2\", \"seed=7\", \"sweep=1..10\"]");
    assert_eq!(get("failed_replicates"), "[]");
}

#[test]
fn numerical_failures_are_flagged_not_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let s = small("spline_table2", &[("sweep", "10")]);
    let r = run_scenario_to(&s, dir.path(), &[]).unwrap();
    assert_eq!(r.failed_replicates(), vec![0]);
    assert_eq!(r.long.len(), 1);
    let meta = fs::read_to_string(dir.path().join("spline_table2").join("meta")).unwrap();
    assert!(meta.contains("failed_replicates = [0]"));
}

#[test]
fn every_registered_scenario_runs_at_reduced_scale() {
    for name in scenario_names() {
        let mut s = find(&name).unwrap();
        s.apply_override("reps", "1").unwrap();
        match name.as_str() {
            "local_constant_bandwidth" | "spline_table2" | "cp_vs_errtilde" | "weight_table1" => {}
            "ridge_df_p10" | "ridge_df_p80" => s.apply_override("sweep", "0.01,1,100").unwrap(),
            "gd_single_theta" => s.apply_override("sweep", "0,1").unwrap(),
            "gd_q_sweep" | "squared_norm_by_q" => s.apply_override("sweep", "0,2,5").unwrap(),
            _ => s.apply_override("sweep", "1,5,19,21,40").unwrap(),
        }
        let r = run_scenario(&s).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert!(r.failed_replicates().is_empty(), "{name}");
        for out in &s.outputs {
            assert!(r.long.iter().any(|x| &x.metric == out), "{name}: no {out}");
        }
    }
}

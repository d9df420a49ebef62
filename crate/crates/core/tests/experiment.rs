//! Sweep harness end-to-end: determinism of records and CSV bytes, metric
//! semantics, rate-fit behavior on real sweeps, and config handling.

use std::fs;

use zsmg::experiment::{
    atomic_write, fit_rate, materialize_instance, run_sweep, ExperimentConfig, InstanceSource,
    MetricField, Protocol,
};
use zsmg::instances::{random_game, Hypothesis, RewardId};
use zsmg::rng::RngSpec;

fn seeds(n: u64) -> Vec<RngSpec> {
    (1..=n).map(|s| RngSpec::new(s, 0)).collect()
}

fn random_source(seed: u64) -> InstanceSource {
    InstanceSource::Random {
        num_states: 3,
        num_actions_max: 2,
        num_actions_min: 2,
        gamma: 0.7,
        branching: 2,
        seed: RngSpec::new(seed, 500),
    }
}

fn base_config(dir: &std::path::Path, source: InstanceSource) -> ExperimentConfig {
    ExperimentConfig {
        instance_source: source,
        n_grid: vec![32, 128, 512],
        seeds: seeds(5),
        eps_opt: 1e-5,
        oracle_kind: zsmg::plan::OracleKind::ExactLp,
        protocol: Protocol::RewardAware,
        output_path: dir.join("sweep.csv").to_string_lossy().into_owned(),
    }
}

#[test]
fn sweeps_are_deterministic_down_to_the_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let config = base_config(dir.path(), random_source(1));
    let records_a = run_sweep(&config).unwrap();
    let csv_a = fs::read(&config.output_path).unwrap();
    let records_b = run_sweep(&config).unwrap();
    let csv_b = fs::read(&config.output_path).unwrap();
    assert_eq!(records_a, records_b, "records must be reproducible");
    assert_eq!(csv_a, csv_b, "CSV bytes must be reproducible");
    assert_eq!(records_a.len(), 3 * 5);
    // No stray temporary files remain next to the output.
    let leftovers: Vec<_> = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|name| name != "sweep.csv")
        .collect();
    assert!(leftovers.is_empty(), "temp files left behind: {leftovers:?}");
}

#[test]
fn records_are_sorted_and_well_formed() {
    let dir = tempfile::tempdir().unwrap();
    let config = base_config(dir.path(), random_source(2));
    let records = run_sweep(&config).unwrap();
    for pair in records.windows(2) {
        let a = (&pair[0].n, pair[0].seed.seed, pair[0].seed.stream_id);
        let b = (&pair[1].n, pair[1].seed.seed, pair[1].seed.stream_id);
        assert!(a <= b, "records out of canonical order");
    }
    for r in &records {
        assert!(r.q_error_inf >= 0.0 && r.q_error_inf.is_finite());
        assert!(r.q_true_error_inf >= 0.0 && r.q_true_error_inf.is_finite());
        assert!(r.nash_gap_direct >= -1e-8);
        assert!(r.nash_gap_onestep >= -1e-8);
        assert!(r.eps_opt_certified <= config.eps_opt);
        assert!(r.runtime_ms > 0, "work proxy must count planner sweeps");
        assert!(r.instance_id.starts_with("random-S3A2B2"));
    }
    // Errors generally shrink with N: compare extreme budgets' medians.
    let med = |n: u64| -> f64 {
        let mut v: Vec<f64> = records
            .iter()
            .filter(|r| r.n == n)
            .map(|r| r.q_error_inf)
            .collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v[v.len() / 2]
    };
    assert!(med(512) < med(32), "median empirical error must decrease with N");
}

#[test]
fn csv_has_the_canonical_header_and_seed_format() {
    let dir = tempfile::tempdir().unwrap();
    let config = base_config(dir.path(), random_source(3));
    run_sweep(&config).unwrap();
    let text = fs::read_to_string(&config.output_path).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "instance_id,N,seed,q_error_inf,q_true_error_inf,nash_gap_direct,nash_gap_onestep,eps_opt_certified,runtime_ms"
    );
    let first = lines.next().unwrap();
    let fields: Vec<&str> = first.split(',').collect();
    assert_eq!(fields.len(), 9);
    assert_eq!(fields[1], "32");
    assert!(fields[2].contains('/'), "seed column is seed/stream: {}", fields[2]);
    // Exactly header + one row per record.
    assert_eq!(text.lines().count(), 1 + 3 * 5);
}

#[test]
fn rate_fits_on_a_real_sweep_recover_the_root_n_law_loosely() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = base_config(dir.path(), random_source(4));
    config.n_grid = vec![64, 256, 1024, 4096];
    config.seeds = seeds(8);
    let records = run_sweep(&config).unwrap();
    let fit = fit_rate(&records, MetricField::QErrorInf).unwrap();
    assert_eq!(fit.metric, MetricField::QErrorInf);
    assert_eq!(fit.n_grid, vec![64, 256, 1024, 4096]);
    assert!(
        (-0.75..=-0.25).contains(&fit.slope),
        "slope {} too far from −1/2",
        fit.slope
    );
    assert!(fit.r_squared > 0.8, "r² {}", fit.r_squared);
}

#[test]
fn hard_instance_sweeps_report_the_family_id() {
    let dir = tempfile::tempdir().unwrap();
    let source = InstanceSource::Hard {
        k: 1,
        l1: 2,
        l2: 2,
        gamma: 0.7,
        eps: 1e-3,
        hypothesis: Hypothesis::Null,
        reward_id: RewardId::R1,
    };
    let mut config = base_config(dir.path(), source);
    config.n_grid = vec![32, 64, 128];
    config.seeds = seeds(5);
    let records = run_sweep(&config).unwrap();
    assert!(records.iter().all(|r| r.instance_id == "hard-K1L2x2-g0.7-e1e-3-null-r1"));
}

#[test]
fn reward_agnostic_sweeps_share_samples_across_reward_files() {
    let dir = tempfile::tempdir().unwrap();
    let game = random_game(3, 2, 2, 0.7, 2, RngSpec::new(11, 501)).unwrap();
    let game_path = dir.path().join("game.json");
    game.save(&game_path).unwrap();
    // Two reward files: the game's own reward and its complement.
    let complement: Vec<Vec<Vec<f64>>> = game
        .reward
        .iter()
        .map(|pa| pa.iter().map(|pb| pb.iter().map(|r| 1.0 - r).collect()).collect())
        .collect();
    let r0 = dir.path().join("r0.json");
    let r1 = dir.path().join("r1.json");
    fs::write(&r0, serde_json::to_string(&game.reward).unwrap()).unwrap();
    fs::write(&r1, serde_json::to_string(&complement).unwrap()).unwrap();

    let file_source = InstanceSource::File {
        path: game_path.to_string_lossy().into_owned(),
    };
    let mut config = base_config(dir.path(), file_source.clone());
    config.protocol = Protocol::RewardAgnostic {
        reward_files: vec![
            r0.to_string_lossy().into_owned(),
            r1.to_string_lossy().into_owned(),
        ],
    };
    let records = run_sweep(&config).unwrap();
    // One record per (N, seed, reward).
    assert_eq!(records.len(), 3 * 5 * 2);
    let with_r0: Vec<_> = records.iter().filter(|r| r.instance_id.ends_with("#r0")).collect();
    let with_r1 = records.iter().filter(|r| r.instance_id.ends_with("#r1")).count();
    assert_eq!(with_r0.len(), 3 * 5);
    assert_eq!(with_r1, 3 * 5);
    // The transition samples are reward-independent (counter-keyed draws), so
    // the records for the game's own reward must coincide numerically with a
    // plain reward-aware sweep of the same configuration.
    let mut aware = base_config(dir.path(), file_source);
    aware.output_path = dir.path().join("aware.csv").to_string_lossy().into_owned();
    let records_aware = run_sweep(&aware).unwrap();
    assert_eq!(records_aware.len(), with_r0.len());
    for (agn, awr) in with_r0.iter().zip(&records_aware) {
        assert_eq!(agn.n, awr.n);
        assert_eq!(agn.seed, awr.seed);
        assert_eq!(agn.q_error_inf, awr.q_error_inf, "shared-sample contract broken");
        assert_eq!(agn.q_true_error_inf, awr.q_true_error_inf);
        assert_eq!(agn.nash_gap_direct, awr.nash_gap_direct);
        assert_eq!(agn.nash_gap_onestep, awr.nash_gap_onestep);
        assert_eq!(agn.eps_opt_certified, awr.eps_opt_certified);
    }
}

#[test]
fn config_json_roundtrip_and_validation() {
    let dir = tempfile::tempdir().unwrap();
    let config = base_config(dir.path(), random_source(5));
    let text = config.to_json_string().unwrap();
    let back = ExperimentConfig::from_json_str(&text).unwrap();
    assert_eq!(config, back);

    let mut bad = config.clone();
    bad.n_grid = vec![128, 64];
    assert!(bad.validate().is_err(), "decreasing budgets must be rejected");
    let mut bad2 = config.clone();
    bad2.seeds.truncate(2);
    assert!(bad2.validate().is_err(), "too few seeds must be rejected");
    let mut bad3 = config.clone();
    bad3.protocol = Protocol::RewardAgnostic { reward_files: vec![] };
    assert!(bad3.validate().is_err(), "empty reward list must be rejected");
}

#[test]
fn materialize_reports_readable_identifiers() {
    let (game, id) = materialize_instance(&random_source(6)).unwrap();
    assert_eq!(game.num_states, 3);
    assert_eq!(id, "random-S3A2B2-g0.7-br2-s6.500");
}

#[test]
fn atomic_write_replaces_content_completely() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.txt");
    atomic_write(&path, b"first version, quite long").unwrap();
    atomic_write(&path, b"second").unwrap();
    assert_eq!(fs::read(&path).unwrap(), b"second");
    let names: Vec<_> = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert_eq!(names, vec!["out.txt"]);
}

#[test]
fn fit_rejects_degenerate_all_floor_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let config = base_config(dir.path(), random_source(7));
    let mut records = run_sweep(&config).unwrap();
    for r in &mut records {
        r.q_true_error_inf = 0.0;
    }
    assert!(fit_rate(&records, MetricField::QTrueErrorInf).is_err());
}

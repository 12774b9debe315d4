use std::io::Cursor;

use gmfpart::gmf::GmfState;
use gmfpart::harness::{
    run_bound_campaign, run_inference_experiment, run_partition_benchmark, CampaignRecord, ExperimentConfig, GpRecord,
    GpSummary, InferenceSummary, PartitionScheme, TrialRecord,
};
use gmfpart::mrf::generate_random_mrf;
use gmfpart::partition::random_equipartition;
use gmfpart::{Coupling, Error, MarkovRandomField, Partition, RandomModelSpec};
use proptest::prelude::*;
use serde::de::DeserializeOwned;

fn coupling() -> impl Strategy<Value = Coupling> {
    prop_oneof![Just(Coupling::Attractive), Just(Coupling::Repulsive), Just(Coupling::Mixed)]
}

fn parse_csv<T: DeserializeOwned>(bytes: &[u8]) -> Vec<T> {
    csv::Reader::from_reader(bytes).deserialize().collect::<Result<_, _>>().unwrap()
}

proptest! {
    #[test]
    fn model_text_round_trips(
        n in 1usize..16,
        edge_prob in 0.0f64..=1.0,
        w_obs in 0.0f64..3.0,
        w_coup in 0.0f64..3.0,
        coupling in coupling(),
        seed in any::<u64>(),
    ) {
        let mrf = generate_random_mrf(&RandomModelSpec { n, edge_prob, w_obs, w_coup, coupling, seed }).unwrap();
        let back = MarkovRandomField::read_text(Cursor::new(mrf.to_text())).unwrap();
        prop_assert_eq!(back, mrf);
    }

    #[test]
    fn partition_text_round_trips(blocks in 1usize..6, size in 1usize..5, seed in any::<u64>()) {
        let p = random_equipartition(blocks * size, blocks, seed).unwrap();
        let back = Partition::read_text(Cursor::new(p.to_text())).unwrap();
        prop_assert_eq!(back, p);
    }

    #[test]
    fn state_text_round_trips(blocks in 1usize..5, size in 1usize..5, seed in any::<u64>()) {
        let p = random_equipartition(blocks * size, blocks, seed).unwrap();
        let state = GmfState::random(p, seed ^ 1).unwrap();
        let back = GmfState::read_text(Cursor::new(state.to_text())).unwrap();
        prop_assert_eq!(back, state);
    }
}

#[test]
fn model_text_skips_comments_and_blank_lines() {
    let text = "# two spins\n2 1\n\n0 0.5\n1 -0.25\n# coupling\n0 1 1.5\n";
    let mrf = MarkovRandomField::read_text(Cursor::new(text)).unwrap();
    assert_eq!(mrf.theta_node(), &[0.5, -0.25]);
    assert_eq!(mrf.edges(), &[(0, 1)]);
    assert_eq!(mrf.theta_edge(), &[1.5]);
}

#[test]
fn malformed_model_reports_the_line() {
    let cases = [
        ("2 1\n0 0.5\n1 x\n0 1 1.0\n", 3),
        ("2 1\n0 0.5\n0 0.1\n0 1 1.0\n", 3),
        ("2 1\n0 0.5\n1 0.1\n", 0),
        ("2 1\n0 0.5\n1 0.1\n0 1 1.0\n0 1 2.0\n", 5),
    ];
    for (text, want) in cases {
        match MarkovRandomField::read_text(Cursor::new(text)) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, want, "{text:?}"),
            other => panic!("expected parse error for {text:?}, got {other:?}"),
        }
    }
}

#[test]
fn partition_text_rejects_repeated_nodes() {
    assert!(Partition::read_text(Cursor::new("2\n0 0\n0 1\n")).is_err());
    assert!(Partition::read_text(Cursor::new("2\n0 0\n1 2\n")).is_err());
}

#[test]
fn config_toml_round_trips() {
    let mut cfg = ExperimentConfig::default();
    cfg.seed = 99;
    cfg.model.coupling = vec![Coupling::Attractive, Coupling::Repulsive];
    cfg.partition.schemes = vec![PartitionScheme::Random, "maxc-inverse_coupling".parse().unwrap()];
    cfg.gmf.damping = 0.25;
    cfg.campaign.coupling = vec![Coupling::Mixed];
    let back = ExperimentConfig::from_toml_str(&cfg.to_toml()).unwrap();
    assert_eq!(back, cfg);
}

#[test]
fn config_rejects_unknown_keys() {
    assert!(ExperimentConfig::from_toml_str("sed = 3\n").is_err());
    assert!(ExperimentConfig::from_toml_str("[model]\nsize = 3\n").is_err());
}

fn tiny() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.trials = 2;
    cfg.model.n = 8;
    cfg.model.w_obs = vec![0.5];
    cfg.model.w_coup = vec![1.0];
    cfg.partition.k = vec![2, 4];
    cfg.campaign.models = 6;
    cfg.campaign.n = vec![6, 8];
    cfg
}

#[test]
fn result_csvs_round_trip() {
    let cfg = tiny();
    let gp = run_partition_benchmark(&cfg).unwrap();
    assert_eq!(parse_csv::<GpRecord>(&gp.trials_csv().unwrap()), gp.records);
    assert_eq!(parse_csv::<GpSummary>(&gp.summary_csv().unwrap()), gp.summaries);

    let inf = run_inference_experiment(&cfg).unwrap();
    let trials: Vec<TrialRecord> = parse_csv(&inf.trials_csv().unwrap());
    assert_eq!(trials.len(), inf.records.len());
    for (a, b) in trials.iter().zip(&inf.records) {
        assert_eq!(*a, TrialRecord { runtime_ms: 0.0, ..b.clone() });
    }
    assert_eq!(parse_csv::<InferenceSummary>(&inf.summary_csv().unwrap()), inf.summaries);

    let bounds = run_bound_campaign(&cfg).unwrap();
    assert_eq!(parse_csv::<CampaignRecord>(&bounds.trials_csv().unwrap()), bounds.records);
}

#[test]
fn written_results_include_schema_and_resolved_config() {
    let cfg = tiny();
    let dir = tempfile::tempdir().unwrap();
    run_inference_experiment(&cfg).unwrap().write(dir.path(), &cfg).unwrap();
    run_partition_benchmark(&cfg).unwrap().write(dir.path(), &cfg).unwrap();
    run_bound_campaign(&cfg).unwrap().write(dir.path(), &cfg).unwrap();
    for f in [
        "inference_trials.csv",
        "inference_summary.csv",
        "inference_timings.csv",
        "inference_schema.txt",
        "l1_error.svg",
        "l1_error_series.csv",
        "bound_ratio.svg",
        "bound_ratio_series.csv",
        "gp_trials.csv",
        "gp_summary.csv",
        "gp_timings.csv",
        "gp_schema.txt",
        "bounds_trials.csv",
        "bounds_schema.txt",
        "resolved_config.toml",
    ] {
        assert!(dir.path().join(f).is_file(), "missing {f}");
    }
    let resolved = ExperimentConfig::load(&dir.path().join("resolved_config.toml")).unwrap();
    assert_eq!(resolved, cfg);
}

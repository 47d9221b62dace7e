//! Cross-module dynamics invariants on paired runs and experiment summaries.

use mtr_core::config::{parse_config_str, ExperimentConfig, ExperimentKind};
use mtr_core::env::{CorruptionConfig, CorruptionKind, EnvSpec, QuadraticEnv};
use mtr_core::harness::run_experiment;
use mtr_core::learners::{run_learner, LearnerConfig, LearnerKind};
use mtr_core::schedule::{Phase, RegimeSchedule};
use mtr_core::stats;

fn staged_quadratic_runs(
    kind: LearnerKind,
    seeds: std::ops::Range<u64>,
) -> Vec<mtr_core::record::RunRecord> {
    let env = EnvSpec::Quadratic(QuadraticEnv::new(vec![0.0], vec![0.5], 0.1).unwrap());
    let corruption = CorruptionConfig::new(CorruptionKind::FeatureNoise, 0.5, 0.3).unwrap();
    let schedule = RegimeSchedule::staged(2000).unwrap();
    let cfg = LearnerConfig::gd(kind, 0.1, 50);
    seeds
        .map(|seed| run_learner(&env, &cfg, &schedule, Some(&corruption), seed).unwrap())
        .collect()
}

fn phase_mean(record: &mtr_core::record::RunRecord, phase: Phase, values: &[f64]) -> f64 {
    let v: Vec<f64> = (0..record.len())
        .filter(|&i| record.phase[i] == phase)
        .map(|i| values[i])
        .collect();
    stats::mean(&v)
}

// Trust modulation limits how far the iterate strays during corruption and
// does not hurt the recovered solution, on paired staged runs.
#[test]
fn trust_limits_corrupt_excursion_and_matches_recovery() {
    let baseline = staged_quadratic_runs(LearnerKind::BaselineGd, 0..20);
    let trust = staged_quadratic_runs(LearnerKind::TrustGd, 0..20);

    let excursion = |records: &[mtr_core::record::RunRecord]| {
        stats::mean(
            &records
                .iter()
                .map(|r| phase_mean(r, Phase::Corrupt, &r.param_error))
                .collect::<Vec<_>>(),
        )
    };
    let final_error = |records: &[mtr_core::record::RunRecord]| {
        stats::mean(
            &records
                .iter()
                .map(|r| {
                    let tail = r.len() - r.len() / 10;
                    stats::mean(&r.param_error[tail..])
                })
                .collect::<Vec<_>>(),
        )
    };

    let exc_base = excursion(&baseline);
    let exc_trust = excursion(&trust);
    assert!(
        exc_trust <= exc_base,
        "trust excursion {exc_trust} exceeds baseline {exc_base}"
    );

    let fin_base = final_error(&baseline);
    let fin_trust = final_error(&trust);
    assert!(
        fin_trust <= fin_base + 1e-3,
        "trust final error {fin_trust} worse than baseline {fin_base}"
    );
}

// The baseline learner plateaus at the bias during corruption and returns to
// the truth afterwards; the run record carries that whole arc.
#[test]
fn baseline_plateaus_at_bias_and_recovers() {
    let records = staged_quadratic_runs(LearnerKind::BaselineGd, 0..10);
    for record in &records {
        let late_corrupt: Vec<f64> = (3500..4000).map(|i| record.param_error[i]).collect();
        let plateau = stats::mean(&late_corrupt);
        assert!((plateau - 0.5).abs() < 0.1, "corrupt plateau {plateau}");
        let late_recovery: Vec<f64> = (5500..6000).map(|i| record.param_error[i]).collect();
        assert!(stats::mean(&late_recovery) < 0.1);
    }
}

// A momentum baseline misconverges the same way: the failure is not tied to
// one optimizer.
#[test]
fn momentum_baseline_shares_the_biased_fixed_point() {
    let env = EnvSpec::Quadratic(QuadraticEnv::new(vec![0.0], vec![0.5], 0.0).unwrap());
    let schedule =
        RegimeSchedule::single(2000, mtr_core::schedule::Regime::Unreliable, Phase::Corrupt)
            .unwrap();
    let cfg = LearnerConfig::gd(LearnerKind::MomentumGd, 0.05, 50);
    let record = run_learner(&env, &cfg, &schedule, None, 0).unwrap();
    assert!(
        (record.final_params[0] + 0.5).abs() < 1e-6,
        "momentum endpoint {}",
        record.final_params[0]
    );
}

// Partial failures: diverged runs appear as per-seed error entries while
// aggregates cover the survivors; the experiment as a whole still succeeds.
#[test]
fn partial_run_failures_are_recorded_not_fatal() {
    let text = r#"
kind = "prop1"
seeds = [0, 1, 2]

[schedule]
kind = "single"
total = 300
rho = 0
phase = "clean"

[env.quadratic]
theta_star = [5.0]
bias = [0.0]
noise_sigma = 0.0

[[learners]]
kind = "baseline-gd"
eta = 0.1

[[learners]]
kind = "momentum-gd"
eta = 25.0
"#;
    let config = parse_config_str(text).unwrap();
    let result = run_experiment(&config).unwrap();
    let aborted = result
        .runs
        .iter()
        .filter(|(m, _)| m.abort.is_some())
        .count();
    assert_eq!(
        aborted, 3,
        "the unstable learner should diverge on every seed"
    );
    let summary = result.summary.to_string();
    assert!(summary.contains("aborted at step"));
    // the stable learner's entries carry final parameters near the optimum
    let stable = result
        .runs
        .iter()
        .find(|(m, _)| m.label == "baseline_gd")
        .unwrap();
    assert!((stable.0.final_params[0] - 5.0).abs() < 1e-6);
}

// Detection endpoints: with no drift, both feature families sit at chance;
// with drift far above the noise scale, trajectory detection is near perfect.
#[test]
fn detection_chance_and_saturation_endpoints() {
    let config = ExperimentConfig::default_for(ExperimentKind::Sweep);
    let seeds: Vec<u64> = (0..5).collect();
    let at_zero = mtr_core::detection::identifiability_aucs(&config, 0.0, &seeds).unwrap();
    let mean = |f: &dyn Fn(&mtr_core::detection::SeedAucs) -> f64| {
        stats::mean(&at_zero.iter().map(f).collect::<Vec<_>>())
    };
    let local = mean(&|a| a.auc_local);
    let traj = mean(&|a| a.auc_trajectory);
    assert!(
        (0.45..=0.55).contains(&local),
        "local AUC at zero drift {local}"
    );
    assert!(
        (0.45..=0.55).contains(&traj),
        "trajectory AUC at zero drift {traj}"
    );

    // drift at five times the label noise scale
    let saturated = mtr_core::detection::identifiability_aucs(&config, 5.0, &seeds).unwrap();
    let traj_high = stats::mean(
        &saturated
            .iter()
            .map(|a| a.auc_trajectory)
            .collect::<Vec<_>>(),
    );
    assert!(
        traj_high >= 0.95,
        "trajectory AUC at large drift {traj_high}"
    );
}

// Identifiability summaries expose both detection AUC families.
#[test]
fn identifiability_summary_contains_auc_fields() {
    let mut config = ExperimentConfig::default_for(ExperimentKind::Identifiability);
    config.seeds = vec![0, 1, 2];
    let result = run_experiment(&config).unwrap();
    let detection = result
        .summary
        .get("detection")
        .expect("detection block in summary");
    assert!(detection.get("auc_local").is_some());
    assert!(detection.get("auc_trajectory").is_some());
    assert!(result.artifacts.contains_key("fig1a.csv"));
    assert!(result.artifacts.contains_key("fig1b.csv"));
}

//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line with the measured values (run with `--nocapture` to see
//! the lines for passing criteria).
//!
//! Every run in here is deterministic in its fixed seeds, so a green
//! criterion stays green.

use mtr_core::config::{parse_config_str, ExperimentConfig, ExperimentKind, ScheduleSpec};
use mtr_core::detection::{
    collect_scores, error_vs_data_curve, roc_auc, roc_auc_exact, roc_auc_ranked, LabeledScores,
};
use mtr_core::env::{
    BanditEnv, CorruptionConfig, CorruptionKind, EnvSpec, EpisodicTaskEnv, QuadraticEnv,
    RegressionEnv,
};
use mtr_core::harness::{self, recovery_metrics, run_experiment, ExcursionMode, RecoveryMetrics};
use mtr_core::io::run_csv_string;
use mtr_core::learners::{policy, run_learner, LearnerConfig, LearnerKind};
use mtr_core::record::RunRecord;
use mtr_core::rng::RngStream;
use mtr_core::schedule::{Phase, Regime, RegimeSchedule};
use mtr_core::stats;
use std::time::Instant;

const SEEDS_20: std::ops::Range<u64> = 0..20;

fn report_line(id: &str, ok: bool, detail: &str) {
    println!(
        "criterion {id}: {} — {detail}",
        if ok { "PASS" } else { "FAIL" }
    );
}

fn gd(kind: LearnerKind, eta: f64, window: usize) -> LearnerConfig {
    LearnerConfig::gd(kind, eta, window)
}

fn feature_noise(probability: f64, scale: f64) -> CorruptionConfig {
    CorruptionConfig::new(CorruptionKind::FeatureNoise, probability, scale).unwrap()
}

fn phase_mean(record: &RunRecord, phase: Phase, values: &[f64]) -> f64 {
    let vals: Vec<f64> = (0..record.len())
        .filter(|&i| record.phase[i] == phase)
        .map(|i| values[i])
        .collect();
    stats::mean(&vals)
}

// ---------------------------------------------------------------------------

/// Criterion 1: Biased descent lands on the shifted fixed point while every standard
/// convergence indicator looks healthy.
#[test]
fn criterion_01_biased_fixed_point() {
    let start = Instant::now();
    let env = EnvSpec::Quadratic(QuadraticEnv::new(vec![0.0], vec![0.5], 0.0).unwrap());
    let schedule = RegimeSchedule::single(2000, Regime::Unreliable, Phase::Corrupt).unwrap();
    let record = run_learner(
        &env,
        &gd(LearnerKind::BaselineGd, 0.1, 50),
        &schedule,
        None,
        0,
    )
    .unwrap();
    let final_theta = record.final_params[0];
    let offset = (final_theta + 0.5).abs();
    let monotone = record.loss.windows(2).all(|w| w[1] <= w[0]);
    let final_grad = *record.grad_norm.last().unwrap();
    let ok = offset < 1e-6 && monotone && final_grad < 1e-6;
    report_line(
        "01 biased fixed point",
        ok,
        &format!(
            "final theta {final_theta:.9}, |theta + 0.5| = {offset:.2e}, loss nonincreasing {monotone}, final grad {final_grad:.2e}, {:?}",
            start.elapsed()
        ),
    );
    assert!(
        offset < 1e-6,
        "final theta {final_theta} not within 1e-6 of -0.5"
    );
    assert!(monotone, "observed loss increased at some step");
    assert!(final_grad < 1e-6, "final gradient norm {final_grad}");
}

/// Criterion 2: Trust with a frozen EMA (beta = 0, tau0 = 1) reproduces the
/// unmodulated learner bit for bit on every environment family.
#[test]
fn criterion_02_frozen_trust_degeneracy() {
    let start = Instant::now();
    let quad = EnvSpec::Quadratic(QuadraticEnv::new(vec![0.0], vec![0.5], 0.1).unwrap());
    let regression = EnvSpec::Regression(RegressionEnv::label_shift(5, 1.0, 0.7).unwrap());
    let logistic = EnvSpec::Regression(RegressionEnv::class_trigger(5, 1.0, 1, 0.05).unwrap());
    let bandit = EnvSpec::Bandit(BanditEnv::new(0.01, 0.2, 0.8, 0.2).unwrap());
    let episodic =
        EnvSpec::Episodic(EpisodicTaskEnv::chain_with_wall(4, 0.2, 0.01, 1.0, 0.05, 5).unwrap());

    let staged = ScheduleSpec::staged_even(400).build().unwrap();
    let alternating = RegimeSchedule::alternating(200, 200, 2).unwrap();
    let noise = feature_noise(0.5, 0.3);
    let flips = CorruptionConfig::new(CorruptionKind::AdvantageSignFlip, 0.7, 0.0).unwrap();

    type Case<'a> = (
        &'a str,
        EnvSpec,
        LearnerKind,
        LearnerKind,
        &'a RegimeSchedule,
        Option<&'a CorruptionConfig>,
    );
    let cases: Vec<Case> = vec![
        (
            "quadratic",
            quad,
            LearnerKind::BaselineGd,
            LearnerKind::TrustGd,
            &staged,
            Some(&noise),
        ),
        (
            "regression",
            regression,
            LearnerKind::BaselineGd,
            LearnerKind::TrustGd,
            &alternating,
            None,
        ),
        (
            "logistic",
            logistic,
            LearnerKind::BaselineGd,
            LearnerKind::TrustGd,
            &staged,
            None,
        ),
        (
            "bandit",
            bandit,
            LearnerKind::BanditQ,
            LearnerKind::TrustBanditQ,
            &alternating,
            None,
        ),
        (
            "episodic",
            episodic,
            LearnerKind::PolicyGradient,
            LearnerKind::TrustPolicyGradient,
            &staged,
            Some(&flips),
        ),
    ];
    let mut checked = 0;
    for (name, env, base_kind, trust_kind, schedule, corruption) in &cases {
        let base_cfg = gd(*base_kind, 0.1, 20);
        let mut trust_cfg = gd(*trust_kind, 0.1, 20);
        trust_cfg.trust.beta = 0.0;
        trust_cfg.trust.tau_init = 1.0;
        for seed in 0..5u64 {
            let a = run_learner(env, &base_cfg, schedule, *corruption, seed).unwrap();
            let b = run_learner(env, &trust_cfg, schedule, *corruption, seed).unwrap();
            assert_eq!(a, b, "records differ on {name} seed {seed}");
            assert_eq!(
                run_csv_string(&a),
                run_csv_string(&b),
                "csv bytes differ on {name} seed {seed}"
            );
            checked += 1;
        }
    }
    report_line(
        "02 frozen-trust degeneracy",
        true,
        &format!(
            "{checked} paired runs bit-identical across {} environments, {:?}",
            cases.len(),
            start.elapsed()
        ),
    );
}

fn identifiability_aucs_at(drift: f64) -> (f64, f64) {
    let env = EnvSpec::Regression(RegressionEnv::label_shift(5, 1.0, drift).unwrap());
    let schedule = RegimeSchedule::alternating(300, 400, 7).unwrap();
    let learner = gd(LearnerKind::BaselineGd, 0.02, 50);
    let mut local = Vec::new();
    let mut traj = Vec::new();
    for seed in SEEDS_20 {
        let record = run_learner(&env, &learner, &schedule, None, seed).unwrap();
        let scores = collect_scores(&record, &schedule, 50).unwrap();
        local.push(roc_auc(&scores.local().unwrap()).unwrap());
        traj.push(roc_auc(&scores.trajectory().unwrap()).unwrap());
    }
    (stats::mean(&local), stats::mean(&traj))
}

/// Criterion 3: At a drift where trajectory features give AUC in [0.80, 0.90], local
/// one-step features stay near chance on the very same runs.
#[test]
fn criterion_03_local_vs_trajectory_contrast() {
    let start = Instant::now();
    let (local, traj) = identifiability_aucs_at(0.7);
    let ok = (0.80..=0.90).contains(&traj) && (0.45..=0.60).contains(&local);
    report_line(
        "03 local vs trajectory detection",
        ok,
        &format!(
            "trajectory AUC {traj:.3} in [0.80, 0.90], local AUC {local:.3} in [0.45, 0.60], 20 seeds, {:?}",
            start.elapsed()
        ),
    );
    assert!((0.80..=0.90).contains(&traj), "trajectory AUC {traj}");
    assert!((0.45..=0.60).contains(&local), "local AUC {local}");
}

/// Criterion 4: Trajectory detectability rises smoothly with drift strength.
#[test]
fn criterion_04_detectability_monotone_in_drift() {
    let start = Instant::now();
    let drifts: Vec<f64> = (0..=10).map(|i| i as f64 * 0.1).collect();
    let aucs: Vec<f64> = drifts
        .iter()
        .map(|&d| identifiability_aucs_at(d).1)
        .collect();
    let monotone = aucs.windows(2).all(|w| w[1] >= w[0] - 0.05);
    let ok = monotone && aucs[0] <= 0.55 && *aucs.last().unwrap() > 0.9;
    report_line(
        "04 detectability vs drift",
        ok,
        &format!(
            "AUC(0) = {:.3} <= 0.55, AUC(1.0) = {:.3} > 0.9, nondecreasing within 0.05: {monotone}, curve {:?}, {:?}",
            aucs[0],
            aucs.last().unwrap(),
            aucs.iter().map(|a| (a * 1000.0).round() / 1000.0).collect::<Vec<_>>(),
            start.elapsed()
        ),
    );
    assert!(aucs[0] <= 0.55, "AUC at zero drift {}", aucs[0]);
    assert!(
        *aucs.last().unwrap() > 0.9,
        "AUC at top drift {}",
        aucs.last().unwrap()
    );
    assert!(monotone, "adjacent AUC dip beyond 0.05: {aucs:?}");
}

/// Criterion 5: More data can hurt: with a mid-run drift onset the estimation error
/// turns around and ends well above its minimum; with no drift it only falls.
#[test]
fn criterion_05_error_versus_data_shape() {
    let start = Instant::now();
    let checkpoints = vec![100, 250, 500, 1000, 2000, 3500, 5000];
    let schedule = RegimeSchedule::onset(5000, 500).unwrap();
    let seeds: Vec<u64> = SEEDS_20.collect();

    let drifted = RegressionEnv::label_shift(5, 1.0, 0.5).unwrap();
    let curve = error_vs_data_curve(&drifted, &schedule, &checkpoints, &seeds).unwrap();
    let final_err = curve.points.last().unwrap().1;
    let min_err = curve
        .points
        .iter()
        .map(|&(_, m, _)| m)
        .fold(f64::INFINITY, f64::min);
    let turnaround = final_err >= 1.2 * min_err;

    let clean = RegressionEnv::label_shift(5, 1.0, 0.0).unwrap();
    let curve0 = error_vs_data_curve(&clean, &schedule, &checkpoints, &seeds).unwrap();
    let noninc = curve0.points.windows(2).all(|w| {
        let (_, m0, s0) = w[0];
        let (_, m1, s1) = w[1];
        m1 <= m0 + (s0 * s0 + s1 * s1).sqrt()
    });
    let ok = turnaround && noninc;
    report_line(
        "05 error vs data volume",
        ok,
        &format!(
            "drifted: min {min_err:.3}, final {final_err:.3} (ratio {:.2} >= 1.2); clean curve nonincreasing within 1 pooled SE: {noninc}, {:?}",
            final_err / min_err,
            start.elapsed()
        ),
    );
    assert!(turnaround, "final {final_err} vs min {min_err}");
    assert!(noninc, "clean error curve increased beyond tolerance");
}

/// Criterion 6: Steady-state instability distributions separate the regimes: the
/// interquartile ranges conditioned on the latent state do not overlap.
#[test]
fn criterion_06_regime_separability() {
    let start = Instant::now();
    let env = EnvSpec::Quadratic(QuadraticEnv::new(vec![0.0], vec![1.0], 0.1).unwrap());
    let corruption = feature_noise(0.5, 0.3);
    let schedule = RegimeSchedule::alternating(300, 300, 4).unwrap();
    let learner = gd(LearnerKind::BaselineGd, 0.05, 50);
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for seed in SEEDS_20 {
        let record = run_learner(&env, &learner, &schedule, Some(&corruption), seed).unwrap();
        let scores = collect_scores(&record, &schedule, 50).unwrap();
        pos.extend(scores.traj_pos);
        neg.extend(scores.traj_neg);
    }
    let q75_clean = stats::quantile(&neg, 0.75);
    let q25_corrupt = stats::quantile(&pos, 0.25);
    let ok = q75_clean < q25_corrupt;
    report_line(
        "06 regime separability",
        ok,
        &format!(
            "clean IQR [{:.3e}, {:.3e}] vs unreliable IQR [{:.3e}, {:.3e}], disjoint: {ok}, {:?}",
            stats::quantile(&neg, 0.25),
            q75_clean,
            q25_corrupt,
            stats::quantile(&pos, 0.75),
            start.elapsed()
        ),
    );
    assert!(
        ok,
        "IQRs overlap: clean q75 {q75_clean} vs unreliable q25 {q25_corrupt}"
    );
}

/// Criterion 7: Trust falls under persistent corruption and recovers afterwards, with
/// the stated margins, in at least 18 of 20 seeds.
#[test]
fn criterion_07_trust_dynamics_shape() {
    let start = Instant::now();
    let env = EnvSpec::Quadratic(QuadraticEnv::new(vec![0.0], vec![0.5], 0.1).unwrap());
    let corruption = feature_noise(0.5, 0.3);
    let schedule = ScheduleSpec::staged_even(2000).build().unwrap();
    let learner = gd(LearnerKind::TrustGd, 0.1, 50);
    let mut passing = 0;
    let mut details = Vec::new();
    for seed in SEEDS_20 {
        let record = run_learner(&env, &learner, &schedule, Some(&corruption), seed).unwrap();
        let clean = phase_mean(&record, Phase::Clean, &record.tau);
        let corrupt = phase_mean(&record, Phase::Corrupt, &record.tau);
        let recovery_taus: Vec<f64> = (0..record.len())
            .filter(|&i| record.phase[i] == Phase::Recovery)
            .map(|i| record.tau[i])
            .collect();
        let late = stats::mean(&recovery_taus[recovery_taus.len() * 3 / 4..]);
        if corrupt < clean - 0.2 && late > corrupt + 0.1 {
            passing += 1;
        }
        details.push((clean, corrupt, late));
    }
    let mean =
        |f: fn(&(f64, f64, f64)) -> f64| details.iter().map(f).sum::<f64>() / details.len() as f64;
    let ok = passing >= 18;
    report_line(
        "07 trust dynamics",
        ok,
        &format!(
            "{passing}/20 seeds with margins (mean tau: clean {:.3}, corrupt {:.3}, late recovery {:.3}), {:?}",
            mean(|d| d.0),
            mean(|d| d.1),
            mean(|d| d.2),
            start.elapsed()
        ),
    );
    assert!(ok, "only {passing} of 20 seeds satisfied the trust margins");
}

/// Criterion 8: Under heavy advantage sign flips the trust-modulated policy-gradient
/// learner recovers far more often and strays less during corruption.
#[test]
fn criterion_08_policy_gradient_recovery_contrast() {
    let start = Instant::now();
    let config = ExperimentConfig::default_for(ExperimentKind::RecoveryRl);
    let schedule = config.schedule.build().unwrap();
    let mut rates = Vec::new();
    let mut excursions = Vec::new();
    for learner in &config.learners {
        let mut metrics: Vec<RecoveryMetrics> = Vec::new();
        for seed in SEEDS_20 {
            let record = run_learner(
                &config.env,
                learner,
                &schedule,
                config.corruption.as_ref(),
                seed,
            )
            .unwrap();
            metrics.push(recovery_metrics(&record, 20, 5, ExcursionMode::PerformanceDrop).unwrap());
        }
        let rate = metrics.iter().filter(|m| m.recovered).count() as f64 / metrics.len() as f64;
        let excursion = stats::mean(
            &metrics
                .iter()
                .map(|m| m.corrupt_excursion)
                .collect::<Vec<_>>(),
        );
        rates.push(rate);
        excursions.push(excursion);
    }
    let rate_gap = rates[1] - rates[0];
    let ok = rate_gap >= 0.3 && excursions[1] < excursions[0];
    report_line(
        "08 recovery contrast",
        ok,
        &format!(
            "recovery rate baseline {:.2} vs trust {:.2} (gap {rate_gap:+.2} >= 0.3), corrupt excursion {:.3} vs {:.3}, 20 seeds, {:?}",
            rates[0], rates[1], excursions[0], excursions[1], start.elapsed()
        ),
    );
    assert!(rate_gap >= 0.3, "recovery rate gap {rate_gap}");
    assert!(
        excursions[1] < excursions[0],
        "trust excursion {} not below baseline {}",
        excursions[1],
        excursions[0]
    );
}

fn bandit_alpha_eff_means(env: BanditEnv) -> (f64, f64) {
    let schedule = RegimeSchedule::alternating(1000, 1000, 2).unwrap();
    let learner = gd(LearnerKind::TrustBanditQ, 0.1, 50);
    let mut stable = Vec::new();
    let mut volatile = Vec::new();
    for seed in SEEDS_20 {
        let record = run_learner(
            &EnvSpec::Bandit(env.clone()),
            &learner,
            &schedule,
            None,
            seed,
        )
        .unwrap();
        let mean_rho = |rho: u8| {
            let v: Vec<f64> = (0..record.len())
                .filter(|&i| record.rho[i] == rho)
                .map(|i| record.tau[i] * 0.1)
                .collect();
            stats::mean(&v)
        };
        stable.push(mean_rho(0));
        volatile.push(mean_rho(1));
    }
    (stats::mean(&stable), stats::mean(&volatile))
}

/// Criterion 9: The effective learning rate drops in volatile blocks, and the effect
/// vanishes when the hazard contrast is removed.
#[test]
fn criterion_09_bandit_effective_rate() {
    let start = Instant::now();
    let (stable, volatile) = bandit_alpha_eff_means(BanditEnv::new(0.01, 0.2, 0.8, 0.2).unwrap());
    let (stable_eq, volatile_eq) =
        bandit_alpha_eff_means(BanditEnv::equal_hazards(0.01, 0.8, 0.2).unwrap());
    let control_diff = (stable_eq - volatile_eq).abs();
    let ok = volatile < stable && control_diff < 0.05;
    report_line(
        "09 bandit effective rate",
        ok,
        &format!(
            "alpha_eff stable {stable:.4} vs volatile {volatile:.4}; equal-hazard |diff| {control_diff:.4} < 0.05, 20 seeds, {:?}",
            start.elapsed()
        ),
    );
    assert!(
        volatile < stable,
        "volatile {volatile} not below stable {stable}"
    );
    assert!(control_diff < 0.05, "control diff {control_diff}");
}

/// Criterion 10: The rank-based AUC agrees with exhaustive pair enumeration, including
/// on tie-heavy instances.
#[test]
fn criterion_10_auc_route_agreement() {
    let start = Instant::now();
    let mut rng = RngStream::new(2026, 0);
    let mut worst: f64 = 0.0;
    for case in 0..1000 {
        let n = 1 + rng.index(50);
        let m = 1 + rng.index(50);
        // alternate continuous and tie-heavy integer-valued scores
        let draw = |rng: &mut RngStream, k: usize| -> Vec<f64> {
            (0..k)
                .map(|_| {
                    if case % 2 == 0 {
                        rng.normal(0.0, 1.0)
                    } else {
                        rng.index(6) as f64
                    }
                })
                .collect()
        };
        let scores = LabeledScores::new(draw(&mut rng, n), draw(&mut rng, m)).unwrap();
        let exact = roc_auc_exact(&scores).unwrap();
        let ranked = roc_auc_ranked(&scores).unwrap();
        worst = worst.max((exact - ranked).abs());
    }
    let ok = worst < 1e-12;
    report_line(
        "10 AUC route agreement",
        ok,
        &format!(
            "1000 instances, worst |exact - ranked| = {worst:.2e}, {:?}",
            start.elapsed()
        ),
    );
    assert!(ok, "worst disagreement {worst}");
}

/// Criterion 11: The analytic policy score gradient matches central finite differences.
#[test]
fn criterion_11_policy_gradient_check() {
    let start = Instant::now();
    let mut rng = RngStream::new(7, 0);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n_actions = 2 + rng.index(5);
        let row: Vec<f64> = (0..n_actions).map(|_| rng.normal(0.0, 2.0)).collect();
        let action = rng.index(n_actions);
        let analytic = policy::grad_log_policy(&row, action);
        for k in 0..n_actions {
            let mut hi = row.clone();
            let mut lo = row.clone();
            hi[k] += h;
            lo[k] -= h;
            let fd = (policy::log_policy_prob(&hi, action) - policy::log_policy_prob(&lo, action))
                / (2.0 * h);
            let rel = (fd - analytic[k]).abs() / analytic[k].abs().max(1e-3);
            worst = worst.max(rel);
        }
    }
    let ok = worst < 1e-5;
    report_line(
        "11 policy gradient check",
        ok,
        &format!(
            "100 instances, worst relative error {worst:.2e}, {:?}",
            start.elapsed()
        ),
    );
    assert!(ok, "worst relative error {worst}");
}

/// Criterion 12: Determinism and IO round trips: identical artifacts on re-run, config
/// parse/emit fixed points for every shipped example, and report
/// regeneration from run logs alone.
#[test]
fn criterion_12_determinism_and_io() {
    let start = Instant::now();

    // every shipped example config is a parse -> emit -> parse fixed point
    let config_dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n_configs = 0;
    for entry in std::fs::read_dir(&config_dir).expect("configs directory") {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) != Some("toml") {
            continue;
        }
        let text = std::fs::read_to_string(&path).unwrap();
        let parsed = parse_config_str(&text)
            .unwrap_or_else(|e| panic!("{} failed to parse: {e}", path.display()));
        let emitted = mtr_core::config::emit_config(&parsed);
        let reparsed = parse_config_str(&emitted).unwrap();
        assert_eq!(parsed, reparsed, "{} is not a fixed point", path.display());
        assert_eq!(emitted, mtr_core::config::emit_config(&reparsed));
        n_configs += 1;
    }
    assert!(n_configs >= 7, "expected the shipped example configs");

    // identical artifacts on re-run and after report regeneration, across
    // every artifact family (run CSVs, manifest, figure CSVs, summaries)
    let mut n_artifacts = 0;
    for (kind, seeds) in [
        (ExperimentKind::Bandit, vec![0, 1]),
        (ExperimentKind::Identifiability, vec![0, 1, 2]),
        (ExperimentKind::Prop1, vec![0, 1]),
    ] {
        let mut config = ExperimentConfig::default_for(kind);
        config.seeds = seeds;
        let a = run_experiment(&config).unwrap();
        let b = run_experiment(&config).unwrap();
        assert_eq!(a.artifacts, b.artifacts, "{kind:?} re-run artifacts differ");

        // run CSV re-emission is byte-stable
        for (meta, record) in &a.runs {
            let text = run_csv_string(record);
            let reparsed = mtr_core::io::parse_run_csv(&text).unwrap();
            assert_eq!(
                run_csv_string(&reparsed),
                text,
                "{} not byte-stable",
                meta.file
            );
        }

        // report regenerates every artifact byte-identically from run logs
        let tmp = std::path::Path::new(env!("CARGO_TARGET_TMPDIR"))
            .join(format!("acceptance_report_{}", kind.label()));
        let _ = std::fs::remove_dir_all(&tmp);
        harness::write_experiment(&a, &tmp).unwrap();
        let regenerated = harness::report(&tmp).unwrap();
        assert_eq!(
            a.artifacts, regenerated.artifacts,
            "{kind:?} report changed artifacts"
        );
        for (rel, text) in &a.artifacts {
            let on_disk = std::fs::read_to_string(tmp.join(rel)).unwrap();
            assert_eq!(&on_disk, text, "{rel} differs on disk after report");
        }
        let _ = std::fs::remove_dir_all(&tmp);
        n_artifacts += a.artifacts.len();
    }

    report_line(
        "12 determinism and io",
        true,
        &format!(
            "{n_configs} example configs are fixed points; re-run and report byte-identical across {n_artifacts} artifacts in 3 experiment kinds, {:?}",
            start.elapsed()
        ),
    );
}

//! Experiment orchestration: multi-seed execution, staged-protocol recovery
//! metrics, seed aggregation, and deterministic artifact generation.
//!
//! `run_experiment` executes every (learner, seed) cell, then hands the
//! records to a pure postprocessing step that renders every output file
//! (config echo, run CSVs, manifest, figure CSVs, summary JSON) as bytes.
//! `report` rebuilds the same artifacts from persisted run logs alone, so run
//! CSVs remain the source of truth for every aggregate.

use crate::config::{emit_config, parse_config_str, ExperimentConfig, ExperimentKind};
use crate::detection::{collect_scores, error_vs_data_curve, roc_auc, ErrorCurve, SeedAucs};
use crate::env::EnvSpec;
use crate::error::{MtrError, Result};
use crate::io::{
    self, fmt_f64, json_num, manifest_string, parse_manifest, parse_run_csv, run_csv_string,
    RunMeta,
};
use crate::learners::{run_learner, LearnerConfig};
use crate::record::RunRecord;
use crate::schedule::{Phase, RegimeSchedule};
use crate::stats;
use serde_json::{Map, Value};
use std::collections::BTreeMap;
use std::path::Path;

/// How the corrupt-phase excursion is measured: parameter error for
/// estimation tasks, performance drop below the clean level for reward tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExcursionMode {
    MeanError,
    PerformanceDrop,
}

impl ExcursionMode {
    fn for_env(env: &EnvSpec) -> ExcursionMode {
        match env {
            EnvSpec::Quadratic(_) | EnvSpec::Regression(_) => ExcursionMode::MeanError,
            EnvSpec::Bandit(_) | EnvSpec::Episodic(_) => ExcursionMode::PerformanceDrop,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryMetrics {
    /// Mean smoothed performance over the clean phase.
    pub r_clean: f64,
    /// First recovery-phase step whose smoothed performance reaches
    /// `0.9 * r_clean`; absent if never reached.
    pub t_rec: Option<usize>,
    pub recovered: bool,
    /// Mean reward over the last tenth of the run.
    pub final_return: f64,
    pub corrupt_excursion: f64,
}

/// Trailing-bucket evaluations of the reward channel: one point every
/// `eval_every` steps, smoothed by a trailing moving average over
/// `smoothing_window` evaluations.
fn smoothed_evals(
    record: &RunRecord,
    eval_every: usize,
    smoothing_window: usize,
) -> Vec<(usize, Phase, f64)> {
    let mut perfs: Vec<f64> = Vec::new();
    let mut out = Vec::new();
    let mut step = eval_every - 1;
    while step < record.len() {
        let bucket = &record.reward[step + 1 - eval_every..=step];
        perfs.push(stats::mean(bucket));
        let from = perfs.len().saturating_sub(smoothing_window);
        let smoothed = stats::mean(&perfs[from..]);
        out.push((step, record.phase[step], smoothed));
        step += eval_every;
    }
    out
}

/// Recovery metrics of one staged run.
pub fn recovery_metrics(
    record: &RunRecord,
    eval_every: usize,
    smoothing_window: usize,
    mode: ExcursionMode,
) -> Result<RecoveryMetrics> {
    if eval_every == 0 || smoothing_window == 0 {
        return Err(MtrError::invalid(
            "eval_every and smoothing_window must be >= 1",
        ));
    }
    let has_phase = |p: Phase| record.phase.contains(&p);
    if !record.aborted()
        && !(has_phase(Phase::Clean) && has_phase(Phase::Corrupt) && has_phase(Phase::Recovery))
    {
        return Err(MtrError::invalid(
            "recovery metrics need a record covering all three phases",
        ));
    }
    let evals = smoothed_evals(record, eval_every, smoothing_window);
    let clean: Vec<f64> = evals
        .iter()
        .filter(|(_, p, _)| *p == Phase::Clean)
        .map(|&(_, _, v)| v)
        .collect();
    if clean.is_empty() {
        return Err(MtrError::invalid(
            "recovery metrics need at least one clean-phase evaluation",
        ));
    }
    let r_clean = stats::mean(&clean);
    let threshold = 0.9 * r_clean;

    let t_rec = if record.aborted() {
        None
    } else {
        evals
            .iter()
            .find(|(_, p, v)| *p == Phase::Recovery && *v >= threshold)
            .map(|&(step, _, _)| step)
    };

    let final_return = if record.aborted() {
        // last valid smoothed value stands in for late-run performance
        evals
            .last()
            .map(|&(_, _, v)| v)
            .unwrap_or_else(|| *record.reward.last().unwrap_or(&0.0))
    } else {
        let tail = record.len() - (record.len() / 10).max(1);
        stats::mean(&record.reward[tail..])
    };

    let corrupt_excursion = match mode {
        ExcursionMode::MeanError => {
            let errs: Vec<f64> = (0..record.len())
                .filter(|&i| record.phase[i] == Phase::Corrupt)
                .map(|i| record.param_error[i])
                .collect();
            if errs.is_empty() {
                0.0
            } else {
                stats::mean(&errs)
            }
        }
        ExcursionMode::PerformanceDrop => {
            let drops: Vec<f64> = evals
                .iter()
                .filter(|(_, p, _)| *p == Phase::Corrupt)
                .map(|&(_, _, v)| r_clean - v)
                .collect();
            if drops.is_empty() {
                0.0
            } else {
                stats::mean(&drops)
            }
        }
    };

    Ok(RecoveryMetrics {
        r_clean,
        t_rec,
        recovered: t_rec.is_some(),
        final_return,
        corrupt_excursion,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedAggregate {
    pub n_runs: usize,
    pub n_recovered: usize,
    pub recovery_rate: f64,
    /// Mean and sample std of `t_rec` over recovered runs only.
    pub t_rec_mean: Option<f64>,
    pub t_rec_std: Option<f64>,
    pub final_return_mean: f64,
    pub corrupt_excursion_mean: f64,
}

pub fn aggregate_seeds(metrics: &[RecoveryMetrics]) -> Result<SeedAggregate> {
    if metrics.is_empty() {
        return Err(MtrError::invalid("cannot aggregate zero runs"));
    }
    let recovered: Vec<f64> = metrics
        .iter()
        .filter_map(|m| m.t_rec.map(|t| t as f64))
        .collect();
    let finals: Vec<f64> = metrics.iter().map(|m| m.final_return).collect();
    let excursions: Vec<f64> = metrics.iter().map(|m| m.corrupt_excursion).collect();
    Ok(SeedAggregate {
        n_runs: metrics.len(),
        n_recovered: recovered.len(),
        recovery_rate: recovered.len() as f64 / metrics.len() as f64,
        t_rec_mean: (!recovered.is_empty()).then(|| stats::mean(&recovered)),
        t_rec_std: (!recovered.is_empty()).then(|| stats::sample_std(&recovered)),
        final_return_mean: stats::mean(&finals),
        corrupt_excursion_mean: stats::mean(&excursions),
    })
}

/// A finished experiment: every run with its metadata, plus every output
/// file rendered as bytes keyed by its path relative to the output dir.
#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub runs: Vec<(RunMeta, RunRecord)>,
    pub artifacts: BTreeMap<String, String>,
    pub summary: Value,
}

/// Execute every run of the experiment and render all artifacts.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let runs = execute_runs(config)?;
    let failed = runs.iter().filter(|(m, _)| m.abort.is_some()).count();
    if failed == runs.len() {
        return Err(MtrError::AllRunsFailed { total: runs.len() });
    }
    let (artifacts, summary) = postprocess(config, &runs)?;
    Ok(ExperimentResult {
        config: config.clone(),
        runs,
        artifacts,
        summary,
    })
}

/// Write every artifact of a finished experiment under `out_dir`.
pub fn write_experiment(result: &ExperimentResult, out_dir: &Path) -> Result<()> {
    for (rel, text) in &result.artifacts {
        io::write_text(&out_dir.join(rel), text)?;
    }
    Ok(())
}

/// Rebuild figure CSVs and the summary from a persisted output directory.
/// Metrics are recomputed from the run CSVs; nothing is copied from the old
/// summary.
pub fn report(out_dir: &Path) -> Result<ExperimentResult> {
    let config = parse_config_str(&io::read_text(&out_dir.join("config.toml"))?)?;
    let metas = parse_manifest(&io::read_text(&out_dir.join("runs/manifest.csv"))?)?;
    let mut runs = Vec::with_capacity(metas.len());
    for meta in metas {
        let mut record = parse_run_csv(&io::read_text(&out_dir.join(&meta.file))?)?;
        record.final_params = meta.final_params.clone();
        record.abort = meta.abort.clone();
        runs.push((meta, record));
    }
    let (artifacts, summary) = postprocess(&config, &runs)?;
    let result = ExperimentResult {
        config,
        runs,
        artifacts,
        summary,
    };
    write_experiment(&result, out_dir)?;
    Ok(result)
}

// ---------------------------------------------------------------------------
// execution

fn learner_labels(learners: &[LearnerConfig]) -> Vec<String> {
    let mut labels = Vec::with_capacity(learners.len());
    for (i, l) in learners.iter().enumerate() {
        let base = l.kind.label().to_string();
        let duplicated = learners
            .iter()
            .enumerate()
            .any(|(j, other)| j != i && other.kind == l.kind);
        labels.push(if duplicated {
            format!("{base}_{i}")
        } else {
            base
        });
    }
    labels
}

fn meta_for(
    record: &RunRecord,
    file: String,
    label: String,
    learner_index: Option<usize>,
    seed: u64,
    drift: Option<f64>,
) -> RunMeta {
    RunMeta {
        file,
        label,
        learner_index,
        seed,
        drift,
        final_params: record.final_params.clone(),
        abort: record.abort.clone(),
    }
}

fn execute_runs(config: &ExperimentConfig) -> Result<Vec<(RunMeta, RunRecord)>> {
    let schedule = config.schedule.build()?;
    let labels = learner_labels(&config.learners);
    let mut runs: Vec<(RunMeta, RunRecord)> = Vec::new();

    match config.kind {
        ExperimentKind::Sweep => {
            for (di, &drift) in config.detection.drifts.iter().enumerate() {
                let mut env = match &config.env {
                    EnvSpec::Regression(r) => r.clone(),
                    other => {
                        return Err(MtrError::validation(format!(
                            "sweep experiments need a regression environment, got {}",
                            other.name()
                        )))
                    }
                };
                env.drift_strength = drift;
                let env = EnvSpec::Regression(env);
                let learner = &config.learners[0];
                for &seed in &config.seeds {
                    let record =
                        run_learner(&env, learner, &schedule, config.corruption.as_ref(), seed)?;
                    let file = format!("runs/drift{di:02}_seed{seed}.csv");
                    runs.push((
                        meta_for(&record, file, labels[0].clone(), Some(0), seed, Some(drift)),
                        record,
                    ));
                }
            }
        }
        ExperimentKind::Identifiability => {
            let learner = &config.learners[0];
            for &seed in &config.seeds {
                let record = run_learner(
                    &config.env,
                    learner,
                    &schedule,
                    config.corruption.as_ref(),
                    seed,
                )?;
                let file = format!("runs/{}_seed{seed}.csv", labels[0]);
                runs.push((
                    meta_for(&record, file, labels[0].clone(), Some(0), seed, None),
                    record,
                ));
            }
            // estimation runs for the error-versus-data curve
            let curve = fig1a_curve(config)?;
            for run in curve.runs {
                let file = format!("runs/running_ols_seed{}.csv", run.seed);
                runs.push((
                    meta_for(
                        &run.record,
                        file,
                        "running_ols".to_string(),
                        None,
                        run.seed,
                        None,
                    ),
                    run.record,
                ));
            }
        }
        _ => {
            for (li, learner) in config.learners.iter().enumerate() {
                for &seed in &config.seeds {
                    let record = run_learner(
                        &config.env,
                        learner,
                        &schedule,
                        config.corruption.as_ref(),
                        seed,
                    )?;
                    let file = format!("runs/{}_seed{seed}.csv", labels[li]);
                    runs.push((
                        meta_for(&record, file, labels[li].clone(), Some(li), seed, None),
                        record,
                    ));
                }
            }
        }
    }
    Ok(runs)
}

fn fig1a_env(config: &ExperimentConfig) -> Result<crate::env::RegressionEnv> {
    let mut env = match &config.env {
        EnvSpec::Regression(r) => r.clone(),
        other => {
            return Err(MtrError::validation(format!(
                "estimation curves need a regression environment, got {}",
                other.name()
            )))
        }
    };
    env.drift_strength = config.detection.fig1a_drift;
    Ok(env)
}

fn fig1a_curve(config: &ExperimentConfig) -> Result<ErrorCurve> {
    let env = fig1a_env(config)?;
    let schedule =
        RegimeSchedule::onset(config.detection.fig1a_total, config.detection.fig1a_onset)?;
    error_vs_data_curve(
        &env,
        &schedule,
        &config.detection.checkpoints,
        &config.seeds,
    )
}

// ---------------------------------------------------------------------------
// postprocessing: everything below is a pure function of (config, runs)

fn postprocess(
    config: &ExperimentConfig,
    runs: &[(RunMeta, RunRecord)],
) -> Result<(BTreeMap<String, String>, Value)> {
    let mut artifacts: BTreeMap<String, String> = BTreeMap::new();
    artifacts.insert("config.toml".to_string(), emit_config(config));
    let metas: Vec<RunMeta> = runs.iter().map(|(m, _)| m.clone()).collect();
    artifacts.insert("runs/manifest.csv".to_string(), manifest_string(&metas));
    for (meta, record) in runs {
        artifacts.insert(meta.file.clone(), run_csv_string(record));
    }

    let mut summary = Map::new();
    summary.insert("kind".into(), Value::String(config.kind.label().into()));
    summary.insert(
        "config".into(),
        serde_json::to_value(toml::from_str::<toml::Value>(&emit_config(config)).unwrap())
            .unwrap_or(Value::Null),
    );
    summary.insert(
        "runs".into(),
        Value::Array(
            runs.iter()
                .map(|(m, _)| {
                    let mut o = Map::new();
                    o.insert("file".into(), Value::String(m.file.clone()));
                    o.insert("label".into(), Value::String(m.label.clone()));
                    o.insert("seed".into(), Value::from(m.seed));
                    o.insert(
                        "error".into(),
                        match &m.abort {
                            Some(a) => {
                                Value::String(format!("aborted at step {}: {}", a.step, a.reason))
                            }
                            None => Value::Null,
                        },
                    );
                    Value::Object(o)
                })
                .collect(),
        ),
    );

    match config.kind {
        ExperimentKind::Prop1 => postprocess_prop1(config, runs, &mut artifacts, &mut summary)?,
        ExperimentKind::Identifiability => {
            postprocess_identifiability(config, runs, &mut artifacts, &mut summary)?
        }
        ExperimentKind::Sweep => postprocess_sweep(config, runs, &mut artifacts, &mut summary)?,
        ExperimentKind::RecoveryRl | ExperimentKind::RecoverySupervised => {
            postprocess_recovery(config, runs, &mut artifacts, &mut summary)?
        }
        ExperimentKind::Bandit => postprocess_bandit(config, runs, &mut artifacts, &mut summary)?,
    }

    let summary = Value::Object(summary);
    artifacts.insert("summary.json".to_string(), io::summary_string(&summary));
    Ok((artifacts, summary))
}

fn phase_mean(record: &RunRecord, phase: Phase, values: &[f64]) -> Option<f64> {
    let vals: Vec<f64> = (0..record.len())
        .filter(|&i| record.phase[i] == phase)
        .map(|i| values[i])
        .collect();
    (!vals.is_empty()).then(|| stats::mean(&vals))
}

fn opt_json(v: Option<f64>) -> Value {
    v.map(json_num).unwrap_or(Value::Null)
}

/// Per-learner trust and instability series averaged across seeds; emitted
/// only when the experiment includes a trust-modulated learner.
fn trust_csv(
    config: &ExperimentConfig,
    runs: &[(RunMeta, RunRecord)],
    labels: &[String],
) -> Option<String> {
    if !config.learners.iter().any(|l| l.kind.is_trust()) {
        return None;
    }
    let mut out = String::from("step,learner,mean_tau,mean_s_t\n");
    let mut any = false;
    for label in labels {
        let records: Vec<&RunRecord> = runs
            .iter()
            .filter(|(m, _)| &m.label == label && m.learner_index.is_some())
            .map(|(_, r)| r)
            .collect();
        if records.is_empty() {
            continue;
        }
        any = true;
        let len = records.iter().map(|r| r.len()).min().unwrap_or(0);
        for step in 0..len {
            let taus: Vec<f64> = records.iter().map(|r| r.tau[step]).collect();
            let instabs: Vec<f64> = records.iter().filter_map(|r| r.instability[step]).collect();
            out.push_str(&format!(
                "{},{},{},{}\n",
                step,
                label,
                fmt_f64(stats::mean(&taus)),
                if instabs.is_empty() {
                    String::new()
                } else {
                    fmt_f64(stats::mean(&instabs))
                }
            ));
        }
    }
    any.then_some(out)
}

fn postprocess_prop1(
    config: &ExperimentConfig,
    runs: &[(RunMeta, RunRecord)],
    artifacts: &mut BTreeMap<String, String>,
    summary: &mut Map<String, Value>,
) -> Result<()> {
    let labels = learner_labels(&config.learners);
    let mut learners_json = Map::new();
    for (li, label) in labels.iter().enumerate() {
        let group: Vec<&(RunMeta, RunRecord)> = runs
            .iter()
            .filter(|(m, _)| m.learner_index == Some(li))
            .collect();
        let mut per_seed = Vec::new();
        for (meta, record) in &group {
            let mut o = Map::new();
            o.insert("seed".into(), Value::from(meta.seed));
            if let Some(a) = &meta.abort {
                o.insert(
                    "error".into(),
                    Value::String(format!("aborted at step {}: {}", a.step, a.reason)),
                );
                per_seed.push(Value::Object(o));
                continue;
            }
            o.insert(
                "final_params".into(),
                Value::Array(meta.final_params.iter().map(|&v| json_num(v)).collect()),
            );
            o.insert(
                "final_theta_error".into(),
                json_num(*record.param_error.last().unwrap_or(&f64::NAN)),
            );
            o.insert(
                "final_grad_norm".into(),
                json_num(*record.grad_norm.last().unwrap_or(&f64::NAN)),
            );
            let monotone = record.loss.windows(2).all(|w| w[1] <= w[0] + 1e-15);
            o.insert("loss_nonincreasing".into(), Value::Bool(monotone));
            for phase in [Phase::Clean, Phase::Corrupt, Phase::Recovery] {
                let key = format!("mean_tau_{}", phase.to_string().to_lowercase());
                o.insert(key, opt_json(phase_mean(record, phase, &record.tau)));
                let key = format!("mean_theta_error_{}", phase.to_string().to_lowercase());
                o.insert(
                    key,
                    opt_json(phase_mean(record, phase, &record.param_error)),
                );
            }
            per_seed.push(Value::Object(o));
        }
        let mut entry = Map::new();
        entry.insert("per_seed".into(), Value::Array(per_seed));
        // fixed-point check applies to noiseless quadratic runs
        if let EnvSpec::Quadratic(q) = &config.env {
            if q.noise_sigma == 0.0 {
                let schedule = config.schedule.build()?;
                let last = schedule.segments().last().unwrap();
                let expected: Vec<f64> = if q.bias_always_on || last.regime.is_unreliable() {
                    q.biased_fixed_point()
                } else {
                    q.theta_star.clone()
                };
                let max_offset = group
                    .iter()
                    .filter(|(m, _)| m.abort.is_none())
                    .map(|(m, _)| {
                        m.final_params
                            .iter()
                            .zip(&expected)
                            .map(|(a, b)| (a - b).abs())
                            .fold(0.0f64, f64::max)
                    })
                    .fold(0.0f64, f64::max);
                let mut fp = Map::new();
                fp.insert(
                    "expected".into(),
                    Value::Array(expected.iter().map(|&v| json_num(v)).collect()),
                );
                fp.insert("max_abs_offset".into(), json_num(max_offset));
                entry.insert("fixed_point_check".into(), Value::Object(fp));
            }
        }
        learners_json.insert(label.clone(), Value::Object(entry));
    }
    summary.insert("learners".into(), Value::Object(learners_json));
    if let Some(text) = trust_csv(config, runs, &labels) {
        artifacts.insert("trust.csv".to_string(), text);
    }
    Ok(())
}

/// Recompute per-seed detection AUCs from persisted records.
fn aucs_from_records(
    records: &[(&RunMeta, &RunRecord)],
    schedule: &RegimeSchedule,
    window: usize,
) -> Result<Vec<SeedAucs>> {
    let mut out = Vec::new();
    for (meta, record) in records {
        let scores = collect_scores(record, schedule, window)?;
        out.push(SeedAucs {
            seed: meta.seed,
            auc_local: roc_auc(&scores.local()?)?,
            auc_local5: roc_auc(&scores.local5()?)?,
            auc_trajectory: roc_auc(&scores.trajectory()?)?,
        });
    }
    Ok(out)
}

fn postprocess_identifiability(
    config: &ExperimentConfig,
    runs: &[(RunMeta, RunRecord)],
    artifacts: &mut BTreeMap<String, String>,
    summary: &mut Map<String, Value>,
) -> Result<()> {
    let schedule = config.schedule.build()?;
    let window = config.learners[0].window;
    let detection_runs: Vec<(&RunMeta, &RunRecord)> = runs
        .iter()
        .filter(|(m, _)| m.learner_index == Some(0))
        .map(|(m, r)| (m, r))
        .collect();
    let aucs = aucs_from_records(&detection_runs, &schedule, window)?;

    let mut fig1b = String::from("seed,auc_local,auc_local_w5,auc_trajectory\n");
    for a in &aucs {
        fig1b.push_str(&format!(
            "{},{},{},{}\n",
            a.seed,
            fmt_f64(a.auc_local),
            fmt_f64(a.auc_local5),
            fmt_f64(a.auc_trajectory)
        ));
    }
    artifacts.insert("fig1b.csv".to_string(), fig1b);

    // error-versus-data curve from the estimation records
    let ols_runs: Vec<(&RunMeta, &RunRecord)> = runs
        .iter()
        .filter(|(m, _)| m.label == "running_ols")
        .map(|(m, r)| (m, r))
        .collect();
    let mut fig1a = String::from("n,seed,error\n");
    let mut per_checkpoint: Vec<Vec<f64>> = vec![Vec::new(); config.detection.checkpoints.len()];
    for (meta, record) in &ols_runs {
        for (ci, &n) in config.detection.checkpoints.iter().enumerate() {
            let err = record.param_error[n - 1];
            fig1a.push_str(&format!("{},{},{}\n", n, meta.seed, fmt_f64(err)));
            per_checkpoint[ci].push(err);
        }
    }
    artifacts.insert("fig1a.csv".to_string(), fig1a);

    let mean_local = stats::mean(&aucs.iter().map(|a| a.auc_local).collect::<Vec<_>>());
    let mean_local5 = stats::mean(&aucs.iter().map(|a| a.auc_local5).collect::<Vec<_>>());
    let mean_traj = stats::mean(&aucs.iter().map(|a| a.auc_trajectory).collect::<Vec<_>>());
    let mut det = Map::new();
    det.insert("auc_local".into(), json_num(mean_local));
    det.insert("auc_local_w5".into(), json_num(mean_local5));
    det.insert("auc_trajectory".into(), json_num(mean_traj));
    summary.insert("detection".into(), Value::Object(det));

    let curve: Vec<Value> = config
        .detection
        .checkpoints
        .iter()
        .zip(&per_checkpoint)
        .map(|(&n, errs)| {
            let mut o = Map::new();
            o.insert("n".into(), Value::from(n));
            o.insert("mean_error".into(), json_num(stats::mean(errs)));
            o.insert("se".into(), json_num(stats::standard_error(errs)));
            Value::Object(o)
        })
        .collect();
    summary.insert("error_vs_data".into(), Value::Array(curve));
    Ok(())
}

fn postprocess_sweep(
    config: &ExperimentConfig,
    runs: &[(RunMeta, RunRecord)],
    artifacts: &mut BTreeMap<String, String>,
    summary: &mut Map<String, Value>,
) -> Result<()> {
    let schedule = config.schedule.build()?;
    let window = config.learners[0].window;
    let mut fig1c = String::from("drift,seed,auc_local,auc_trajectory\n");
    let mut points = Vec::new();
    for &drift in &config.detection.drifts {
        let group: Vec<(&RunMeta, &RunRecord)> = runs
            .iter()
            .filter(|(m, _)| m.drift == Some(drift))
            .map(|(m, r)| (m, r))
            .collect();
        let aucs = aucs_from_records(&group, &schedule, window)?;
        for a in &aucs {
            fig1c.push_str(&format!(
                "{},{},{},{}\n",
                fmt_f64(drift),
                a.seed,
                fmt_f64(a.auc_local),
                fmt_f64(a.auc_trajectory)
            ));
        }
        let mut o = Map::new();
        o.insert("drift".into(), json_num(drift));
        o.insert(
            "auc_local".into(),
            json_num(stats::mean(
                &aucs.iter().map(|a| a.auc_local).collect::<Vec<_>>(),
            )),
        );
        o.insert(
            "auc_trajectory".into(),
            json_num(stats::mean(
                &aucs.iter().map(|a| a.auc_trajectory).collect::<Vec<_>>(),
            )),
        );
        points.push(Value::Object(o));
    }
    artifacts.insert("fig1c.csv".to_string(), fig1c);
    summary.insert("sweep".into(), Value::Array(points));
    Ok(())
}

fn postprocess_recovery(
    config: &ExperimentConfig,
    runs: &[(RunMeta, RunRecord)],
    artifacts: &mut BTreeMap<String, String>,
    summary: &mut Map<String, Value>,
) -> Result<()> {
    let labels = learner_labels(&config.learners);
    let mode = ExcursionMode::for_env(&config.env);
    let mut recovery_csv =
        String::from("learner,seed,recovered,t_rec,r_clean,final_return,corrupt_excursion\n");
    let mut learners_json = Map::new();
    for (li, label) in labels.iter().enumerate() {
        let group: Vec<&(RunMeta, RunRecord)> = runs
            .iter()
            .filter(|(m, _)| m.learner_index == Some(li))
            .collect();
        let mut metrics = Vec::new();
        let mut per_seed = Vec::new();
        for (meta, record) in &group {
            let m = recovery_metrics(
                record,
                config.evaluation.eval_every,
                config.evaluation.smoothing_window,
                mode,
            )?;
            recovery_csv.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                label,
                meta.seed,
                m.recovered,
                m.t_rec.map(|t| t.to_string()).unwrap_or_default(),
                fmt_f64(m.r_clean),
                fmt_f64(m.final_return),
                fmt_f64(m.corrupt_excursion)
            ));
            let mut o = Map::new();
            o.insert("seed".into(), Value::from(meta.seed));
            o.insert("recovered".into(), Value::Bool(m.recovered));
            o.insert(
                "t_rec".into(),
                m.t_rec.map(Value::from).unwrap_or(Value::Null),
            );
            o.insert("r_clean".into(), json_num(m.r_clean));
            o.insert("final_return".into(), json_num(m.final_return));
            o.insert("corrupt_excursion".into(), json_num(m.corrupt_excursion));
            if let Some(a) = &meta.abort {
                o.insert(
                    "error".into(),
                    Value::String(format!("aborted at step {}: {}", a.step, a.reason)),
                );
            }
            per_seed.push(Value::Object(o));
            metrics.push(m);
        }
        let agg = aggregate_seeds(&metrics)?;
        let mut entry = Map::new();
        entry.insert("per_seed".into(), Value::Array(per_seed));
        let mut aggregate = Map::new();
        aggregate.insert("n_runs".into(), Value::from(agg.n_runs));
        aggregate.insert("n_recovered".into(), Value::from(agg.n_recovered));
        aggregate.insert("recovery_rate".into(), json_num(agg.recovery_rate));
        aggregate.insert("t_rec_mean".into(), opt_json(agg.t_rec_mean));
        aggregate.insert("t_rec_std".into(), opt_json(agg.t_rec_std));
        aggregate.insert("final_return_mean".into(), json_num(agg.final_return_mean));
        aggregate.insert(
            "corrupt_excursion_mean".into(),
            json_num(agg.corrupt_excursion_mean),
        );
        entry.insert("aggregate".into(), Value::Object(aggregate));
        learners_json.insert(label.clone(), Value::Object(entry));
    }
    artifacts.insert("recovery.csv".to_string(), recovery_csv);
    summary.insert("learners".into(), Value::Object(learners_json));
    if let Some(text) = trust_csv(config, runs, &labels) {
        artifacts.insert("trust.csv".to_string(), text);
    }
    Ok(())
}

fn postprocess_bandit(
    config: &ExperimentConfig,
    runs: &[(RunMeta, RunRecord)],
    artifacts: &mut BTreeMap<String, String>,
    summary: &mut Map<String, Value>,
) -> Result<()> {
    let labels = learner_labels(&config.learners);
    let mut bandit_csv =
        String::from("learner,seed,mean_alpha_eff_stable,mean_alpha_eff_volatile,mean_reward\n");
    let mut learners_json = Map::new();
    for (li, label) in labels.iter().enumerate() {
        let eta = config.learners[li].eta;
        let group: Vec<&(RunMeta, RunRecord)> = runs
            .iter()
            .filter(|(m, _)| m.learner_index == Some(li))
            .collect();
        let mut stable_means = Vec::new();
        let mut volatile_means = Vec::new();
        let mut rewards = Vec::new();
        for (meta, record) in &group {
            let alpha_mean = |rho: u8| -> f64 {
                let vals: Vec<f64> = (0..record.len())
                    .filter(|&i| record.rho[i] == rho)
                    .map(|i| record.tau[i] * eta)
                    .collect();
                stats::mean(&vals)
            };
            let stable = alpha_mean(0);
            let volatile = alpha_mean(1);
            let reward = stats::mean(&record.reward);
            bandit_csv.push_str(&format!(
                "{},{},{},{},{}\n",
                label,
                meta.seed,
                fmt_f64(stable),
                fmt_f64(volatile),
                fmt_f64(reward)
            ));
            stable_means.push(stable);
            volatile_means.push(volatile);
            rewards.push(reward);
        }
        let mut entry = Map::new();
        entry.insert(
            "mean_alpha_eff_stable".into(),
            json_num(stats::mean(&stable_means)),
        );
        entry.insert(
            "mean_alpha_eff_volatile".into(),
            json_num(stats::mean(&volatile_means)),
        );
        entry.insert("mean_reward".into(), json_num(stats::mean(&rewards)));
        learners_json.insert(label.clone(), Value::Object(entry));
    }
    artifacts.insert("bandit.csv".to_string(), bandit_csv);
    summary.insert("learners".into(), Value::Object(learners_json));
    if let Some(text) = trust_csv(config, runs, &labels) {
        artifacts.insert("trust.csv".to_string(), text);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::record::RunAbort;

    /// Synthetic staged record with a controllable reward series.
    fn synthetic_record(rewards: &[(Phase, f64)]) -> RunRecord {
        let mut r = RunRecord::default();
        for &(phase, reward) in rewards {
            let rho = u8::from(phase == Phase::Corrupt);
            r.push_row(0.0, 0.0, 0.0, None, 1.0, rho, phase, reward)
                .unwrap();
        }
        r
    }

    fn staged_series(clean: f64, corrupt: f64, recovery: f64, len: usize) -> Vec<(Phase, f64)> {
        let mut v = Vec::new();
        for _ in 0..len {
            v.push((Phase::Clean, clean));
        }
        for _ in 0..len {
            v.push((Phase::Corrupt, corrupt));
        }
        for _ in 0..len {
            v.push((Phase::Recovery, recovery));
        }
        v
    }

    #[test]
    fn constant_recovery_above_threshold_recovers_immediately() {
        let record = synthetic_record(&staged_series(100.0, 10.0, 95.0, 50));
        let m = recovery_metrics(&record, 1, 1, ExcursionMode::PerformanceDrop).unwrap();
        assert!(m.recovered);
        assert_eq!(m.t_rec, Some(100)); // first recovery step
        assert!((m.r_clean - 100.0).abs() < 1e-12);
    }

    #[test]
    fn recovery_below_threshold_never_recovers() {
        let record = synthetic_record(&staged_series(100.0, 10.0, 80.0, 50));
        let m = recovery_metrics(&record, 1, 1, ExcursionMode::PerformanceDrop).unwrap();
        assert!(!m.recovered);
        assert_eq!(m.t_rec, None);
    }

    #[test]
    fn threshold_crossing_step_is_reported() {
        // recovery performance first reaches the 90 threshold at step 312
        let mut series = staged_series(100.0, 10.0, 0.0, 150);
        for (i, entry) in series.iter_mut().enumerate().skip(300) {
            entry.1 = if i >= 312 {
                90.0 + (i - 312) as f64 * 0.01
            } else {
                50.0
            };
        }
        let record = synthetic_record(&series);
        let m = recovery_metrics(&record, 1, 1, ExcursionMode::PerformanceDrop).unwrap();
        assert_eq!(m.t_rec, Some(312));
    }

    #[test]
    fn missing_phase_rejected() {
        let record = synthetic_record(&(0..100).map(|_| (Phase::Clean, 1.0)).collect::<Vec<_>>());
        assert!(recovery_metrics(&record, 1, 1, ExcursionMode::PerformanceDrop).is_err());
    }

    #[test]
    fn aborted_run_counts_as_not_recovered() {
        let mut record = synthetic_record(&staged_series(100.0, 10.0, 95.0, 50));
        record.abort = Some(RunAbort {
            step: 149,
            reason: "diverged".into(),
        });
        let m = recovery_metrics(&record, 1, 1, ExcursionMode::PerformanceDrop).unwrap();
        assert!(!m.recovered);
        assert_eq!(m.t_rec, None);
    }

    // r_clean depends on clean-phase data only: perturbing corrupt and
    // recovery rows leaves it unchanged.
    #[test]
    fn r_clean_ignores_later_phases() {
        let base = synthetic_record(&staged_series(100.0, 10.0, 95.0, 50));
        let surgered = synthetic_record(&staged_series(100.0, -500.0, 7.0, 50));
        let a = recovery_metrics(&base, 1, 1, ExcursionMode::PerformanceDrop).unwrap();
        let b = recovery_metrics(&surgered, 1, 1, ExcursionMode::PerformanceDrop).unwrap();
        assert_eq!(a.r_clean, b.r_clean);
    }

    #[test]
    fn aggregate_matches_hand_arithmetic() {
        let m = |t_rec: Option<usize>| RecoveryMetrics {
            r_clean: 1.0,
            t_rec,
            recovered: t_rec.is_some(),
            final_return: 0.5,
            corrupt_excursion: 0.2,
        };
        let agg = aggregate_seeds(&[m(Some(100)), m(Some(200)), m(None)]).unwrap();
        assert_eq!(agg.t_rec_mean, Some(150.0));
        assert!((agg.recovery_rate - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(agg.n_recovered, 2);
    }

    #[test]
    fn aggregate_of_all_recovered() {
        let m = RecoveryMetrics {
            r_clean: 1.0,
            t_rec: Some(100),
            recovered: true,
            final_return: 0.9,
            corrupt_excursion: 0.1,
        };
        let agg = aggregate_seeds(&[m.clone(), m.clone(), m]).unwrap();
        assert_eq!(agg.t_rec_mean, Some(100.0));
        assert_eq!(agg.recovery_rate, 1.0);
    }

    #[test]
    fn aggregate_of_nothing_is_an_error() {
        assert!(aggregate_seeds(&[]).is_err());
    }
}

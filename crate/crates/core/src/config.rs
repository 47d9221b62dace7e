//! Experiment configuration: a single strictly-validated TOML format.
//!
//! Parsing happens in two layers. The raw layer mirrors the file exactly,
//! rejects unknown keys, and leaves everything optional; materialization then
//! fills kind-specific defaults so the resulting [`ExperimentConfig`] has
//! every value explicit. Emitting a materialized config and parsing it back
//! is a fixed point, which keeps the config echo in experiment outputs
//! authoritative.

use crate::env::{
    BanditEnv, BiasMode, CorruptionConfig, CorruptionKind, EnvSpec, EpisodicTaskEnv, QuadraticEnv,
    RegressionEnv,
};
use crate::error::{MtrError, Result};
use crate::learners::{LearnerConfig, LearnerKind};
use crate::schedule::{Phase, Regime, RegimeSchedule};
use crate::trust::TrustConfig;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Prop1,
    Identifiability,
    Sweep,
    RecoveryRl,
    RecoverySupervised,
    Bandit,
}

impl ExperimentKind {
    pub fn label(self) -> &'static str {
        match self {
            ExperimentKind::Prop1 => "prop1",
            ExperimentKind::Identifiability => "identifiability",
            ExperimentKind::Sweep => "sweep",
            ExperimentKind::RecoveryRl => "recovery-rl",
            ExperimentKind::RecoverySupervised => "recovery-supervised",
            ExperimentKind::Bandit => "bandit",
        }
    }
}

/// Runtime schedule description; `build` turns it into concrete segments.
#[derive(Debug, Clone, PartialEq)]
pub enum ScheduleSpec {
    Staged {
        clean_len: usize,
        corrupt_len: usize,
        recovery_len: usize,
    },
    Alternating {
        warmup: usize,
        segment_len: usize,
        pairs: usize,
    },
    Single {
        total: usize,
        rho: u8,
        phase: Phase,
    },
    Onset {
        total: usize,
        onset_at: usize,
    },
}

impl ScheduleSpec {
    pub fn staged_even(phase_len: usize) -> ScheduleSpec {
        ScheduleSpec::Staged {
            clean_len: phase_len,
            corrupt_len: phase_len,
            recovery_len: phase_len,
        }
    }

    pub fn build(&self) -> Result<RegimeSchedule> {
        match *self {
            ScheduleSpec::Staged {
                clean_len,
                corrupt_len,
                recovery_len,
            } => RegimeSchedule::from_parts(&[
                (clean_len, Regime::Reliable, Phase::Clean),
                (corrupt_len, Regime::Unreliable, Phase::Corrupt),
                (recovery_len, Regime::Reliable, Phase::Recovery),
            ]),
            ScheduleSpec::Alternating {
                warmup,
                segment_len,
                pairs,
            } => RegimeSchedule::alternating(warmup, segment_len, pairs),
            ScheduleSpec::Single { total, rho, phase } => {
                RegimeSchedule::single(total, Regime::from_u8(rho)?, phase)
            }
            ScheduleSpec::Onset { total, onset_at } => RegimeSchedule::onset(total, onset_at),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalSettings {
    /// Evaluate performance every this many steps.
    pub eval_every: usize,
    /// Trailing moving average over this many evaluations.
    pub smoothing_window: usize,
}

impl EvalSettings {
    fn validate(&self) -> Result<()> {
        if self.eval_every == 0 || self.smoothing_window == 0 {
            return Err(MtrError::validation(
                "eval_every and smoothing_window must be >= 1",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionSettings {
    /// Drift strengths of the sweep, ascending.
    pub drifts: Vec<f64>,
    /// Sample counts at which the estimation error is reported.
    pub checkpoints: Vec<usize>,
    pub fig1a_total: usize,
    pub fig1a_onset: usize,
    pub fig1a_drift: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seeds: Vec<u64>,
    pub out_dir: String,
    pub schedule: ScheduleSpec,
    /// Segments must persist at least this multiple of the largest monitor
    /// window; 0 disables the check.
    pub min_persistence_factor: f64,
    pub env: EnvSpec,
    pub corruption: Option<CorruptionConfig>,
    pub learners: Vec<LearnerConfig>,
    pub evaluation: EvalSettings,
    pub detection: DetectionSettings,
}

impl ExperimentConfig {
    /// The fully-materialized default configuration of a kind.
    pub fn default_for(kind: ExperimentKind) -> ExperimentConfig {
        materialize(RawConfig {
            kind,
            ..RawConfig::empty(kind)
        })
        .expect("kind defaults must materialize")
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(MtrError::validation("experiment needs at least one seed"));
        }
        if self.learners.is_empty() {
            return Err(MtrError::validation(
                "experiment needs at least one learner",
            ));
        }
        for learner in &self.learners {
            learner.validate()?;
        }
        // detection scores use the gradient norm as a stand-in for the
        // squared one-step increment, a strictly increasing transform only
        // when the learning rate is constant
        if matches!(
            self.kind,
            ExperimentKind::Identifiability | ExperimentKind::Sweep
        ) && self.learners[0].kind.is_trust()
        {
            return Err(MtrError::validation(
                "detection experiments need an unmodulated learner in the first slot",
            ));
        }
        match &self.env {
            EnvSpec::Quadratic(e) => e.validate()?,
            EnvSpec::Regression(e) => e.validate()?,
            EnvSpec::Bandit(e) => e.validate()?,
            EnvSpec::Episodic(e) => e.validate()?,
        }
        if let Some(c) = &self.corruption {
            c.validate()?;
        }
        self.evaluation.validate()?;
        let schedule = self.schedule.build()?;
        if self.min_persistence_factor > 0.0 {
            let max_window = self.learners.iter().map(|l| l.window).max().unwrap_or(1);
            let min_len = (self.min_persistence_factor * max_window as f64).ceil() as usize;
            schedule.check_min_persistence(min_len)?;
        }
        if self.detection.drifts.windows(2).any(|w| w[0] > w[1]) {
            return Err(MtrError::validation("detection drifts must be ascending"));
        }
        if self.detection.checkpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(MtrError::validation(
                "detection checkpoints must be strictly ascending",
            ));
        }
        if self.detection.fig1a_onset == 0
            || self.detection.fig1a_onset >= self.detection.fig1a_total
        {
            return Err(MtrError::validation(format!(
                "drift onset must lie strictly inside the estimation run, got {} of {}",
                self.detection.fig1a_onset, self.detection.fig1a_total
            )));
        }
        Ok(())
    }
}

/// Parse and materialize a config file.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text =
        std::fs::read_to_string(path).map_err(|e| MtrError::io(path.display().to_string(), e))?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<ExperimentConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| MtrError::ConfigParse(e.to_string()))?;
    let cfg = materialize(raw)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Emit a materialized config as TOML. Every default is written explicitly.
pub fn emit_config(cfg: &ExperimentConfig) -> String {
    let raw = to_raw(cfg);
    toml::to_string_pretty(&raw).expect("materialized config serializes")
}

// ---------------------------------------------------------------------------
// raw layer

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    kind: ExperimentKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    seeds: Option<Vec<u64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    out_dir: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    schedule: Option<RawSchedule>,
    #[serde(skip_serializing_if = "Option::is_none")]
    env: Option<RawEnv>,
    #[serde(skip_serializing_if = "Option::is_none")]
    corruption: Option<CorruptionConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    learners: Option<Vec<RawLearner>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    evaluation: Option<RawEvaluation>,
    #[serde(skip_serializing_if = "Option::is_none")]
    detection: Option<RawDetection>,
}

impl RawConfig {
    fn empty(kind: ExperimentKind) -> RawConfig {
        RawConfig {
            kind,
            seeds: None,
            out_dir: None,
            schedule: None,
            env: None,
            corruption: None,
            learners: None,
            evaluation: None,
            detection: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum RawScheduleKind {
    Staged,
    Alternating,
    Single,
    Onset,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSchedule {
    kind: RawScheduleKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    phase_len: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    clean_len: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    corrupt_len: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    recovery_len: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    warmup: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    segment_len: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pairs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    total: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rho: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    phase: Option<Phase>,
    #[serde(skip_serializing_if = "Option::is_none")]
    onset_at: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    min_persistence_factor: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEnv {
    #[serde(skip_serializing_if = "Option::is_none")]
    quadratic: Option<RawQuadratic>,
    #[serde(skip_serializing_if = "Option::is_none")]
    regression: Option<RawRegression>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bandit: Option<RawBandit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    episodic: Option<RawEpisodic>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawQuadratic {
    #[serde(skip_serializing_if = "Option::is_none")]
    theta_star: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bias: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    noise_sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bias_always_on: Option<bool>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRegression {
    #[serde(skip_serializing_if = "Option::is_none")]
    dim: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    true_weights: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    label_noise: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    drift_strength: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bias_mode: Option<BiasMode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    trigger_class: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    class_sep: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    trigger_magnitude: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBandit {
    #[serde(skip_serializing_if = "Option::is_none")]
    hazard_stable: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    hazard_volatile: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    reward_p_good: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    reward_p_bad: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEpisodic {
    #[serde(skip_serializing_if = "Option::is_none")]
    n_states: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    slip: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    step_penalty: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    goal_reward: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    wall_penalty: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    horizon: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLearner {
    kind: LearnerKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    eta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    calibration_skip: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    momentum: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    window: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    epsilon_greedy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    trust: Option<RawTrust>,
    #[serde(skip_serializing_if = "Option::is_none")]
    s_ref: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTrust {
    #[serde(skip_serializing_if = "Option::is_none")]
    beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tau_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tau_init: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEvaluation {
    #[serde(skip_serializing_if = "Option::is_none")]
    eval_every: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    smoothing_window: Option<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDetection {
    #[serde(skip_serializing_if = "Option::is_none")]
    drifts: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    checkpoints: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    fig1a_total: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    fig1a_onset: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    fig1a_drift: Option<f64>,
}

// ---------------------------------------------------------------------------
// defaults and materialization

const DEFAULT_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
const DEFAULT_WINDOW: usize = 50;

fn default_schedule(kind: ExperimentKind) -> ScheduleSpec {
    match kind {
        ExperimentKind::Prop1 => ScheduleSpec::staged_even(2000),
        ExperimentKind::Identifiability | ExperimentKind::Sweep => ScheduleSpec::Alternating {
            warmup: 300,
            segment_len: 400,
            pairs: 7,
        },
        ExperimentKind::RecoveryRl => ScheduleSpec::Staged {
            clean_len: 800,
            corrupt_len: 1200,
            recovery_len: 200,
        },
        ExperimentKind::RecoverySupervised => ScheduleSpec::staged_even(2000),
        ExperimentKind::Bandit => ScheduleSpec::Alternating {
            warmup: 1000,
            segment_len: 1000,
            pairs: 2,
        },
    }
}

fn default_env(kind: ExperimentKind) -> EnvSpec {
    match kind {
        ExperimentKind::Prop1 => EnvSpec::Quadratic(QuadraticEnv {
            theta_star: vec![0.0],
            bias: vec![0.5],
            noise_sigma: 0.1,
            bias_always_on: false,
        }),
        ExperimentKind::Identifiability | ExperimentKind::Sweep => {
            EnvSpec::Regression(RegressionEnv::label_shift(5, 1.0, 0.7).expect("default env"))
        }
        ExperimentKind::RecoveryRl => EnvSpec::Episodic(
            EpisodicTaskEnv::chain_with_wall(4, 0.2, 0.01, 1.0, 0.05, 5).expect("default env"),
        ),
        ExperimentKind::RecoverySupervised => {
            EnvSpec::Regression(RegressionEnv::class_trigger(5, 1.0, 1, 0.05).expect("default env"))
        }
        ExperimentKind::Bandit => {
            EnvSpec::Bandit(BanditEnv::new(0.01, 0.2, 0.8, 0.2).expect("default env"))
        }
    }
}

fn default_eta(kind: ExperimentKind) -> f64 {
    match kind {
        ExperimentKind::Prop1 => 0.1,
        ExperimentKind::Identifiability | ExperimentKind::Sweep => 0.02,
        ExperimentKind::RecoveryRl => 0.3,
        ExperimentKind::RecoverySupervised => 0.05,
        ExperimentKind::Bandit => 0.1,
    }
}

/// Monitor window, trust hyperparameters, and calibration skip per kind.
/// The policy-gradient recovery protocol runs a faster trust loop: a shorter
/// window and the maximum EMA rate so trust reacts before corruption has
/// destroyed the policy, a sharper target, a deeper floor, and calibration
/// taken from the converged tail of the clean phase.
fn default_monitor(kind: ExperimentKind) -> (usize, TrustConfig, usize) {
    match kind {
        ExperimentKind::RecoveryRl => (
            25,
            TrustConfig {
                beta: 0.05,
                lambda: 4.0,
                tau_min: 0.02,
                epsilon: 1e-8,
                tau_init: 1.0,
            },
            600,
        ),
        _ => (DEFAULT_WINDOW, TrustConfig::default(), 0),
    }
}

fn default_learners(kind: ExperimentKind) -> Vec<RawLearner> {
    let eta = default_eta(kind);
    let pair = |base: LearnerKind, trusted: LearnerKind| {
        vec![
            RawLearner {
                kind: base,
                eta: Some(eta),
                calibration_skip: None,
                momentum: None,
                window: None,
                epsilon_greedy: None,
                trust: None,
                s_ref: None,
            },
            RawLearner {
                kind: trusted,
                eta: Some(eta),
                calibration_skip: None,
                momentum: None,
                window: None,
                epsilon_greedy: None,
                trust: None,
                s_ref: None,
            },
        ]
    };
    match kind {
        ExperimentKind::Prop1 | ExperimentKind::RecoverySupervised => {
            pair(LearnerKind::BaselineGd, LearnerKind::TrustGd)
        }
        ExperimentKind::Identifiability | ExperimentKind::Sweep => vec![RawLearner {
            kind: LearnerKind::BaselineGd,
            eta: Some(eta),
            calibration_skip: None,
            momentum: None,
            window: None,
            epsilon_greedy: None,
            trust: None,
            s_ref: None,
        }],
        ExperimentKind::RecoveryRl => pair(
            LearnerKind::PolicyGradient,
            LearnerKind::TrustPolicyGradient,
        ),
        ExperimentKind::Bandit => pair(LearnerKind::BanditQ, LearnerKind::TrustBanditQ),
    }
}

fn default_corruption(kind: ExperimentKind) -> Option<CorruptionConfig> {
    match kind {
        ExperimentKind::RecoveryRl => Some(CorruptionConfig {
            kind: CorruptionKind::AdvantageSignFlip,
            probability: 0.7,
            noise_scale: 0.0,
        }),
        _ => None,
    }
}

fn materialize(raw: RawConfig) -> Result<ExperimentConfig> {
    let kind = raw.kind;
    let seeds = raw.seeds.unwrap_or_else(|| DEFAULT_SEEDS.to_vec());
    let out_dir = raw
        .out_dir
        .unwrap_or_else(|| format!("out/{}", kind.label()));

    let (schedule, min_persistence_factor) = match raw.schedule {
        None => (default_schedule(kind), 4.0),
        Some(rs) => materialize_schedule(rs)?,
    };
    let env = match raw.env {
        None => default_env(kind),
        Some(re) => materialize_env(re, kind)?,
    };
    let corruption = match raw.corruption {
        None => default_corruption(kind),
        Some(c) => Some(c),
    };
    let learners = raw
        .learners
        .unwrap_or_else(|| default_learners(kind))
        .into_iter()
        .map(|l| materialize_learner(l, kind))
        .collect::<Result<Vec<_>>>()?;
    let evaluation = {
        let re = raw.evaluation.unwrap_or_default();
        EvalSettings {
            eval_every: re.eval_every.unwrap_or(20),
            smoothing_window: re.smoothing_window.unwrap_or(5),
        }
    };
    let detection = {
        let rd = raw.detection.unwrap_or_default();
        DetectionSettings {
            drifts: rd
                .drifts
                .unwrap_or_else(|| (0..=10).map(|i| i as f64 * 0.1).collect()),
            checkpoints: rd
                .checkpoints
                .unwrap_or_else(|| vec![100, 250, 500, 1000, 2000, 3500, 5000]),
            fig1a_total: rd.fig1a_total.unwrap_or(5000),
            fig1a_onset: rd.fig1a_onset.unwrap_or(500),
            fig1a_drift: rd.fig1a_drift.unwrap_or(0.5),
        }
    };
    Ok(ExperimentConfig {
        kind,
        seeds,
        out_dir,
        schedule,
        min_persistence_factor,
        env,
        corruption,
        learners,
        evaluation,
        detection,
    })
}

fn materialize_schedule(rs: RawSchedule) -> Result<(ScheduleSpec, f64)> {
    let factor = rs.min_persistence_factor.unwrap_or(4.0);
    let reject = |field: &str, kind: &str| {
        MtrError::validation(format!(
            "schedule field {field} does not apply to the {kind} schedule"
        ))
    };
    let spec = match rs.kind {
        RawScheduleKind::Staged => {
            for (name, set) in [
                ("warmup", rs.warmup.is_some()),
                ("segment_len", rs.segment_len.is_some()),
                ("pairs", rs.pairs.is_some()),
                ("total", rs.total.is_some()),
                ("rho", rs.rho.is_some()),
                ("phase", rs.phase.is_some()),
                ("onset_at", rs.onset_at.is_some()),
            ] {
                if set {
                    return Err(reject(name, "staged"));
                }
            }
            let phase_len = rs.phase_len.unwrap_or(2000);
            ScheduleSpec::Staged {
                clean_len: rs.clean_len.unwrap_or(phase_len),
                corrupt_len: rs.corrupt_len.unwrap_or(phase_len),
                recovery_len: rs.recovery_len.unwrap_or(phase_len),
            }
        }
        RawScheduleKind::Alternating => {
            for (name, set) in [
                ("phase_len", rs.phase_len.is_some()),
                ("clean_len", rs.clean_len.is_some()),
                ("corrupt_len", rs.corrupt_len.is_some()),
                ("recovery_len", rs.recovery_len.is_some()),
                ("total", rs.total.is_some()),
                ("rho", rs.rho.is_some()),
                ("phase", rs.phase.is_some()),
                ("onset_at", rs.onset_at.is_some()),
            ] {
                if set {
                    return Err(reject(name, "alternating"));
                }
            }
            ScheduleSpec::Alternating {
                warmup: rs.warmup.unwrap_or(300),
                segment_len: rs.segment_len.unwrap_or(400),
                pairs: rs.pairs.unwrap_or(7),
            }
        }
        RawScheduleKind::Single => {
            for (name, set) in [
                ("phase_len", rs.phase_len.is_some()),
                ("clean_len", rs.clean_len.is_some()),
                ("corrupt_len", rs.corrupt_len.is_some()),
                ("recovery_len", rs.recovery_len.is_some()),
                ("warmup", rs.warmup.is_some()),
                ("segment_len", rs.segment_len.is_some()),
                ("pairs", rs.pairs.is_some()),
                ("onset_at", rs.onset_at.is_some()),
            ] {
                if set {
                    return Err(reject(name, "single"));
                }
            }
            ScheduleSpec::Single {
                total: rs.total.unwrap_or(2000),
                rho: rs.rho.unwrap_or(0),
                phase: rs.phase.unwrap_or(Phase::Clean),
            }
        }
        RawScheduleKind::Onset => {
            for (name, set) in [
                ("phase_len", rs.phase_len.is_some()),
                ("clean_len", rs.clean_len.is_some()),
                ("corrupt_len", rs.corrupt_len.is_some()),
                ("recovery_len", rs.recovery_len.is_some()),
                ("warmup", rs.warmup.is_some()),
                ("segment_len", rs.segment_len.is_some()),
                ("pairs", rs.pairs.is_some()),
                ("rho", rs.rho.is_some()),
                ("phase", rs.phase.is_some()),
            ] {
                if set {
                    return Err(reject(name, "onset"));
                }
            }
            ScheduleSpec::Onset {
                total: rs.total.unwrap_or(5000),
                onset_at: rs.onset_at.unwrap_or(500),
            }
        }
    };
    Ok((spec, factor))
}

fn materialize_env(re: RawEnv, kind: ExperimentKind) -> Result<EnvSpec> {
    let set = [
        re.quadratic.is_some(),
        re.regression.is_some(),
        re.bandit.is_some(),
        re.episodic.is_some(),
    ]
    .iter()
    .filter(|&&b| b)
    .count();
    if set != 1 {
        return Err(MtrError::validation(format!(
            "the [env] table must contain exactly one environment, found {set}"
        )));
    }
    if let Some(q) = re.quadratic {
        let theta_star = q.theta_star.unwrap_or_else(|| vec![0.0]);
        let dim = theta_star.len();
        return Ok(EnvSpec::Quadratic(QuadraticEnv {
            theta_star,
            bias: q.bias.unwrap_or_else(|| vec![0.5; dim]),
            noise_sigma: q.noise_sigma.unwrap_or(0.1),
            bias_always_on: q.bias_always_on.unwrap_or(false),
        }));
    }
    if let Some(r) = re.regression {
        let dim = r.dim.unwrap_or(5);
        let bias_mode = r.bias_mode.unwrap_or(match kind {
            ExperimentKind::RecoverySupervised => BiasMode::ClassTrigger,
            _ => BiasMode::LabelShift,
        });
        let default_weights = {
            let v = 1.0 / (dim as f64).sqrt();
            vec![v; dim]
        };
        return Ok(EnvSpec::Regression(RegressionEnv {
            dim,
            true_weights: r.true_weights.unwrap_or(default_weights),
            label_noise: r.label_noise.unwrap_or(1.0),
            drift_strength: r.drift_strength.unwrap_or(0.7),
            bias_mode,
            trigger_class: r.trigger_class.unwrap_or(1),
            class_sep: r.class_sep.unwrap_or(1.0),
            trigger_magnitude: r.trigger_magnitude.unwrap_or(
                if bias_mode == BiasMode::ClassTrigger {
                    0.05
                } else {
                    0.0
                },
            ),
        }));
    }
    if let Some(b) = re.bandit {
        let hs = b.hazard_stable.unwrap_or(0.01);
        let hv = b.hazard_volatile.unwrap_or(0.2);
        let p_good = b.reward_p_good.unwrap_or(0.8);
        let p_bad = b.reward_p_bad.unwrap_or(0.2);
        // equal hazards are the no-contrast control
        let env = if hs == hv {
            BanditEnv::equal_hazards(hs, p_good, p_bad)?
        } else {
            BanditEnv::new(hs, hv, p_good, p_bad)?
        };
        return Ok(EnvSpec::Bandit(env));
    }
    if let Some(e) = re.episodic {
        return Ok(EnvSpec::Episodic(EpisodicTaskEnv::chain_with_wall(
            e.n_states.unwrap_or(4),
            e.slip.unwrap_or(0.2),
            e.step_penalty.unwrap_or(0.01),
            e.goal_reward.unwrap_or(1.0),
            e.wall_penalty.unwrap_or(0.1),
            e.horizon.unwrap_or(5),
        )?));
    }
    unreachable!()
}

fn materialize_learner(raw: RawLearner, kind: ExperimentKind) -> Result<LearnerConfig> {
    let (default_window, trust_defaults, default_skip) = default_monitor(kind);
    let rt = raw.trust.unwrap_or_default();
    let trust = TrustConfig {
        beta: rt.beta.unwrap_or(trust_defaults.beta),
        lambda: rt.lambda.unwrap_or(trust_defaults.lambda),
        tau_min: rt.tau_min.unwrap_or(trust_defaults.tau_min),
        epsilon: rt.epsilon.unwrap_or(trust_defaults.epsilon),
        tau_init: rt.tau_init.unwrap_or(trust_defaults.tau_init),
    };
    Ok(LearnerConfig {
        kind: raw.kind,
        eta: raw.eta.unwrap_or_else(|| default_eta(kind)),
        calibration_skip: raw.calibration_skip.unwrap_or(default_skip),
        momentum: raw
            .momentum
            .unwrap_or(if raw.kind == LearnerKind::MomentumGd {
                0.9
            } else {
                0.0
            }),
        window: raw.window.unwrap_or(default_window),
        epsilon_greedy: raw.epsilon_greedy.unwrap_or(0.1),
        trust,
        s_ref_override: raw.s_ref,
    })
}

// ---------------------------------------------------------------------------
// emission back to the raw layer

fn to_raw(cfg: &ExperimentConfig) -> RawConfig {
    let schedule = match cfg.schedule {
        ScheduleSpec::Staged {
            clean_len,
            corrupt_len,
            recovery_len,
        } => RawSchedule {
            kind: RawScheduleKind::Staged,
            phase_len: None,
            clean_len: Some(clean_len),
            corrupt_len: Some(corrupt_len),
            recovery_len: Some(recovery_len),
            warmup: None,
            segment_len: None,
            pairs: None,
            total: None,
            rho: None,
            phase: None,
            onset_at: None,
            min_persistence_factor: Some(cfg.min_persistence_factor),
        },
        ScheduleSpec::Alternating {
            warmup,
            segment_len,
            pairs,
        } => RawSchedule {
            kind: RawScheduleKind::Alternating,
            phase_len: None,
            clean_len: None,
            corrupt_len: None,
            recovery_len: None,
            warmup: Some(warmup),
            segment_len: Some(segment_len),
            pairs: Some(pairs),
            total: None,
            rho: None,
            phase: None,
            onset_at: None,
            min_persistence_factor: Some(cfg.min_persistence_factor),
        },
        ScheduleSpec::Single { total, rho, phase } => RawSchedule {
            kind: RawScheduleKind::Single,
            phase_len: None,
            clean_len: None,
            corrupt_len: None,
            recovery_len: None,
            warmup: None,
            segment_len: None,
            pairs: None,
            total: Some(total),
            rho: Some(rho),
            phase: Some(phase),
            onset_at: None,
            min_persistence_factor: Some(cfg.min_persistence_factor),
        },
        ScheduleSpec::Onset { total, onset_at } => RawSchedule {
            kind: RawScheduleKind::Onset,
            phase_len: None,
            clean_len: None,
            corrupt_len: None,
            recovery_len: None,
            warmup: None,
            segment_len: None,
            pairs: None,
            total: Some(total),
            rho: None,
            phase: None,
            onset_at: Some(onset_at),
            min_persistence_factor: Some(cfg.min_persistence_factor),
        },
    };
    let env = match &cfg.env {
        EnvSpec::Quadratic(q) => RawEnv {
            quadratic: Some(RawQuadratic {
                theta_star: Some(q.theta_star.clone()),
                bias: Some(q.bias.clone()),
                noise_sigma: Some(q.noise_sigma),
                bias_always_on: Some(q.bias_always_on),
            }),
            ..RawEnv::default()
        },
        EnvSpec::Regression(r) => RawEnv {
            regression: Some(RawRegression {
                dim: Some(r.dim),
                true_weights: Some(r.true_weights.clone()),
                label_noise: Some(r.label_noise),
                drift_strength: Some(r.drift_strength),
                bias_mode: Some(r.bias_mode),
                trigger_class: Some(r.trigger_class),
                class_sep: Some(r.class_sep),
                trigger_magnitude: Some(r.trigger_magnitude),
            }),
            ..RawEnv::default()
        },
        EnvSpec::Bandit(b) => RawEnv {
            bandit: Some(RawBandit {
                hazard_stable: Some(b.hazard_stable),
                hazard_volatile: Some(b.hazard_volatile),
                reward_p_good: Some(b.reward_p_good),
                reward_p_bad: Some(b.reward_p_bad),
            }),
            ..RawEnv::default()
        },
        EnvSpec::Episodic(e) => {
            // the chain constructor is the only config-expressible task
            let p = e
                .chain_params
                .expect("config-built episodic tasks come from the chain constructor");
            RawEnv {
                episodic: Some(RawEpisodic {
                    n_states: Some(e.n_states),
                    slip: Some(p.slip),
                    step_penalty: Some(p.step_penalty),
                    goal_reward: Some(p.goal_reward),
                    wall_penalty: Some(p.wall_penalty),
                    horizon: Some(e.horizon),
                }),
                ..RawEnv::default()
            }
        }
    };
    RawConfig {
        kind: cfg.kind,
        seeds: Some(cfg.seeds.clone()),
        out_dir: Some(cfg.out_dir.clone()),
        schedule: Some(schedule),
        env: Some(env),
        corruption: cfg.corruption,
        learners: Some(
            cfg.learners
                .iter()
                .map(|l| RawLearner {
                    kind: l.kind,
                    eta: Some(l.eta),
                    calibration_skip: Some(l.calibration_skip),
                    momentum: Some(l.momentum),
                    window: Some(l.window),
                    epsilon_greedy: Some(l.epsilon_greedy),
                    trust: Some(RawTrust {
                        beta: Some(l.trust.beta),
                        lambda: Some(l.trust.lambda),
                        tau_min: Some(l.trust.tau_min),
                        epsilon: Some(l.trust.epsilon),
                        tau_init: Some(l.trust.tau_init),
                    }),
                    s_ref: l.s_ref_override,
                })
                .collect(),
        ),
        evaluation: Some(RawEvaluation {
            eval_every: Some(cfg.evaluation.eval_every),
            smoothing_window: Some(cfg.evaluation.smoothing_window),
        }),
        detection: Some(RawDetection {
            drifts: Some(cfg.detection.drifts.clone()),
            checkpoints: Some(cfg.detection.checkpoints.clone()),
            fig1a_total: Some(cfg.detection.fig1a_total),
            fig1a_onset: Some(cfg.detection.fig1a_onset),
            fig1a_drift: Some(cfg.detection.fig1a_drift),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_prop1_fills_documented_defaults() {
        let cfg = parse_config_str("kind = \"prop1\"\n").unwrap();
        assert_eq!(cfg.kind, ExperimentKind::Prop1);
        assert_eq!(cfg.seeds, vec![0, 1, 2, 3, 4]);
        assert_eq!(cfg.schedule, ScheduleSpec::staged_even(2000));
        match &cfg.env {
            EnvSpec::Quadratic(q) => {
                assert_eq!(q.theta_star, vec![0.0]);
                assert_eq!(q.bias, vec![0.5]);
            }
            other => panic!("unexpected env {other:?}"),
        }
        let trusted = cfg
            .learners
            .iter()
            .find(|l| l.kind == LearnerKind::TrustGd)
            .expect("default trust learner");
        assert_eq!(trusted.eta, 0.1);
        assert_eq!(trusted.window, 50);
        assert_eq!(trusted.trust.beta, 0.01);
        assert_eq!(trusted.trust.lambda, 2.0);
        assert_eq!(trusted.trust.tau_min, 0.05);
    }

    #[test]
    fn out_of_range_probability_names_bounds() {
        let text = "kind = \"recovery-rl\"\n[corruption]\nkind = \"advantage-sign-flip\"\nprobability = 1.5\n";
        let err = parse_config_str(text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[0, 1]"), "message: {msg}");
    }

    #[test]
    fn unknown_key_is_named() {
        let text = "kind = \"prop1\"\n[[learners]]\nkind = \"momentum-gd\"\nmoementum = 0.9\n";
        let err = parse_config_str(text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("moementum"), "message: {msg}");
    }

    #[test]
    fn parse_emit_parse_is_a_fixed_point_for_defaults() {
        for kind in [
            ExperimentKind::Prop1,
            ExperimentKind::Identifiability,
            ExperimentKind::Sweep,
            ExperimentKind::RecoveryRl,
            ExperimentKind::RecoverySupervised,
            ExperimentKind::Bandit,
        ] {
            let cfg = ExperimentConfig::default_for(kind);
            let emitted = emit_config(&cfg);
            let reparsed = parse_config_str(&emitted).unwrap();
            assert_eq!(cfg, reparsed, "kind {kind:?}");
            let emitted_again = emit_config(&reparsed);
            assert_eq!(emitted, emitted_again);
        }
    }

    #[test]
    fn schedule_field_mismatch_rejected() {
        let text = "kind = \"prop1\"\n[schedule]\nkind = \"staged\"\nonset_at = 10\n";
        assert!(parse_config_str(text).is_err());
    }

    #[test]
    fn detection_kinds_reject_trust_learner_scoring() {
        let text = "kind = \"sweep\"\n[[learners]]\nkind = \"trust-gd\"\n";
        assert!(parse_config_str(text).is_err());
    }

    #[test]
    fn equal_hazard_bandit_config_accepted() {
        let text =
            "kind = \"bandit\"\n[env.bandit]\nhazard_stable = 0.01\nhazard_volatile = 0.01\n";
        let cfg = parse_config_str(text).unwrap();
        match cfg.env {
            EnvSpec::Bandit(ref b) => assert_eq!(b.hazard_stable, b.hazard_volatile),
            _ => panic!(),
        }
    }
}

//! The per-run loop: drive one learner against one environment through a
//! reliability schedule, producing a full per-step record.
//!
//! Runs are deterministic in `(config, seed)`. Corruption, when configured,
//! fires only inside unreliable segments. A divergence guard aborts the run
//! (recording the step and reason) instead of letting non-finite values
//! poison aggregate metrics; aborted runs keep their partial record.

use crate::env::{
    corrupt_gradient, episodic_rollout, BanditEnv, BlockKind, CorruptionConfig, EnvSpec,
    EpisodicTaskEnv, QuadraticEnv, RegressionEnv, Target,
};
use crate::error::{MtrError, Result};
use crate::learners::{
    bandit_value_step, baseline_step, policy, trust_step, GdState, LearnerConfig, LearnerKind,
    StepInfo, TrustController,
};
use crate::monitor;
use crate::record::{RunAbort, RunRecord};
use crate::rng::{streams, RngStream};
use crate::schedule::{Regime, RegimeSchedule};
use crate::stats;

const DIVERGENCE_NORM: f64 = 1e6;
/// EMA rate of the policy-gradient return baseline.
const RETURN_BASELINE_RATE: f64 = 0.05;
/// Per-cell bound on policy logits. Keeps the softmax from saturating so far
/// that no sampled action carries usable credit either way.
const LOGIT_CLAMP: f64 = 4.0;

/// Execute one learning run and return its record.
pub fn run_learner(
    env: &EnvSpec,
    config: &LearnerConfig,
    schedule: &RegimeSchedule,
    corruption: Option<&CorruptionConfig>,
    seed: u64,
) -> Result<RunRecord> {
    config.validate()?;
    if let Some(cfg) = corruption {
        cfg.validate()?;
    }
    match (env, config.kind) {
        (
            EnvSpec::Quadratic(_) | EnvSpec::Regression(_),
            LearnerKind::BaselineGd | LearnerKind::MomentumGd | LearnerKind::TrustGd,
        ) => run_gd(env, config, schedule, corruption, seed),
        (EnvSpec::Bandit(b), LearnerKind::BanditQ | LearnerKind::TrustBanditQ) => {
            run_bandit(b, config, schedule, seed)
        }
        (EnvSpec::Episodic(e), LearnerKind::PolicyGradient | LearnerKind::TrustPolicyGradient) => {
            run_policy_gradient(e, config, schedule, corruption, seed)
        }
        (env, kind) => Err(MtrError::validation(format!(
            "learner {} cannot run on the {} environment",
            kind.label(),
            env.name()
        ))),
    }
}

fn make_trust(config: &LearnerConfig) -> Result<Option<TrustController>> {
    if config.kind.is_trust() {
        Ok(Some(TrustController::new(
            config.trust,
            config.window,
            config.s_ref_override,
            config.calibration_skip,
        )?))
    } else {
        Ok(None)
    }
}

/// Per-step feedback produced by a gradient environment.
struct GdFeedback {
    gradient: Vec<f64>,
    loss: f64,
    /// Reward channel recorded for the step (pre-update where the task is a
    /// prediction, negative error otherwise).
    pre_reward: Option<f64>,
}

fn run_gd(
    env: &EnvSpec,
    config: &LearnerConfig,
    schedule: &RegimeSchedule,
    corruption: Option<&CorruptionConfig>,
    seed: u64,
) -> Result<RunRecord> {
    let mut rng_env = RngStream::new(seed, streams::ENV);
    let mut rng_corrupt = RngStream::new(seed, streams::CORRUPTION);
    let init = match env {
        EnvSpec::Quadratic(q) => vec![0.0; q.dim()],
        EnvSpec::Regression(r) => vec![0.0; r.dim],
        _ => unreachable!(),
    };
    let mut state = GdState::new(init, config.window, config.momentum, make_trust(config)?)?;
    let total = schedule.total_steps();
    let mut record = RunRecord::with_capacity(total);

    for step in 0..total {
        let (regime, phase) = schedule.phase_of(step)?;
        let feedback = match env {
            EnvSpec::Quadratic(q) => quadratic_feedback(q, &state.theta, regime, &mut rng_env),
            EnvSpec::Regression(r) => regression_feedback(r, &state.theta, regime, &mut rng_env),
            _ => unreachable!(),
        }
        .map_err(|e| e.at_step(step))?;
        let gradient = match (regime, corruption) {
            (Regime::Unreliable, Some(cfg)) => {
                corrupt_gradient(&feedback.gradient, cfg, &mut rng_corrupt)
            }
            _ => feedback.gradient.clone(),
        };

        let info: StepInfo = match config.kind {
            LearnerKind::TrustGd => trust_step(&mut state, &gradient, config.eta, feedback.loss),
            _ => baseline_step(&mut state, &gradient, config.eta, feedback.loss),
        }
        .map_err(|e| e.at_step(step))?;

        if stats::norm(&state.theta) > DIVERGENCE_NORM {
            record.abort = Some(RunAbort {
                step,
                reason: format!("parameter norm exceeded {DIVERGENCE_NORM:e}"),
            });
            break;
        }

        let error = match env {
            EnvSpec::Quadratic(q) => q.true_error(&state.theta),
            EnvSpec::Regression(r) => {
                let reference = r.reference_weights();
                let diff: Vec<f64> = state
                    .theta
                    .iter()
                    .zip(&reference)
                    .map(|(a, b)| a - b)
                    .collect();
                stats::norm(&diff)
            }
            _ => unreachable!(),
        };
        let reward = feedback.pre_reward.unwrap_or(-error);
        record.push_row(
            error,
            feedback.loss,
            info.grad_norm,
            info.instability,
            info.tau,
            regime.as_u8(),
            phase,
            reward,
        )?;
    }
    record.final_params = state.theta.clone();
    Ok(record)
}

fn quadratic_feedback(
    env: &QuadraticEnv,
    theta: &[f64],
    regime: Regime,
    rng: &mut RngStream,
) -> Result<GdFeedback> {
    let gradient = env.gradient(theta, regime, rng)?;
    Ok(GdFeedback {
        loss: env.observed_loss(theta, regime),
        gradient,
        pre_reward: None,
    })
}

fn regression_feedback(
    env: &RegressionEnv,
    weights: &[f64],
    regime: Regime,
    rng: &mut RngStream,
) -> Result<GdFeedback> {
    let (x, target) = env.sample(regime, rng);
    match target {
        Target::Value(y) => {
            let residual = stats::dot(weights, &x) - y;
            Ok(GdFeedback {
                gradient: x.iter().map(|xi| residual * xi).collect(),
                loss: 0.5 * residual * residual,
                pre_reward: None,
            })
        }
        Target::Class(c) => {
            let z = stats::dot(weights, &x);
            let p = 1.0 / (1.0 + (-z).exp());
            let y = c as f64;
            // clamped log loss; p can saturate at 0/1 in f64
            let loss = -(y * p.max(1e-12).ln() + (1.0 - y) * (1.0 - p).max(1e-12).ln());
            let correct = (z >= 0.0) == (c == 1);
            Ok(GdFeedback {
                gradient: x.iter().map(|xi| (p - y) * xi).collect(),
                loss,
                pre_reward: Some(f64::from(correct)),
            })
        }
    }
}

fn run_bandit(
    env: &BanditEnv,
    config: &LearnerConfig,
    schedule: &RegimeSchedule,
    seed: u64,
) -> Result<RunRecord> {
    let mut env = env.clone();
    let mut rng_env = RngStream::new(seed, streams::ENV);
    let mut rng_policy = RngStream::new(seed, streams::POLICY);
    let mut trust = make_trust(config)?;
    let mut buffer = crate::buffer::TrajectoryBuffer::new(config.window)?;
    let mut q = vec![vec![0.5; env.n_arms]; env.n_contexts];
    let total = schedule.total_steps();
    let mut record = RunRecord::with_capacity(total);

    for step in 0..total {
        let (regime, phase) = schedule.phase_of(step)?;
        let block = BlockKind::from_regime(regime);
        let context = env.draw_context(&mut rng_env);
        let arm = if rng_policy.bernoulli(config.epsilon_greedy) {
            rng_policy.index(env.n_arms)
        } else {
            argmax(&q[context])
        };
        let reward = env
            .step(context, arm, block, &mut rng_env)
            .map_err(|e| e.at_step(step))? as f64;
        let td = reward - q[context][arm];

        let instability = monitor::full_window_instability(&buffer);
        let tau = match &mut trust {
            Some(ctl) => ctl.observe(instability).map_err(|e| e.at_step(step))?,
            None => 1.0,
        };
        let alpha_eff = config.eta * tau;
        bandit_value_step(&mut q, context, arm, reward, alpha_eff).map_err(|e| e.at_step(step))?;
        let delta = alpha_eff * td;
        buffer
            .push_step(delta * delta, td * td, td.abs(), &[delta])
            .map_err(|e| e.at_step(step))?;

        // fraction of contexts whose greedy arm disagrees with the hidden best
        let wrong = (0..env.n_contexts)
            .filter(|&c| argmax(&q[c]) != env.true_best_arm(c))
            .count();
        let error = wrong as f64 / env.n_contexts as f64;
        record.push_row(
            error,
            td * td,
            td.abs(),
            instability,
            tau,
            regime.as_u8(),
            phase,
            reward,
        )?;
    }
    record.final_params = q.into_iter().flatten().collect();
    Ok(record)
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate().skip(1) {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

fn run_policy_gradient(
    env: &EpisodicTaskEnv,
    config: &LearnerConfig,
    schedule: &RegimeSchedule,
    corruption: Option<&CorruptionConfig>,
    seed: u64,
) -> Result<RunRecord> {
    env.validate()?;
    if Some(env.initial_state) == env.terminal_state {
        return Err(MtrError::validation(
            "episodic task must not start in its terminal state",
        ));
    }
    let mut rng_env = RngStream::new(seed, streams::ENV);
    let mut rng_corrupt = RngStream::new(seed, streams::CORRUPTION);
    let mut trust = make_trust(config)?;
    let mut buffer = crate::buffer::TrajectoryBuffer::new(config.window)?;
    let mut logits = vec![vec![0.0; env.n_actions]; env.n_states];
    let ceiling = env.optimal_return();
    let total = schedule.total_steps();
    let mut record = RunRecord::with_capacity(total);
    // running estimate of the episode return, the advantage baseline
    let mut return_baseline = 0.0;

    for episode in 0..total {
        let (regime, phase) = schedule.phase_of(episode)?;
        let rollout = episodic_rollout(
            env,
            &logits,
            return_baseline,
            config.epsilon_greedy,
            corruption,
            regime,
            &mut rng_env,
            &mut rng_corrupt,
        )
        .map_err(|e| e.at_step(episode))?;
        return_baseline += RETURN_BASELINE_RATE * (rollout.episode_return - return_baseline);
        let grad = policy::policy_gradient(env.n_states, env.n_actions, &logits, &rollout)
            .map_err(|e| e.at_step(episode))?;
        let grad_flat = policy::flatten(&grad);
        let grad_norm = stats::norm(&grad_flat);

        let instability = monitor::full_window_instability(&buffer);
        let tau = match &mut trust {
            Some(ctl) => ctl.observe(instability).map_err(|e| e.at_step(episode))?,
            None => 1.0,
        };
        let gain = config.eta * tau;
        let mut delta = Vec::with_capacity(grad_flat.len());
        for (row, grow) in logits.iter_mut().zip(&grad) {
            for (cell, g) in row.iter_mut().zip(grow) {
                let before = *cell;
                *cell = (*cell + gain * g).clamp(-LOGIT_CLAMP, LOGIT_CLAMP);
                delta.push(*cell - before);
            }
        }
        let inc_sq = stats::norm_sq(&delta);
        buffer
            .push_step(inc_sq, -rollout.episode_return, grad_norm, &delta)
            .map_err(|e| e.at_step(episode))?;

        if stats::norm(&policy::flatten(&logits)) > DIVERGENCE_NORM {
            record.abort = Some(RunAbort {
                step: episode,
                reason: format!("policy logits norm exceeded {DIVERGENCE_NORM:e}"),
            });
            break;
        }
        let error = (ceiling - rollout.episode_return).max(0.0);
        record.push_row(
            error,
            -rollout.episode_return,
            grad_norm,
            instability,
            tau,
            regime.as_u8(),
            phase,
            rollout.episode_return,
        )?;
    }
    record.final_params = policy::flatten(&logits);
    Ok(record)
}

//! Baseline and trust-modulated learners.
//!
//! Plain and momentum gradient descent, their trust-modulated variant, a
//! tabular value learner for the bandit task, and a tabular softmax
//! policy-gradient agent. Trust-modulated kinds run the full loop each step:
//! read the windowed instability statistic from the buffer, update the slow
//! trust variable, scale the base learning rate by it, then apply the update.

pub mod policy;
mod run;

pub use run::run_learner;

use crate::buffer::TrajectoryBuffer;
use crate::error::{MtrError, Result};
use crate::monitor;
use crate::stats;
use crate::trust::{calibrate_baseline, TrustConfig, TrustState};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LearnerKind {
    BaselineGd,
    MomentumGd,
    TrustGd,
    BanditQ,
    TrustBanditQ,
    PolicyGradient,
    TrustPolicyGradient,
}

impl LearnerKind {
    pub fn is_trust(self) -> bool {
        matches!(
            self,
            LearnerKind::TrustGd | LearnerKind::TrustBanditQ | LearnerKind::TrustPolicyGradient
        )
    }

    pub fn label(self) -> &'static str {
        match self {
            LearnerKind::BaselineGd => "baseline_gd",
            LearnerKind::MomentumGd => "momentum_gd",
            LearnerKind::TrustGd => "trust_gd",
            LearnerKind::BanditQ => "bandit_q",
            LearnerKind::TrustBanditQ => "trust_bandit_q",
            LearnerKind::PolicyGradient => "policy_gradient",
            LearnerKind::TrustPolicyGradient => "trust_policy_gradient",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnerConfig {
    pub kind: LearnerKind,
    /// Base learning rate (eta for descent, alpha for the bandit).
    pub eta: f64,
    pub momentum: f64,
    /// Monitor window for the instability statistic.
    pub window: usize,
    /// Exploration rate of the bandit kinds.
    pub epsilon_greedy: f64,
    pub trust: TrustConfig,
    /// Skip warm-start calibration and use this baseline directly.
    pub s_ref_override: Option<f64>,
    /// Discard this many initial full-window instability values before the
    /// calibration window opens. Lets calibration sit past an initial
    /// learning transient while still using assumed-clean data.
    pub calibration_skip: usize,
}

impl LearnerConfig {
    pub fn gd(kind: LearnerKind, eta: f64, window: usize) -> LearnerConfig {
        LearnerConfig {
            kind,
            eta,
            momentum: if kind == LearnerKind::MomentumGd {
                0.9
            } else {
                0.0
            },
            window,
            epsilon_greedy: 0.1,
            trust: TrustConfig::default(),
            s_ref_override: None,
            calibration_skip: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.eta <= 0.0 || !self.eta.is_finite() {
            return Err(MtrError::validation(format!(
                "learning rate must be > 0, got {}",
                self.eta
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(MtrError::validation(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.window == 0 {
            return Err(MtrError::validation("monitor window must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.epsilon_greedy) {
            return Err(MtrError::validation(format!(
                "epsilon_greedy must lie in [0, 1], got {}",
                self.epsilon_greedy
            )));
        }
        self.trust.validate()?;
        if self.kind.is_trust() && self.s_ref_override.is_none() && 2 * self.window < 10 {
            return Err(MtrError::validation(
                "trust calibration needs 2 * window >= 10 samples",
            ));
        }
        if let Some(s) = self.s_ref_override {
            if s <= 0.0 || !s.is_finite() {
                return Err(MtrError::validation(format!(
                    "s_ref override must be > 0, got {s}"
                )));
            }
        }
        Ok(())
    }
}

/// Trust bookkeeping of one run: collects the first `2 * window` full-window
/// instability values as the assumed-clean warm start, calibrates the
/// baseline from their median, then updates trust every step.
#[derive(Debug, Clone)]
pub struct TrustController {
    cfg: TrustConfig,
    calibration: Vec<f64>,
    calibration_target: usize,
    skip_remaining: usize,
    state: Option<TrustState>,
}

impl TrustController {
    pub fn new(
        cfg: TrustConfig,
        window: usize,
        s_ref_override: Option<f64>,
        calibration_skip: usize,
    ) -> Result<TrustController> {
        cfg.validate()?;
        let state = match s_ref_override {
            Some(s_ref) => Some(TrustState::new(cfg, s_ref)?),
            None => None,
        };
        Ok(TrustController {
            cfg,
            calibration: Vec::new(),
            // the baseline median needs at least 10 samples
            calibration_target: (2 * window).max(10),
            skip_remaining: calibration_skip,
            state,
        })
    }

    pub fn tau(&self) -> f64 {
        self.state.as_ref().map_or(self.cfg.tau_init, |s| s.tau())
    }

    pub fn s_ref(&self) -> Option<f64> {
        self.state.as_ref().map(|s| s.s_ref())
    }

    /// Feed one (possibly absent) instability value; returns the trust value
    /// to use for the upcoming update.
    pub fn observe(&mut self, instability: Option<f64>) -> Result<f64> {
        if let Some(state) = &mut self.state {
            state.update(instability)?;
            return Ok(state.tau());
        }
        if let Some(s) = instability {
            if !s.is_finite() || s < 0.0 {
                return Err(MtrError::invalid(format!(
                    "instability must be finite and >= 0, got {s}"
                )));
            }
            if self.skip_remaining > 0 {
                self.skip_remaining -= 1;
                return Ok(self.cfg.tau_init);
            }
            self.calibration.push(s);
            if self.calibration.len() >= self.calibration_target {
                let s_ref = calibrate_baseline(&self.calibration, self.cfg.epsilon)?;
                self.state = Some(TrustState::new(self.cfg, s_ref)?);
            }
        }
        Ok(self.cfg.tau_init)
    }
}

/// State of a gradient-descent learner over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct GdState {
    pub theta: Vec<f64>,
    pub velocity: Vec<f64>,
    pub momentum: f64,
    pub buffer: TrajectoryBuffer,
    pub trust: Option<TrustController>,
}

impl GdState {
    pub fn new(
        theta: Vec<f64>,
        window: usize,
        momentum: f64,
        trust: Option<TrustController>,
    ) -> Result<GdState> {
        if !stats::all_finite(&theta) {
            return Err(MtrError::invalid("initial parameters must be finite"));
        }
        let dim = theta.len();
        Ok(GdState {
            theta,
            velocity: vec![0.0; dim],
            momentum,
            buffer: TrajectoryBuffer::new(window)?,
            trust,
        })
    }
}

/// What one descent step observed and applied.
#[derive(Debug, Clone, Copy)]
pub struct StepInfo {
    pub tau: f64,
    pub instability: Option<f64>,
    pub grad_norm: f64,
}

fn apply_update(state: &mut GdState, g: &[f64], gain: f64, loss: f64) -> Result<f64> {
    if g.len() != state.theta.len() {
        return Err(MtrError::invalid(format!(
            "gradient has dim {} but parameters have dim {}",
            g.len(),
            state.theta.len()
        )));
    }
    if !stats::all_finite(g) {
        return Err(MtrError::invalid("gradient has a non-finite entry"));
    }
    let direction: Vec<f64> = if state.momentum > 0.0 {
        for (v, gi) in state.velocity.iter_mut().zip(g) {
            *v = state.momentum * *v + gi;
        }
        state.velocity.clone()
    } else {
        g.to_vec()
    };
    let delta: Vec<f64> = direction.iter().map(|d| -gain * d).collect();
    for (t, d) in state.theta.iter_mut().zip(&delta) {
        *t += d;
    }
    let inc_sq = stats::norm_sq(&delta);
    state
        .buffer
        .push_step(inc_sq, loss, stats::norm(g), &delta)?;
    Ok(inc_sq)
}

/// Unmodulated descent: `theta <- theta - eta * g` (with the optional
/// momentum accumulator), then log the increment into the buffer.
pub fn baseline_step(state: &mut GdState, g: &[f64], eta: f64, loss: f64) -> Result<StepInfo> {
    let instability = monitor::full_window_instability(&state.buffer);
    let grad_norm = stats::norm(g);
    apply_update(state, g, eta, loss)?;
    Ok(StepInfo {
        tau: 1.0,
        instability,
        grad_norm,
    })
}

/// Trust-modulated descent: update trust from the buffer's instability
/// statistic first, then apply `theta <- theta - eta * tau * g`.
pub fn trust_step(state: &mut GdState, g: &[f64], eta: f64, loss: f64) -> Result<StepInfo> {
    let instability = monitor::full_window_instability(&state.buffer);
    let grad_norm = stats::norm(g);
    let tau = state
        .trust
        .as_mut()
        .ok_or_else(|| MtrError::invalid("trust_step needs a trust controller"))?
        .observe(instability)?;
    apply_update(state, g, eta * tau, loss)?;
    Ok(StepInfo {
        tau,
        instability,
        grad_norm,
    })
}

/// One tabular value update: `Q[c][a] += alpha_eff * (reward - Q[c][a])`.
pub fn bandit_value_step(
    q: &mut [Vec<f64>],
    context: usize,
    arm: usize,
    reward: f64,
    alpha_eff: f64,
) -> Result<()> {
    if !(alpha_eff > 0.0 && alpha_eff <= 1.0) {
        return Err(MtrError::invalid(format!(
            "alpha_eff must lie in (0, 1], got {alpha_eff}"
        )));
    }
    let row = q
        .get_mut(context)
        .ok_or_else(|| MtrError::invalid(format!("context {context} out of range")))?;
    let cell = row
        .get_mut(arm)
        .ok_or_else(|| MtrError::invalid(format!("arm {arm} out of range")))?;
    *cell += alpha_eff * (reward - *cell);
    Ok(())
}

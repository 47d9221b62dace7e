//! The slow trust variable.
//!
//! Trust is a scalar in `[tau_min, 1]` updated by a slow exponential moving
//! average toward a target that penalizes instability above a calibrated
//! baseline: with `z = s / (s_ref + eps)`, the target is
//! `exp(-lambda * max(0, z - 1))`. Because the EMA rate `beta` is small, the
//! trust variable integrates evidence over many steps instead of reacting to
//! single observations, and it never moves by more than `beta` per step.
//! The floor `tau_min > 0` keeps a regulated learner generating increments,
//! so trust can recover once conditions improve.
//!
//! ```
//! use mtr_core::trust::{TrustConfig, TrustState};
//!
//! let mut trust = TrustState::new(TrustConfig::default(), 1.0).unwrap();
//! // instability settled well above baseline: trust drifts down...
//! for _ in 0..400 {
//!     trust.update(Some(5.0)).unwrap();
//! }
//! assert!(trust.tau() < 0.1);
//! // ...and the effective learning gain shrinks with it
//! assert!(trust.effective_gain(0.1) < 0.01);
//! // back at baseline, trust recovers
//! for _ in 0..1000 {
//!     trust.update(Some(1.0)).unwrap();
//! }
//! assert!(trust.tau() > 0.9);
//! ```

use crate::error::{MtrError, Result};
use crate::stats;
use serde::{Deserialize, Serialize};

pub const MAX_BETA: f64 = 0.05;

/// Hyperparameters of the trust update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrustConfig {
    /// EMA rate; `beta = 0` freezes trust entirely.
    pub beta: f64,
    /// Sharpness of the instability-to-target map.
    pub lambda: f64,
    /// Floor on trust.
    pub tau_min: f64,
    /// Division guard and floor for the calibrated baseline.
    pub epsilon: f64,
    /// Initial trust value.
    pub tau_init: f64,
}

impl Default for TrustConfig {
    fn default() -> Self {
        TrustConfig {
            beta: 0.01,
            lambda: 2.0,
            tau_min: 0.05,
            epsilon: 1e-8,
            tau_init: 1.0,
        }
    }
}

impl TrustConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=MAX_BETA).contains(&self.beta) {
            return Err(MtrError::validation(format!(
                "trust beta must lie in [0, {MAX_BETA}] (slow timescale), got {}",
                self.beta
            )));
        }
        if self.lambda <= 0.0 || !self.lambda.is_finite() {
            return Err(MtrError::validation(format!(
                "trust lambda must be > 0, got {}",
                self.lambda
            )));
        }
        if !(0.0..1.0).contains(&self.tau_min) {
            return Err(MtrError::validation(format!(
                "tau_min must lie in [0, 1), got {}",
                self.tau_min
            )));
        }
        if self.epsilon <= 0.0 || !self.epsilon.is_finite() {
            return Err(MtrError::validation(format!(
                "trust epsilon must be > 0, got {}",
                self.epsilon
            )));
        }
        if !(0.0..=1.0).contains(&self.tau_init) || self.tau_init < self.tau_min {
            return Err(MtrError::validation(format!(
                "tau_init must lie in [tau_min, 1], got {}",
                self.tau_init
            )));
        }
        Ok(())
    }
}

/// Baseline instability: the median of clean warm-start samples, floored at
/// `epsilon` so the ratio `s / s_ref` stays defined even for frozen dynamics.
pub fn calibrate_baseline(samples: &[f64], epsilon: f64) -> Result<f64> {
    if samples.len() < 10 {
        return Err(MtrError::invalid(format!(
            "baseline calibration needs at least 10 samples, got {}",
            samples.len()
        )));
    }
    if !stats::all_finite(samples) || samples.iter().any(|&s| s < 0.0) {
        return Err(MtrError::invalid(
            "baseline calibration samples must be finite and >= 0",
        ));
    }
    Ok(stats::median(samples).max(epsilon))
}

/// A calibrated trust state.
#[derive(Debug, Clone, PartialEq)]
pub struct TrustState {
    tau: f64,
    s_ref: f64,
    cfg: TrustConfig,
}

impl TrustState {
    pub fn new(cfg: TrustConfig, s_ref: f64) -> Result<TrustState> {
        cfg.validate()?;
        if s_ref <= 0.0 || !s_ref.is_finite() {
            return Err(MtrError::invalid(format!(
                "baseline instability must be > 0, got {s_ref}"
            )));
        }
        Ok(TrustState {
            tau: cfg.tau_init.max(cfg.tau_min),
            s_ref,
            cfg,
        })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn s_ref(&self) -> f64 {
        self.s_ref
    }

    pub fn config(&self) -> &TrustConfig {
        &self.cfg
    }

    /// One trust update. An absent statistic (warm-up) leaves trust unchanged.
    pub fn update(&mut self, instability: Option<f64>) -> Result<()> {
        let s = match instability {
            None => return Ok(()),
            Some(s) => s,
        };
        if !s.is_finite() || s < 0.0 {
            return Err(MtrError::invalid(format!(
                "instability must be finite and >= 0, got {s}"
            )));
        }
        let z = s / (self.s_ref + self.cfg.epsilon);
        let target = (-self.cfg.lambda * (z - 1.0).max(0.0)).exp();
        let next = (1.0 - self.cfg.beta) * self.tau + self.cfg.beta * target;
        self.tau = next.clamp(self.cfg.tau_min, 1.0);
        Ok(())
    }

    /// The trust-scaled learning gain.
    pub fn effective_gain(&self, base_rate: f64) -> f64 {
        self.tau * base_rate
    }
}

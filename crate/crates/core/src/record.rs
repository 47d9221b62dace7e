//! Per-step logs of a learning run.
//!
//! A [`RunRecord`] carries one entry per executed step for every logged
//! quantity. Conventions: `loss` and `grad_norm` describe the feedback the
//! learner evaluated at the pre-update parameters, `param_error` describes
//! the parameters after the update, and `instability` is the full-window
//! statistic available before the update (absent until the window fills).

use crate::error::{MtrError, Result};
use crate::schedule::Phase;

/// Why a run stopped before the schedule ended.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunAbort {
    pub step: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunRecord {
    /// Task-level error of the current parameters (distance to the true
    /// optimum or a task analog); always >= 0.
    pub param_error: Vec<f64>,
    /// Observed loss at the evaluated point.
    pub loss: Vec<f64>,
    /// Norm of the observed (possibly corrupted) gradient or update signal.
    pub grad_norm: Vec<f64>,
    /// Full-window instability statistic; absent before the window fills.
    pub instability: Vec<Option<f64>>,
    /// Trust variable in [0, 1]; 1 for unmodulated learners.
    pub tau: Vec<f64>,
    /// Latent reliability state, 0 or 1.
    pub rho: Vec<u8>,
    pub phase: Vec<Phase>,
    /// Per-step return or reward (negative error for estimation tasks).
    pub reward: Vec<f64>,
    /// Parameters at the end of the run (flattened for table learners).
    pub final_params: Vec<f64>,
    pub abort: Option<RunAbort>,
}

impl RunRecord {
    pub fn with_capacity(n: usize) -> RunRecord {
        RunRecord {
            param_error: Vec::with_capacity(n),
            loss: Vec::with_capacity(n),
            grad_norm: Vec::with_capacity(n),
            instability: Vec::with_capacity(n),
            tau: Vec::with_capacity(n),
            rho: Vec::with_capacity(n),
            phase: Vec::with_capacity(n),
            reward: Vec::with_capacity(n),
            final_params: Vec::new(),
            abort: None,
        }
    }

    pub fn len(&self) -> usize {
        self.param_error.len()
    }

    pub fn is_empty(&self) -> bool {
        self.param_error.is_empty()
    }

    #[allow(clippy::too_many_arguments)]
    pub fn push_row(
        &mut self,
        param_error: f64,
        loss: f64,
        grad_norm: f64,
        instability: Option<f64>,
        tau: f64,
        rho: u8,
        phase: Phase,
        reward: f64,
    ) -> Result<()> {
        if !param_error.is_finite() || param_error < 0.0 {
            return Err(MtrError::invalid(format!(
                "param_error must be finite and >= 0, got {param_error}"
            )));
        }
        if !loss.is_finite() || !grad_norm.is_finite() || !reward.is_finite() {
            return Err(MtrError::invalid("record row has a non-finite entry"));
        }
        if !(0.0..=1.0).contains(&tau) {
            return Err(MtrError::invalid(format!(
                "tau must lie in [0, 1], got {tau}"
            )));
        }
        if let Some(s) = instability {
            if !s.is_finite() || s < 0.0 {
                return Err(MtrError::invalid(format!(
                    "instability must be finite and >= 0, got {s}"
                )));
            }
        }
        if rho > 1 {
            return Err(MtrError::invalid(format!("rho must be 0 or 1, got {rho}")));
        }
        self.param_error.push(param_error);
        self.loss.push(loss);
        self.grad_norm.push(grad_norm);
        self.instability.push(instability);
        self.tau.push(tau);
        self.rho.push(rho);
        self.phase.push(phase);
        self.reward.push(reward);
        Ok(())
    }

    pub fn aborted(&self) -> bool {
        self.abort.is_some()
    }

    /// Row indices whose phase equals `phase`.
    pub fn phase_steps(&self, phase: Phase) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.phase[i] == phase)
            .collect()
    }

    /// True when every per-step array has the same length.
    pub fn consistent(&self) -> bool {
        let n = self.len();
        self.loss.len() == n
            && self.grad_norm.len() == n
            && self.instability.len() == n
            && self.tau.len() == n
            && self.rho.len() == n
            && self.phase.len() == n
            && self.reward.len() == n
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn push_row_validates_tau_range() {
        let mut r = RunRecord::default();
        assert!(r
            .push_row(0.0, 0.0, 0.0, None, 1.5, 0, Phase::Clean, 0.0)
            .is_err());
    }

    #[test]
    fn push_row_rejects_negative_instability() {
        let mut r = RunRecord::default();
        assert!(r
            .push_row(0.0, 0.0, 0.0, Some(-1.0), 1.0, 0, Phase::Clean, 0.0)
            .is_err());
    }

    #[test]
    fn arrays_stay_consistent() {
        let mut r = RunRecord::default();
        for i in 0..5 {
            r.push_row(i as f64, 0.1, 0.2, None, 1.0, 0, Phase::Clean, 0.0)
                .unwrap();
        }
        assert_eq!(r.len(), 5);
        assert!(r.consistent());
    }
}

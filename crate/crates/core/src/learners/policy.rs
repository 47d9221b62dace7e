//! Tabular softmax policy and its score-function gradient.

use crate::env::episodic::{softmax, Rollout};
use crate::error::{MtrError, Result};
use crate::stats;

/// Log probability of `action` under the softmax of one logit row.
pub fn log_policy_prob(logits_row: &[f64], action: usize) -> f64 {
    let max = logits_row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_sum: f64 = logits_row.iter().map(|l| (l - max).exp()).sum::<f64>().ln() + max;
    logits_row[action] - log_sum
}

/// Gradient of `log pi(action | state)` with respect to that state's logits:
/// the indicator of the taken action minus the policy probabilities.
pub fn grad_log_policy(logits_row: &[f64], action: usize) -> Vec<f64> {
    let probs = softmax(logits_row);
    probs
        .iter()
        .enumerate()
        .map(|(a, p)| if a == action { 1.0 - p } else { -p })
        .collect()
}

/// Score-function ascent direction accumulated over one episode:
/// `sum_t advantage_t * grad log pi(a_t | s_t)`.
pub fn policy_gradient(
    n_states: usize,
    n_actions: usize,
    logits: &[Vec<f64>],
    rollout: &Rollout,
) -> Result<Vec<Vec<f64>>> {
    if rollout.is_empty() {
        return Err(MtrError::invalid(
            "policy gradient needs a nonempty episode",
        ));
    }
    if !stats::all_finite(&rollout.advantages) {
        return Err(MtrError::invalid("advantages must be finite"));
    }
    let mut grad = vec![vec![0.0; n_actions]; n_states];
    for t in 0..rollout.len() {
        let s = rollout.states[t];
        let a = rollout.actions[t];
        let g = grad_log_policy(&logits[s], a);
        for (cell, gi) in grad[s].iter_mut().zip(&g) {
            *cell += rollout.advantages[t] * gi;
        }
    }
    Ok(grad)
}

/// Apply one ascent step `logits += gain * gradient`; returns the squared
/// update magnitude for the monitor.
pub fn policy_gradient_step(logits: &mut [Vec<f64>], rollout: &Rollout, gain: f64) -> Result<f64> {
    let n_states = logits.len();
    let n_actions = logits.first().map_or(0, |r| r.len());
    let grad = policy_gradient(n_states, n_actions, logits, rollout)?;
    let mut inc_sq = 0.0;
    for (row, grow) in logits.iter_mut().zip(&grad) {
        for (cell, g) in row.iter_mut().zip(grow) {
            let delta = gain * g;
            *cell += delta;
            inc_sq += delta * delta;
        }
    }
    Ok(inc_sq)
}

pub fn flatten(table: &[Vec<f64>]) -> Vec<f64> {
    table.iter().flatten().copied().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn rollout_single(state: usize, action: usize, advantage: f64) -> Rollout {
        Rollout {
            states: vec![state],
            actions: vec![action],
            rewards: vec![0.0],
            advantages: vec![advantage],
            episode_return: 0.0,
        }
    }

    #[test]
    fn zero_advantages_leave_logits_unchanged() {
        let mut logits = vec![vec![0.3, -0.2]; 2];
        let before = logits.clone();
        let r = Rollout {
            states: vec![0, 1],
            actions: vec![1, 0],
            rewards: vec![0.0, 0.0],
            advantages: vec![0.0, 0.0],
            episode_return: 0.0,
        };
        policy_gradient_step(&mut logits, &r, 1.0).unwrap();
        assert_eq!(logits, before);
    }

    #[test]
    fn positive_advantage_raises_taken_action() {
        let mut logits = vec![vec![0.0, 0.0]];
        policy_gradient_step(&mut logits, &rollout_single(0, 1, 1.0), 1.0).unwrap();
        assert!(logits[0][1] > 0.0);
        assert!(logits[0][0] < 0.0);
    }

    #[test]
    fn non_finite_advantage_rejected() {
        let mut logits = vec![vec![0.0, 0.0]];
        assert!(policy_gradient_step(&mut logits, &rollout_single(0, 0, f64::NAN), 1.0).is_err());
    }

    // Central finite differences of log pi against the analytic gradient.
    #[test]
    fn grad_log_policy_matches_finite_differences() {
        let mut rng = RngStream::new(61, 0);
        let h = 1e-6;
        for _ in 0..100 {
            let n_actions = 2 + rng.index(4);
            let row: Vec<f64> = (0..n_actions).map(|_| rng.normal(0.0, 2.0)).collect();
            let action = rng.index(n_actions);
            let analytic = grad_log_policy(&row, action);
            for k in 0..n_actions {
                let mut hi = row.clone();
                let mut lo = row.clone();
                hi[k] += h;
                lo[k] -= h;
                let fd = (log_policy_prob(&hi, action) - log_policy_prob(&lo, action)) / (2.0 * h);
                let denom = analytic[k].abs().max(1e-3);
                assert!(
                    (fd - analytic[k]).abs() / denom < 1e-5,
                    "fd {fd} vs analytic {}",
                    analytic[k]
                );
            }
        }
    }
}

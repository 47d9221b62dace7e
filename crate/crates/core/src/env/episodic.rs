//! Small tabular episodic task for policy-gradient runs.
//!
//! A generic finite MDP (transition and reward tables, fixed start state,
//! optional terminal state, bounded horizon) plus a corridor constructor:
//! the agent walks right toward a goal under a small step penalty with a
//! slip probability. Rollouts sample a softmax policy over per-state logits
//! and return per-step advantages computed from empirical returns; advantage
//! corruption is applied per step inside unreliable segments.

use crate::env::corruption::{corrupt_advantages, CorruptionConfig};
use crate::error::{MtrError, Result};
use crate::rng::RngStream;
use crate::schedule::Regime;

/// Parameters of the corridor constructor, kept so configuration files can
/// reproduce the environment exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainParams {
    pub slip: f64,
    pub step_penalty: f64,
    pub goal_reward: f64,
    pub wall_penalty: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodicTaskEnv {
    pub n_states: usize,
    pub n_actions: usize,
    /// `transitions[s][a]` is a distribution over next states.
    pub transitions: Vec<Vec<Vec<f64>>>,
    /// `rewards[s][a]`, received on taking `a` in `s`.
    pub rewards: Vec<Vec<f64>>,
    /// Bonus received on arriving in a state, so rewards tied to reaching a
    /// state are paid once per arrival rather than per attempt.
    pub entry_rewards: Vec<f64>,
    pub horizon: usize,
    pub initial_state: usize,
    pub terminal_state: Option<usize>,
    /// Present when the tables were built by [`EpisodicTaskEnv::chain`].
    pub chain_params: Option<ChainParams>,
}

impl EpisodicTaskEnv {
    pub fn new(
        transitions: Vec<Vec<Vec<f64>>>,
        rewards: Vec<Vec<f64>>,
        horizon: usize,
        initial_state: usize,
        terminal_state: Option<usize>,
    ) -> Result<EpisodicTaskEnv> {
        let n_states = transitions.len();
        let n_actions = transitions.first().map_or(0, |row| row.len());
        let env = EpisodicTaskEnv {
            n_states,
            n_actions,
            transitions,
            rewards,
            entry_rewards: vec![0.0; n_states],
            horizon,
            initial_state,
            terminal_state,
            chain_params: None,
        };
        env.validate()?;
        Ok(env)
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(MtrError::invalid("episode horizon must be >= 1"));
        }
        if self.n_states == 0 || self.n_actions == 0 {
            return Err(MtrError::validation(
                "episodic task needs states and actions",
            ));
        }
        if self.initial_state >= self.n_states {
            return Err(MtrError::validation("initial state out of range"));
        }
        if self.rewards.len() != self.n_states
            || self.rewards.iter().any(|r| r.len() != self.n_actions)
        {
            return Err(MtrError::validation("reward table shape mismatch"));
        }
        if self.entry_rewards.len() != self.n_states {
            return Err(MtrError::validation("entry reward table shape mismatch"));
        }
        for (s, row) in self.transitions.iter().enumerate() {
            if row.len() != self.n_actions {
                return Err(MtrError::validation(format!(
                    "state {s} has {} action rows, expected {}",
                    row.len(),
                    self.n_actions
                )));
            }
            for (a, dist) in row.iter().enumerate() {
                if dist.len() != self.n_states {
                    return Err(MtrError::validation(format!(
                        "transition row ({s}, {a}) has wrong length"
                    )));
                }
                let total: f64 = dist.iter().sum();
                if (total - 1.0).abs() > 1e-9 || dist.iter().any(|&p| p < 0.0) {
                    return Err(MtrError::validation(format!(
                        "transition row ({s}, {a}) sums to {total}, expected 1"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Corridor of `n_states` states with a goal at the right end. Action 0
    /// moves left, action 1 right; moves succeed with probability `1 - slip`
    /// and otherwise stay put. Every step costs `step_penalty`; arriving at
    /// the goal pays `goal_reward` once and ends the episode; every arrival
    /// back at the left wall costs `wall_penalty`, so failed episodes differ
    /// in return instead of all looking alike.
    pub fn chain(
        n_states: usize,
        slip: f64,
        step_penalty: f64,
        goal_reward: f64,
        horizon: usize,
    ) -> Result<EpisodicTaskEnv> {
        Self::chain_with_wall(n_states, slip, step_penalty, goal_reward, 0.0, horizon)
    }

    pub fn chain_with_wall(
        n_states: usize,
        slip: f64,
        step_penalty: f64,
        goal_reward: f64,
        wall_penalty: f64,
        horizon: usize,
    ) -> Result<EpisodicTaskEnv> {
        if n_states < 2 {
            return Err(MtrError::validation("chain needs at least 2 states"));
        }
        if !(0.0..1.0).contains(&slip) {
            return Err(MtrError::validation(format!(
                "slip must lie in [0, 1), got {slip}"
            )));
        }
        let goal = n_states - 1;
        let mut transitions = vec![vec![vec![0.0; n_states]; 2]; n_states];
        let mut rewards = vec![vec![-step_penalty; 2]; n_states];
        for s in 0..n_states {
            if s == goal {
                // absorbing
                for a in 0..2 {
                    transitions[s][a][s] = 1.0;
                    rewards[s][a] = 0.0;
                }
                continue;
            }
            let left = s.saturating_sub(1);
            let right = s + 1;
            transitions[s][0][left] += 1.0 - slip;
            transitions[s][0][s] += slip;
            transitions[s][1][right] += 1.0 - slip;
            transitions[s][1][s] += slip;
        }
        let mut env = EpisodicTaskEnv::new(transitions, rewards, horizon, 0, Some(goal))?;
        env.entry_rewards[goal] = goal_reward;
        env.entry_rewards[0] = -wall_penalty;
        env.chain_params = Some(ChainParams {
            slip,
            step_penalty,
            goal_reward,
            wall_penalty,
        });
        Ok(env)
    }

    /// Expected return of an optimal policy from the start state, by
    /// finite-horizon dynamic programming. Used as the performance ceiling.
    #[allow(clippy::needless_range_loop)]
    pub fn optimal_return(&self) -> f64 {
        let mut value = vec![0.0; self.n_states];
        for _ in 0..self.horizon {
            let mut next = vec![0.0; self.n_states];
            for s in 0..self.n_states {
                if Some(s) == self.terminal_state {
                    next[s] = 0.0;
                    continue;
                }
                let mut best = f64::NEG_INFINITY;
                for a in 0..self.n_actions {
                    let mut q = self.rewards[s][a];
                    for (s2, &p) in self.transitions[s][a].iter().enumerate() {
                        if p > 0.0 {
                            q += p * (self.entry_rewards[s2] + value[s2]);
                        }
                    }
                    best = best.max(q);
                }
                next[s] = best;
            }
            value = next;
        }
        value[self.initial_state]
    }

    fn transition(&self, state: usize, action: usize, rng: &mut RngStream) -> (usize, f64) {
        let next = rng.categorical(&self.transitions[state][action]);
        (next, self.rewards[state][action] + self.entry_rewards[next])
    }
}

/// One sampled episode with empirical-return advantages.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    /// Return-to-go minus the caller's return baseline, possibly sign-flipped
    /// by corruption.
    pub advantages: Vec<f64>,
    pub episode_return: f64,
}

impl Rollout {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.iter().map(|e| e / total).collect()
}

/// Sample one episode under the softmax policy given by `logits[state]`,
/// mixed with a uniform exploration floor of weight `explore`.
/// The episode ends at the terminal state or after `horizon` steps.
///
/// Advantages are returns-to-go relative to `return_baseline`, the caller's
/// running estimate of the episode return; a successful episode then carries
/// positive advantages and a failed one negative, which is the signal the
/// sign-flip corruption reverses. Corruption fires only when the regime is
/// unreliable.
#[allow(clippy::too_many_arguments)]
pub fn episodic_rollout(
    env: &EpisodicTaskEnv,
    logits: &[Vec<f64>],
    return_baseline: f64,
    explore: f64,
    corruption: Option<&CorruptionConfig>,
    regime: Regime,
    rng: &mut RngStream,
    corrupt_rng: &mut RngStream,
) -> Result<Rollout> {
    env.validate()?;
    if logits.len() != env.n_states || logits.iter().any(|row| row.len() != env.n_actions) {
        return Err(MtrError::invalid(format!(
            "policy table must be {} x {}",
            env.n_states, env.n_actions
        )));
    }
    if !return_baseline.is_finite() {
        return Err(MtrError::invalid("return baseline must be finite"));
    }
    if !(0.0..=1.0).contains(&explore) {
        return Err(MtrError::invalid(format!(
            "exploration weight must lie in [0, 1], got {explore}"
        )));
    }
    let mut states = Vec::new();
    let mut actions = Vec::new();
    let mut rewards = Vec::new();
    let mut state = env.initial_state;
    let uniform = explore / env.n_actions as f64;
    for _ in 0..env.horizon {
        if Some(state) == env.terminal_state {
            break;
        }
        let mut probs = softmax(&logits[state]);
        for p in probs.iter_mut() {
            *p = (1.0 - explore) * *p + uniform;
        }
        let action = rng.categorical(&probs);
        let (next, reward) = env.transition(state, action, rng);
        states.push(state);
        actions.push(action);
        rewards.push(reward);
        state = next;
    }
    // returns-to-go against the running baseline
    let n = rewards.len();
    let mut advantages = vec![0.0; n];
    let mut acc = 0.0;
    for t in (0..n).rev() {
        acc += rewards[t];
        advantages[t] = acc - return_baseline;
    }
    let episode_return = acc;
    if regime.is_unreliable() {
        if let Some(cfg) = corruption {
            corrupt_advantages(&mut advantages, cfg, corrupt_rng);
        }
    }
    Ok(Rollout {
        states,
        actions,
        rewards,
        advantages,
        episode_return,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::corruption::CorruptionKind;

    fn two_state_deterministic() -> EpisodicTaskEnv {
        // state 0 -> state 1 (terminal) under either action; action 1 pays 1
        EpisodicTaskEnv::new(
            vec![
                vec![vec![0.0, 1.0], vec![0.0, 1.0]],
                vec![vec![0.0, 1.0], vec![0.0, 1.0]],
            ],
            vec![vec![0.0, 1.0], vec![0.0, 0.0]],
            4,
            0,
            Some(1),
        )
        .unwrap()
    }

    fn deterministic_policy(n_states: usize, action: usize) -> Vec<Vec<f64>> {
        let mut logits = vec![vec![0.0; 2]; n_states];
        for row in logits.iter_mut() {
            row[action] = 50.0; // saturated softmax
        }
        logits
    }

    #[test]
    fn deterministic_chain_gives_unique_trajectory() {
        let env = two_state_deterministic();
        let logits = deterministic_policy(2, 1);
        let mut rng = RngStream::new(0, 0);
        let mut crng = RngStream::new(0, 1);
        let r = episodic_rollout(
            &env,
            &logits,
            0.0,
            0.0,
            None,
            Regime::Reliable,
            &mut rng,
            &mut crng,
        )
        .unwrap();
        assert_eq!(r.states, vec![0]);
        assert_eq!(r.actions, vec![1]);
        assert_eq!(r.rewards, vec![1.0]);
        assert_eq!(r.episode_return, 1.0);
    }

    #[test]
    fn reliable_regime_leaves_advantages_unchanged() {
        let env = EpisodicTaskEnv::chain(4, 0.0, 0.01, 1.0, 10).unwrap();
        let cfg = CorruptionConfig::new(CorruptionKind::AdvantageSignFlip, 1.0, 0.0).unwrap();
        let logits = vec![vec![0.0; 2]; 4];
        let paired = |regime, cfg: Option<&CorruptionConfig>| {
            let mut rng = RngStream::new(8, 0);
            let mut crng = RngStream::new(8, 1);
            episodic_rollout(&env, &logits, 0.5, 0.0, cfg, regime, &mut rng, &mut crng).unwrap()
        };
        let clean = paired(Regime::Reliable, Some(&cfg));
        let no_cfg = paired(Regime::Reliable, None);
        assert_eq!(clean.advantages, no_cfg.advantages);
    }

    // With p = 1 sign flips, every advantage is exactly negated relative to
    // the clean rollout under the same streams.
    #[test]
    fn certain_flip_negates_all_advantages() {
        let env = EpisodicTaskEnv::chain(5, 0.1, 0.01, 1.0, 20).unwrap();
        let cfg = CorruptionConfig::new(CorruptionKind::AdvantageSignFlip, 1.0, 0.0).unwrap();
        let logits = vec![vec![0.0; 2]; 5];
        let run = |regime, cfg: Option<&CorruptionConfig>| {
            let mut rng = RngStream::new(21, 0);
            let mut crng = RngStream::new(21, 1);
            episodic_rollout(&env, &logits, 0.5, 0.0, cfg, regime, &mut rng, &mut crng).unwrap()
        };
        let clean = run(Regime::Reliable, None);
        let corrupt = run(Regime::Unreliable, Some(&cfg));
        assert_eq!(clean.states, corrupt.states);
        assert_eq!(clean.rewards, corrupt.rewards);
        for (a, b) in clean.advantages.iter().zip(&corrupt.advantages) {
            assert!((a + b).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_horizon_rejected() {
        assert!(EpisodicTaskEnv::chain(5, 0.1, 0.01, 1.0, 0).is_err());
    }

    #[test]
    fn transition_rows_must_be_distributions() {
        let mut env = two_state_deterministic();
        env.transitions[0][0][1] = 0.5;
        assert!(env.validate().is_err());
    }

    #[test]
    fn optimal_return_of_deterministic_chain() {
        // 4 states, no slip: three moves right, the last one pays the goal.
        let env = EpisodicTaskEnv::chain(4, 0.0, 0.01, 1.0, 10).unwrap();
        let expected = 1.0 - 0.01 * 3.0;
        assert!((env.optimal_return() - expected).abs() < 1e-12);
    }

    #[test]
    fn advantages_are_returns_to_go_minus_baseline() {
        let env = EpisodicTaskEnv::chain(5, 0.1, 0.01, 1.0, 20).unwrap();
        let logits = vec![vec![0.0; 2]; 5];
        let baseline = 0.3;
        let mut rng = RngStream::new(33, 0);
        let mut crng = RngStream::new(33, 1);
        let r = episodic_rollout(
            &env,
            &logits,
            baseline,
            0.0,
            None,
            Regime::Reliable,
            &mut rng,
            &mut crng,
        )
        .unwrap();
        for (t, a) in r.advantages.iter().enumerate() {
            let togo: f64 = r.rewards[t..].iter().sum();
            assert!((a - (togo - baseline)).abs() < 1e-12);
        }
        assert!((r.advantages[0] - (r.episode_return - baseline)).abs() < 1e-12);
    }
}

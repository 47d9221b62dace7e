//! Two-context, two-armed bandit with latent volatility.
//!
//! Per-step rewards are Bernoulli with the same success probabilities in
//! every block; only the hazard rate at which the best arm reverses differs
//! between stable and volatile blocks. Block identity and hazard are hidden
//! from the agent, so single rewards carry no information about the regime;
//! repeated reversals do.

use crate::error::{MtrError, Result};
use crate::rng::RngStream;
use crate::schedule::Regime;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    Stable,
    Volatile,
}

impl BlockKind {
    /// The latent reliability state doubles as the block schedule: reliable
    /// segments are stable blocks, unreliable segments volatile ones.
    pub fn from_regime(regime: Regime) -> BlockKind {
        match regime {
            Regime::Reliable => BlockKind::Stable,
            Regime::Unreliable => BlockKind::Volatile,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BanditEnv {
    pub n_contexts: usize,
    pub n_arms: usize,
    pub hazard_stable: f64,
    pub hazard_volatile: f64,
    pub reward_p_good: f64,
    pub reward_p_bad: f64,
    best_arm: Vec<usize>,
}

impl BanditEnv {
    pub fn new(
        hazard_stable: f64,
        hazard_volatile: f64,
        reward_p_good: f64,
        reward_p_bad: f64,
    ) -> Result<BanditEnv> {
        let env = BanditEnv {
            n_contexts: 2,
            n_arms: 2,
            hazard_stable,
            hazard_volatile,
            reward_p_good,
            reward_p_bad,
            best_arm: vec![0; 2],
        };
        env.validate()?;
        if env.hazard_volatile <= env.hazard_stable {
            return Err(MtrError::validation(format!(
                "hazard_volatile ({}) must exceed hazard_stable ({})",
                env.hazard_volatile, env.hazard_stable
            )));
        }
        Ok(env)
    }

    /// Variant with identical hazards in both block kinds, used as the
    /// no-contrast control. Skips the hazard ordering check.
    pub fn equal_hazards(hazard: f64, reward_p_good: f64, reward_p_bad: f64) -> Result<BanditEnv> {
        let env = BanditEnv {
            n_contexts: 2,
            n_arms: 2,
            hazard_stable: hazard,
            hazard_volatile: hazard,
            reward_p_good,
            reward_p_bad,
            best_arm: vec![0; 2],
        };
        env.validate_probabilities()?;
        Ok(env)
    }

    fn validate_probabilities(&self) -> Result<()> {
        for (name, p) in [
            ("hazard_stable", self.hazard_stable),
            ("hazard_volatile", self.hazard_volatile),
            ("reward_p_good", self.reward_p_good),
            ("reward_p_bad", self.reward_p_bad),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(MtrError::validation(format!(
                    "{name} must lie in [0, 1], got {p}"
                )));
            }
        }
        if self.reward_p_good <= self.reward_p_bad {
            return Err(MtrError::validation(format!(
                "reward_p_good ({}) must exceed reward_p_bad ({})",
                self.reward_p_good, self.reward_p_bad
            )));
        }
        Ok(())
    }

    /// Equal hazards are tolerated here: they are the no-contrast control.
    /// The strict ordering is enforced by [`BanditEnv::new`].
    pub fn validate(&self) -> Result<()> {
        self.validate_probabilities()?;
        if self.hazard_volatile < self.hazard_stable {
            return Err(MtrError::validation(format!(
                "hazard_volatile ({}) must not be below hazard_stable ({})",
                self.hazard_volatile, self.hazard_stable
            )));
        }
        Ok(())
    }

    pub fn draw_context(&self, rng: &mut RngStream) -> usize {
        rng.index(self.n_contexts)
    }

    /// Diagnostic access to the hidden best arm; agents must not read this.
    pub fn true_best_arm(&self, context: usize) -> usize {
        self.best_arm[context]
    }

    fn hazard(&self, block: BlockKind) -> f64 {
        match block {
            BlockKind::Stable => self.hazard_stable,
            BlockKind::Volatile => self.hazard_volatile,
        }
    }

    /// Pull `arm` in `context`: Bernoulli reward, then the pulled context's
    /// best arm reverses with the block's hazard rate.
    pub fn step(
        &mut self,
        context: usize,
        arm: usize,
        block: BlockKind,
        rng: &mut RngStream,
    ) -> Result<u8> {
        if context >= self.n_contexts {
            return Err(MtrError::invalid(format!(
                "context {context} out of range (n_contexts {})",
                self.n_contexts
            )));
        }
        if arm >= self.n_arms {
            return Err(MtrError::invalid(format!(
                "arm {arm} out of range (n_arms {})",
                self.n_arms
            )));
        }
        let p = if arm == self.best_arm[context] {
            self.reward_p_good
        } else {
            self.reward_p_bad
        };
        let reward = u8::from(rng.bernoulli(p));
        if rng.bernoulli(self.hazard(block)) {
            self.best_arm[context] = (self.best_arm[context] + 1) % self.n_arms;
        }
        Ok(reward)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env() -> BanditEnv {
        BanditEnv::new(0.01, 0.2, 0.8, 0.2).unwrap()
    }

    #[test]
    fn zero_hazard_keeps_best_arm_fixed() {
        let mut e = BanditEnv::equal_hazards(0.0, 0.8, 0.2).unwrap();
        let mut rng = RngStream::new(0, 0);
        let initial = e.true_best_arm(0);
        for _ in 0..1000 {
            e.step(0, 0, BlockKind::Stable, &mut rng).unwrap();
        }
        assert_eq!(e.true_best_arm(0), initial);
    }

    #[test]
    fn best_arm_with_certain_reward_pays_out() {
        let mut e = BanditEnv::new(0.01, 0.2, 1.0, 0.0).unwrap();
        let mut rng = RngStream::new(0, 0);
        let best = e.true_best_arm(1);
        let r = e.step(1, best, BlockKind::Stable, &mut rng).unwrap();
        assert_eq!(r, 1);
    }

    // Monte Carlo reversal frequency under the volatile hazard.
    #[test]
    fn reversal_rate_matches_hazard() {
        let mut e = env();
        let mut rng = RngStream::new(314, 0);
        let n = 10_000;
        let mut reversals = 0;
        let mut prev = e.true_best_arm(0);
        for _ in 0..n {
            e.step(0, 0, BlockKind::Volatile, &mut rng).unwrap();
            if e.true_best_arm(0) != prev {
                reversals += 1;
                prev = e.true_best_arm(0);
            }
        }
        let rate = reversals as f64 / n as f64;
        assert!((rate - 0.2).abs() < 0.01, "reversal rate {rate}");
    }

    #[test]
    fn out_of_range_pulls_rejected() {
        let mut e = env();
        let mut rng = RngStream::new(0, 0);
        assert!(e.step(2, 0, BlockKind::Stable, &mut rng).is_err());
        assert!(e.step(0, 2, BlockKind::Stable, &mut rng).is_err());
    }

    #[test]
    fn hazard_ordering_enforced() {
        assert!(BanditEnv::new(0.2, 0.1, 0.8, 0.2).is_err());
        assert!(BanditEnv::new(0.01, 0.2, 0.2, 0.8).is_err());
    }

    // Conditioned on pulling the current best arm, reward marginals are the
    // same in both block kinds; only the temporal structure differs.
    #[test]
    fn reward_marginals_identical_across_blocks() {
        let mut rng = RngStream::new(2718, 0);
        let n = 20_000;
        let mut mean_for = |block: BlockKind| -> f64 {
            let mut e = env();
            let mut total = 0.0;
            for _ in 0..n {
                let best = e.true_best_arm(0);
                total += e.step(0, best, block, &mut rng).unwrap() as f64;
            }
            total / n as f64
        };
        let stable = mean_for(BlockKind::Stable);
        let volatile = mean_for(BlockKind::Volatile);
        assert!((stable - 0.8).abs() < 0.02, "stable mean {stable}");
        assert!((volatile - 0.8).abs() < 0.02, "volatile mean {volatile}");
    }
}

//! Learning problems with a latent reliability state.
//!
//! Each environment exposes clean feedback when the regime is reliable and
//! persistently biased (but locally plausible) feedback when it is not:
//! a quadratic objective with a constant gradient bias, regression and
//! classification samplers with structured target or feature bias, stochastic
//! corruption operators, a two-context bandit whose volatility is the latent
//! state, and a small tabular episodic task for policy-gradient runs.

pub mod bandit;
pub mod corruption;
pub mod episodic;
pub mod quadratic;
pub mod regression;

pub use bandit::{BanditEnv, BlockKind};
pub use corruption::{corrupt_advantages, corrupt_gradient, CorruptionConfig, CorruptionKind};
pub use episodic::{episodic_rollout, ChainParams, EpisodicTaskEnv, Rollout};
pub use quadratic::QuadraticEnv;
pub use regression::{BiasMode, RegressionEnv, Target};

/// The environment an experiment runs against.
#[derive(Debug, Clone, PartialEq)]
pub enum EnvSpec {
    Quadratic(QuadraticEnv),
    Regression(RegressionEnv),
    Bandit(BanditEnv),
    Episodic(EpisodicTaskEnv),
}

impl EnvSpec {
    pub fn name(&self) -> &'static str {
        match self {
            EnvSpec::Quadratic(_) => "quadratic",
            EnvSpec::Regression(_) => "regression",
            EnvSpec::Bandit(_) => "bandit",
            EnvSpec::Episodic(_) => "episodic",
        }
    }
}

//! Desk-scale experiments in learning under latent feedback reliability.
//!
//! When feedback (gradients, labels, rewards) can be persistently biased and
//! the reliability state is hidden, a learner can optimize smoothly while
//! converging to the wrong solution: loss falls, gradients vanish, and the
//! fixed point is off by exactly the bias. Single observations carry no
//! usable signal about reliability, but windowed statistics of the
//! parameter trajectory do. This crate builds that whole story as a small,
//! deterministic laboratory:
//!
//! * [`mod@env`] — learning problems with a latent reliability regime: a biased
//!   quadratic, regression/classification samplers with structured bias,
//!   stochastic corruption operators, a volatile two-context bandit, and a
//!   tabular episodic task.
//! * [`monitor`] — windowed instability statistics over parameter
//!   increments, plus local and trajectory-level feature vectors.
//! * [`trust`] — the slow trust variable in `[0, 1]`, calibrated against a
//!   clean warm start and driven by monitored instability.
//! * [`learners`] — baseline and trust-modulated learners; the trust value
//!   scales the effective learning rate.
//! * [`detection`] — ROC/AUC quantification of how identifiable the regime
//!   is from local versus trajectory-level features.
//! * [`harness`] — staged clean/corrupt/recovery protocols, multi-seed
//!   execution, recovery metrics, and deterministic artifact emission.
//! * [`config`] / [`io`] — strict TOML configuration and byte-stable
//!   CSV/JSON outputs.
//!
//! Everything is deterministic in `(config, seed)`: identical inputs produce
//! bit-identical run records and output files.

pub mod buffer;
pub mod config;
pub mod detection;
pub mod env;
pub mod error;
pub mod harness;
pub mod io;
pub mod learners;
pub mod monitor;
pub mod record;
pub mod rng;
pub mod schedule;
pub mod stats;
pub mod trust;

pub use error::{MtrError, Result};

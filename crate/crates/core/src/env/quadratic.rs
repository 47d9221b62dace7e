//! Quadratic objective with a persistent gradient bias.
//!
//! The learner observes `g(theta) = (theta - theta_star) + rho * b + noise`.
//! Under the biased regime every descent method with a small step converges
//! to the shifted fixed point `theta_star - b` while its observed loss and
//! gradient norm look like a perfectly healthy optimization.

use crate::error::{MtrError, Result};
use crate::rng::RngStream;
use crate::schedule::Regime;
use crate::stats;

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticEnv {
    pub theta_star: Vec<f64>,
    pub bias: Vec<f64>,
    pub noise_sigma: f64,
    /// Apply the bias in every regime instead of gating it on unreliability.
    pub bias_always_on: bool,
}

impl QuadraticEnv {
    pub fn new(theta_star: Vec<f64>, bias: Vec<f64>, noise_sigma: f64) -> Result<QuadraticEnv> {
        let env = QuadraticEnv {
            theta_star,
            bias,
            noise_sigma,
            bias_always_on: false,
        };
        env.validate()?;
        Ok(env)
    }

    pub fn validate(&self) -> Result<()> {
        if self.theta_star.is_empty() {
            return Err(MtrError::validation("quadratic env needs dimension >= 1"));
        }
        if self.theta_star.len() != self.bias.len() {
            return Err(MtrError::validation(format!(
                "theta_star has dim {} but bias has dim {}",
                self.theta_star.len(),
                self.bias.len()
            )));
        }
        if self.noise_sigma < 0.0 || !self.noise_sigma.is_finite() {
            return Err(MtrError::validation(format!(
                "noise_sigma must be finite and >= 0, got {}",
                self.noise_sigma
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.theta_star.len()
    }

    fn bias_active(&self, regime: Regime) -> bool {
        self.bias_always_on || regime.is_unreliable()
    }

    /// Observed gradient at `theta`.
    pub fn gradient(&self, theta: &[f64], regime: Regime, rng: &mut RngStream) -> Result<Vec<f64>> {
        if theta.len() != self.dim() {
            return Err(MtrError::invalid(format!(
                "theta has dim {} but the environment has dim {}",
                theta.len(),
                self.dim()
            )));
        }
        let biased = self.bias_active(regime);
        let mut g = Vec::with_capacity(self.dim());
        for (t, (star, b)) in theta.iter().zip(self.theta_star.iter().zip(&self.bias)) {
            let mut v = t - star;
            if biased {
                v += b;
            }
            if self.noise_sigma > 0.0 {
                v += self.noise_sigma * rng.normal_std();
            }
            g.push(v);
        }
        Ok(g)
    }

    /// The loss the learner would reconstruct from its observed gradients:
    /// half the squared distance to the fixed point of the current feedback.
    /// Under bias this decreases smoothly even though the true error does not.
    pub fn observed_loss(&self, theta: &[f64], regime: Regime) -> f64 {
        let biased = self.bias_active(regime);
        let mut total = 0.0;
        for (t, (star, b)) in theta.iter().zip(self.theta_star.iter().zip(&self.bias)) {
            let mut v = t - star;
            if biased {
                v += b;
            }
            total += v * v;
        }
        0.5 * total
    }

    /// Distance to the true optimum.
    pub fn true_error(&self, theta: &[f64]) -> f64 {
        let diff: Vec<f64> = theta
            .iter()
            .zip(&self.theta_star)
            .map(|(t, s)| t - s)
            .collect();
        stats::norm(&diff)
    }

    /// Fixed point the dynamics converge to when the bias is active.
    pub fn biased_fixed_point(&self) -> Vec<f64> {
        self.theta_star
            .iter()
            .zip(&self.bias)
            .map(|(s, b)| s - b)
            .collect()
    }
}

//! Regression and classification samplers with latent structured bias.
//!
//! Two bias modes:
//!
//! * `LabelShift` — linear regression targets; in the unreliable regime every
//!   target is shifted by a constant drift. Features are zero-mean, so a
//!   model without an intercept cannot absorb the shift: the expected
//!   gradient is unchanged while the per-step gradient fluctuation grows,
//!   which is exactly the trajectory-level signature the monitor picks up.
//!   An estimator that does fit an intercept absorbs the shift into it and
//!   becomes inconsistent instead.
//! * `ClassTrigger` — binary classification with Gaussian class-conditional
//!   features; in the unreliable regime every sample of one trigger class
//!   carries a small fixed feature perturbation, a consistent bias far below
//!   the noise floor of any single observation.

use crate::error::{MtrError, Result};
use crate::rng::RngStream;
use crate::schedule::Regime;
use crate::stats;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BiasMode {
    LabelShift,
    ClassTrigger,
}

/// A sampled supervised target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    Value(f64),
    Class(u8),
}

impl Target {
    pub fn value(self) -> f64 {
        match self {
            Target::Value(v) => v,
            Target::Class(c) => c as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionEnv {
    pub dim: usize,
    pub true_weights: Vec<f64>,
    pub label_noise: f64,
    pub drift_strength: f64,
    pub bias_mode: BiasMode,
    pub trigger_class: u8,
    /// Separation of the class means along the weight direction (ClassTrigger).
    pub class_sep: f64,
    /// Magnitude of the fixed trigger perturbation (ClassTrigger).
    pub trigger_magnitude: f64,
}

impl RegressionEnv {
    pub fn label_shift(dim: usize, label_noise: f64, drift_strength: f64) -> Result<RegressionEnv> {
        let env = RegressionEnv {
            dim,
            true_weights: unit_weights(dim),
            label_noise,
            drift_strength,
            bias_mode: BiasMode::LabelShift,
            trigger_class: 1,
            class_sep: 1.0,
            trigger_magnitude: 0.0,
        };
        env.validate()?;
        Ok(env)
    }

    pub fn class_trigger(
        dim: usize,
        class_sep: f64,
        trigger_class: u8,
        trigger_magnitude: f64,
    ) -> Result<RegressionEnv> {
        let env = RegressionEnv {
            dim,
            true_weights: unit_weights(dim),
            label_noise: 0.0,
            drift_strength: 0.0,
            bias_mode: BiasMode::ClassTrigger,
            trigger_class,
            class_sep,
            trigger_magnitude,
        };
        env.validate()?;
        Ok(env)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(MtrError::validation("regression dim must be >= 1"));
        }
        if self.true_weights.len() != self.dim {
            return Err(MtrError::validation(format!(
                "true_weights has {} entries for dim {}",
                self.true_weights.len(),
                self.dim
            )));
        }
        if self.label_noise < 0.0 || !self.label_noise.is_finite() {
            return Err(MtrError::validation(format!(
                "label_noise must be finite and >= 0, got {}",
                self.label_noise
            )));
        }
        if self.drift_strength < 0.0 || !self.drift_strength.is_finite() {
            return Err(MtrError::validation(format!(
                "drift_strength must be finite and >= 0, got {}",
                self.drift_strength
            )));
        }
        if self.trigger_class > 1 {
            return Err(MtrError::validation(format!(
                "trigger_class must be 0 or 1, got {}",
                self.trigger_class
            )));
        }
        if self.trigger_magnitude < 0.0 || self.class_sep < 0.0 {
            return Err(MtrError::validation(
                "class_sep and trigger_magnitude must be >= 0",
            ));
        }
        Ok(())
    }

    /// Unit vector along the true weights; class means and the trigger
    /// perturbation both live on this direction.
    pub fn weight_direction(&self) -> Vec<f64> {
        let n = stats::norm(&self.true_weights);
        if n == 0.0 {
            return unit_weights(self.dim);
        }
        self.true_weights.iter().map(|w| w / n).collect()
    }

    /// Draw one sample under the given regime.
    pub fn sample(&self, regime: Regime, rng: &mut RngStream) -> (Vec<f64>, Target) {
        match self.bias_mode {
            BiasMode::LabelShift => {
                let x = rng.normal_vec(self.dim);
                let mut y = stats::dot(&x, &self.true_weights);
                if self.label_noise > 0.0 {
                    y += self.label_noise * rng.normal_std();
                }
                if regime.is_unreliable() {
                    y += self.drift_strength;
                }
                (x, Target::Value(y))
            }
            BiasMode::ClassTrigger => {
                let class = u8::from(rng.bernoulli(0.5));
                let sign = if class == 1 { 1.0 } else { -1.0 };
                let dir = self.weight_direction();
                let mut x = rng.normal_vec(self.dim);
                for i in 0..self.dim {
                    x[i] += sign * self.class_sep * dir[i];
                }
                if regime.is_unreliable() && class == self.trigger_class {
                    for i in 0..self.dim {
                        x[i] += self.trigger_magnitude * dir[i];
                    }
                }
                (x, Target::Class(class))
            }
        }
    }

    /// Reference weights the learner is scored against: the generative
    /// weights for regression, the Bayes-optimal logistic weights for the
    /// class task (2 * sep * direction for unit-variance symmetric Gaussians).
    pub fn reference_weights(&self) -> Vec<f64> {
        match self.bias_mode {
            BiasMode::LabelShift => self.true_weights.clone(),
            BiasMode::ClassTrigger => self
                .weight_direction()
                .iter()
                .map(|d| 2.0 * self.class_sep * d)
                .collect(),
        }
    }
}

fn unit_weights(dim: usize) -> Vec<f64> {
    let v = 1.0 / (dim as f64).sqrt();
    vec![v; dim]
}

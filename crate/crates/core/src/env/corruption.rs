//! Stochastic feedback corruption operators.
//!
//! Each operator fires per observation with probability `p` and is designed
//! to keep individual observations locally plausible while biasing the
//! aggregate: sign flips reverse the update signal, feature noise perturbs it,
//! and label flips reverse the target-residual component. Applied only inside
//! unreliable segments by the run loops.

use crate::error::{MtrError, Result};
use crate::rng::RngStream;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorruptionKind {
    AdvantageSignFlip,
    FeatureNoise,
    LabelFlip,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorruptionConfig {
    pub kind: CorruptionKind,
    pub probability: f64,
    #[serde(default)]
    pub noise_scale: f64,
}

impl CorruptionConfig {
    pub fn new(kind: CorruptionKind, probability: f64, noise_scale: f64) -> Result<Self> {
        let cfg = CorruptionConfig {
            kind,
            probability,
            noise_scale,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.probability) {
            return Err(MtrError::validation(format!(
                "corruption probability must lie in [0, 1], got {}",
                self.probability
            )));
        }
        if self.noise_scale < 0.0 || !self.noise_scale.is_finite() {
            return Err(MtrError::validation(format!(
                "corruption noise_scale must be finite and >= 0, got {}",
                self.noise_scale
            )));
        }
        if self.kind == CorruptionKind::FeatureNoise && self.noise_scale == 0.0 {
            return Err(MtrError::validation(
                "feature-noise corruption needs noise_scale > 0",
            ));
        }
        Ok(())
    }
}

/// Corrupt a gradient-like vector: with probability `p` apply the configured
/// transform, otherwise pass it through. For gradient channels both the sign
/// flip and the label flip reverse the vector (a reversed target residual
/// reverses the whole per-sample gradient); feature noise adds an isotropic
/// perturbation.
pub fn corrupt_gradient(g: &[f64], cfg: &CorruptionConfig, rng: &mut RngStream) -> Vec<f64> {
    if !rng.bernoulli(cfg.probability) {
        return g.to_vec();
    }
    match cfg.kind {
        CorruptionKind::AdvantageSignFlip | CorruptionKind::LabelFlip => {
            g.iter().map(|v| -v).collect()
        }
        CorruptionKind::FeatureNoise => g
            .iter()
            .map(|v| v + cfg.noise_scale * rng.normal_std())
            .collect(),
    }
}

/// Corrupt per-step advantage estimates in place, one coin per estimate.
pub fn corrupt_advantages(advantages: &mut [f64], cfg: &CorruptionConfig, rng: &mut RngStream) {
    for a in advantages.iter_mut() {
        if !rng.bernoulli(cfg.probability) {
            continue;
        }
        match cfg.kind {
            CorruptionKind::AdvantageSignFlip | CorruptionKind::LabelFlip => *a = -*a,
            CorruptionKind::FeatureNoise => *a += cfg.noise_scale * rng.normal_std(),
        }
    }
}

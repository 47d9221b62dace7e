//! Instability signals extracted from learning dynamics.
//!
//! The central quantity is the windowed instability statistic: the mean of
//! the last `W` squared parameter increments. Under persistent feedback
//! corruption this statistic shifts between reliability regimes even when
//! every single-step signal stays locally plausible, which is what the
//! detection experiments quantify.

use crate::buffer::TrajectoryBuffer;
use crate::error::{MtrError, Result};
use crate::stats;

/// An ordered list of named scalar features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    entries: Vec<(&'static str, f64)>,
}

impl FeatureVector {
    pub fn new(entries: Vec<(&'static str, f64)>) -> FeatureVector {
        FeatureVector { entries }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.entries
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, v)| *v)
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|(n, _)| *n).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.entries.iter().map(|(_, v)| *v).collect()
    }
}

/// Mean squared increment over whatever the buffer currently holds.
/// `None` on an empty buffer: a missing statistic is reported as absent, not
/// as zero.
pub fn instability(buffer: &TrajectoryBuffer) -> Option<f64> {
    buffer.mean_increment_sq()
}

/// Mean squared increment, only once the window is full.
pub fn full_window_instability(buffer: &TrajectoryBuffer) -> Option<f64> {
    if buffer.is_full() {
        buffer.mean_increment_sq()
    } else {
        None
    }
}

/// One-step record for local (window-of-one) features.
#[derive(Debug, Clone, Copy)]
pub struct StepRecord {
    pub loss: f64,
    pub grad_norm: f64,
    pub increment_sq: f64,
}

/// The degenerate window of size one: the three per-step scalars.
pub fn local_features(step: &StepRecord) -> Result<FeatureVector> {
    if !step.loss.is_finite() || !step.grad_norm.is_finite() || !step.increment_sq.is_finite() {
        return Err(MtrError::invalid("local features require finite inputs"));
    }
    Ok(FeatureVector::new(vec![
        ("loss", step.loss),
        ("grad_norm", step.grad_norm),
        ("one_step_increment", step.increment_sq),
    ]))
}

/// Full-window trajectory features: the instability statistic, the variance
/// of squared increments, the mean cosine between consecutive increment
/// vectors, and the mean loss. `None` until the window is full.
pub fn trajectory_features(buffer: &TrajectoryBuffer) -> Option<FeatureVector> {
    if !buffer.is_full() {
        return None;
    }
    let incs: Vec<f64> = buffer.increments_sq().collect();
    let losses: Vec<f64> = buffer.scalars().map(|s| s.loss).collect();
    Some(FeatureVector::new(vec![
        ("instability", stats::mean(&incs)),
        ("increment_variance", stats::variance(&incs)),
        ("direction_consistency", direction_consistency(buffer)),
        ("mean_loss", stats::mean(&losses)),
    ]))
}

/// Mean cosine between consecutive increment vectors. Pairs where either
/// vector is zero contribute 0, keeping the feature bounded and scale-free.
pub fn direction_consistency(buffer: &TrajectoryBuffer) -> f64 {
    let vecs: Vec<&Vec<f64>> = buffer.increment_vecs().collect();
    if vecs.len() < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    for pair in vecs.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if a.len() != b.len() {
            continue;
        }
        let na = stats::norm(a);
        let nb = stats::norm(b);
        if na > 0.0 && nb > 0.0 {
            total += stats::dot(a, b) / (na * nb);
        }
    }
    total / (vecs.len() - 1) as f64
}

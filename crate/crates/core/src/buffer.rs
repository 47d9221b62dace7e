//! Ring buffer over recent parameter increments.
//!
//! The buffer keeps the last `window` squared parameter increments together
//! with the per-step scalars (loss, gradient norm) and the raw increment
//! vectors used for directional features. Eviction is FIFO.

use crate::error::{MtrError, Result};
use std::collections::VecDeque;

#[derive(Debug, Clone, PartialEq)]
pub struct StepScalars {
    pub loss: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone)]
pub struct TrajectoryBuffer {
    window: usize,
    increments_sq: VecDeque<f64>,
    scalars: VecDeque<StepScalars>,
    increment_vecs: VecDeque<Vec<f64>>,
}

impl TrajectoryBuffer {
    pub fn new(window: usize) -> Result<TrajectoryBuffer> {
        if window == 0 {
            return Err(MtrError::invalid("buffer window must be >= 1"));
        }
        Ok(TrajectoryBuffer {
            window,
            increments_sq: VecDeque::with_capacity(window),
            scalars: VecDeque::with_capacity(window),
            increment_vecs: VecDeque::with_capacity(window),
        })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn len(&self) -> usize {
        self.increments_sq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.increments_sq.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.len() == self.window
    }

    /// Append one step; the oldest entry is evicted once the window is full.
    pub fn push_step(
        &mut self,
        increment_sq: f64,
        loss: f64,
        grad_norm: f64,
        increment_vec: &[f64],
    ) -> Result<()> {
        if !increment_sq.is_finite() || increment_sq < 0.0 {
            return Err(MtrError::invalid(format!(
                "squared increment must be finite and >= 0, got {increment_sq}"
            )));
        }
        if !loss.is_finite() || !grad_norm.is_finite() {
            return Err(MtrError::invalid(
                "loss and gradient norm pushed into the buffer must be finite",
            ));
        }
        if self.is_full() {
            self.increments_sq.pop_front();
            self.scalars.pop_front();
            self.increment_vecs.pop_front();
        }
        self.increments_sq.push_back(increment_sq);
        self.scalars.push_back(StepScalars { loss, grad_norm });
        self.increment_vecs.push_back(increment_vec.to_vec());
        Ok(())
    }

    pub fn increments_sq(&self) -> impl Iterator<Item = f64> + '_ {
        self.increments_sq.iter().copied()
    }

    pub fn scalars(&self) -> impl Iterator<Item = &StepScalars> {
        self.scalars.iter()
    }

    pub fn increment_vecs(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.increment_vecs.iter()
    }

    /// Mean of the stored squared increments; `None` when empty.
    pub fn mean_increment_sq(&self) -> Option<f64> {
        if self.is_empty() {
            return None;
        }
        Some(self.increments_sq.iter().sum::<f64>() / self.len() as f64)
    }
}

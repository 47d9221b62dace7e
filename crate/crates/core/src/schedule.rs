//! Latent reliability schedules.
//!
//! A [`RegimeSchedule`] maps each step index to a latent reliability state
//! (reliable or unreliable feedback) and an experiment phase label. Segments
//! are contiguous, non-overlapping, and must each persist for a configured
//! minimum number of steps so that windowed trajectory statistics have time
//! to converge within a regime.

use crate::error::{MtrError, Result};
use serde::{Deserialize, Serialize};
use std::fmt;

/// Latent reliability state of the feedback channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Reliable,
    Unreliable,
}

impl Regime {
    pub fn from_u8(v: u8) -> Result<Regime> {
        match v {
            0 => Ok(Regime::Reliable),
            1 => Ok(Regime::Unreliable),
            _ => Err(MtrError::invalid(format!("regime must be 0 or 1, got {v}"))),
        }
    }

    pub fn as_u8(self) -> u8 {
        match self {
            Regime::Reliable => 0,
            Regime::Unreliable => 1,
        }
    }

    pub fn is_unreliable(self) -> bool {
        matches!(self, Regime::Unreliable)
    }
}

/// Experiment phase label attached to a segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    Clean,
    Corrupt,
    Recovery,
}

impl Phase {
    pub fn parse(s: &str) -> Result<Phase> {
        match s {
            "Clean" => Ok(Phase::Clean),
            "Corrupt" => Ok(Phase::Corrupt),
            "Recovery" => Ok(Phase::Recovery),
            other => Err(MtrError::invalid(format!("unknown phase label {other:?}"))),
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Phase::Clean => "Clean",
            Phase::Corrupt => "Corrupt",
            Phase::Recovery => "Recovery",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub start: usize,
    pub len: usize,
    pub regime: Regime,
    pub phase: Phase,
}

impl Segment {
    pub fn end(&self) -> usize {
        self.start + self.len
    }

    pub fn contains(&self, step: usize) -> bool {
        step >= self.start && step < self.end()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegimeSchedule {
    segments: Vec<Segment>,
    total: usize,
}

impl RegimeSchedule {
    /// Build from `(len, regime, phase)` triples laid out back to back.
    pub fn from_parts(parts: &[(usize, Regime, Phase)]) -> Result<RegimeSchedule> {
        if parts.is_empty() {
            return Err(MtrError::validation("schedule needs at least one segment"));
        }
        let mut segments = Vec::with_capacity(parts.len());
        let mut start = 0;
        for &(len, regime, phase) in parts {
            if len == 0 {
                return Err(MtrError::validation("schedule segment length must be > 0"));
            }
            segments.push(Segment {
                start,
                len,
                regime,
                phase,
            });
            start += len;
        }
        Ok(RegimeSchedule {
            segments,
            total: start,
        })
    }

    /// Three equal phases: clean, corrupt, recovery.
    pub fn staged(phase_len: usize) -> Result<RegimeSchedule> {
        Self::from_parts(&[
            (phase_len, Regime::Reliable, Phase::Clean),
            (phase_len, Regime::Unreliable, Phase::Corrupt),
            (phase_len, Regime::Reliable, Phase::Recovery),
        ])
    }

    /// A clean warmup followed by `pairs` unreliable/reliable segment pairs.
    pub fn alternating(warmup: usize, segment_len: usize, pairs: usize) -> Result<RegimeSchedule> {
        if pairs == 0 {
            return Err(MtrError::validation(
                "alternating schedule needs pairs >= 1",
            ));
        }
        let mut parts = vec![(warmup, Regime::Reliable, Phase::Clean)];
        for _ in 0..pairs {
            parts.push((segment_len, Regime::Unreliable, Phase::Corrupt));
            parts.push((segment_len, Regime::Reliable, Phase::Clean));
        }
        Self::from_parts(&parts)
    }

    /// A single segment.
    pub fn single(total: usize, regime: Regime, phase: Phase) -> Result<RegimeSchedule> {
        Self::from_parts(&[(total, regime, phase)])
    }

    /// Clean up to `onset_at`, unreliable for the remainder.
    pub fn onset(total: usize, onset_at: usize) -> Result<RegimeSchedule> {
        if onset_at == 0 || onset_at >= total {
            return Err(MtrError::validation(format!(
                "onset must lie strictly inside the run: got onset {onset_at} of {total}"
            )));
        }
        Self::from_parts(&[
            (onset_at, Regime::Reliable, Phase::Clean),
            (total - onset_at, Regime::Unreliable, Phase::Corrupt),
        ])
    }

    pub fn total_steps(&self) -> usize {
        self.total
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// The segment containing `step`.
    pub fn phase_of(&self, step: usize) -> Result<(Regime, Phase)> {
        let seg = self.segment_of(step)?;
        Ok((seg.regime, seg.phase))
    }

    pub fn segment_of(&self, step: usize) -> Result<&Segment> {
        if step >= self.total {
            return Err(MtrError::StepOutOfRange {
                step,
                total: self.total,
            });
        }
        let idx = self.segments.partition_point(|seg| seg.end() <= step);
        Ok(&self.segments[idx])
    }

    /// Steps elapsed since the start of the segment containing `step`.
    pub fn steps_into_segment(&self, step: usize) -> Result<usize> {
        Ok(step - self.segment_of(step)?.start)
    }

    /// Check that every segment persists for at least `min_len` steps.
    pub fn check_min_persistence(&self, min_len: usize) -> Result<()> {
        for seg in &self.segments {
            if seg.len < min_len {
                return Err(MtrError::validation(format!(
                    "segment starting at {} has length {} below the minimum persistence {}",
                    seg.start, seg.len, min_len
                )));
            }
        }
        Ok(())
    }

    /// True when the schedule contains all three phase labels.
    pub fn has_all_phases(&self) -> bool {
        let mut seen = [false; 3];
        for seg in &self.segments {
            seen[match seg.phase {
                Phase::Clean => 0,
                Phase::Corrupt => 1,
                Phase::Recovery => 2,
            }] = true;
        }
        seen.iter().all(|&s| s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_phase() -> RegimeSchedule {
        RegimeSchedule::from_parts(&[
            (100, Regime::Reliable, Phase::Clean),
            (100, Regime::Unreliable, Phase::Corrupt),
            (100, Regime::Reliable, Phase::Recovery),
        ])
        .unwrap()
    }

    #[test]
    fn phase_of_returns_containing_segment() {
        let s = three_phase();
        assert_eq!(s.phase_of(50).unwrap(), (Regime::Reliable, Phase::Clean));
        assert_eq!(
            s.phase_of(150).unwrap(),
            (Regime::Unreliable, Phase::Corrupt)
        );
        assert_eq!(
            s.phase_of(299).unwrap(),
            (Regime::Reliable, Phase::Recovery)
        );
    }

    #[test]
    fn step_past_end_is_an_error() {
        let s = three_phase();
        assert!(matches!(
            s.phase_of(300),
            Err(MtrError::StepOutOfRange {
                step: 300,
                total: 300
            })
        ));
    }

    #[test]
    fn segments_partition_the_run() {
        let s = RegimeSchedule::alternating(300, 250, 5).unwrap();
        let sum: usize = s.segments().iter().map(|seg| seg.len).sum();
        assert_eq!(sum, s.total_steps());
        // contiguity: each segment starts where the previous one ended
        for pair in s.segments().windows(2) {
            assert_eq!(pair[0].end(), pair[1].start);
        }
    }

    #[test]
    fn staged_order_is_clean_corrupt_recovery() {
        let s = RegimeSchedule::staged(2000).unwrap();
        let phases: Vec<Phase> = s.segments().iter().map(|seg| seg.phase).collect();
        assert_eq!(phases, vec![Phase::Clean, Phase::Corrupt, Phase::Recovery]);
        assert!(s.has_all_phases());
    }

    #[test]
    fn min_persistence_is_enforced() {
        let s = three_phase();
        assert!(s.check_min_persistence(100).is_ok());
        assert!(s.check_min_persistence(101).is_err());
    }
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used when a time sits on a phase boundary.
pub const BOUNDARY_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhaseKind {
    Stance,
    Swing,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub kind: PhaseKind,
    pub duration: f64,
}

/// A phase placed on the clip timeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub kind: PhaseKind,
    pub start: f64,
    pub end: f64,
}

/// Fixed contact timing for both feet (left, right) plus the forward speed command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaitSchedule {
    pub name: String,
    pub duration: f64,
    pub feet: [Vec<Phase>; 2],
    pub command: f64,
}

impl GaitSchedule {
    pub fn new(name: &str, duration: f64, feet: [Vec<Phase>; 2], command: f64) -> Result<Self> {
        let s = GaitSchedule { name: name.to_string(), duration, feet, command };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0) || !self.command.is_finite() {
            return Err(Error::Config(format!("schedule `{}`: bad duration or command", self.name)));
        }
        for (i, phases) in self.feet.iter().enumerate() {
            if phases.is_empty() || phases.iter().any(|p| !(p.duration > 0.0)) {
                return Err(Error::Config(format!("schedule `{}`: foot {i} has empty or non-positive phases", self.name)));
            }
            let total: f64 = phases.iter().map(|p| p.duration).sum();
            if (total - self.duration).abs() > 1e-9 * self.duration.max(1.0) {
                return Err(Error::Config(format!(
                    "schedule `{}`: foot {i} phases sum to {total}, expected {}",
                    self.name, self.duration
                )));
            }
        }
        Ok(())
    }

    /// Both feet in stance for the whole clip.
    pub fn standing(duration: f64) -> Result<Self> {
        let stance = vec![Phase { kind: PhaseKind::Stance, duration }];
        GaitSchedule::new("stand", duration, [stance.clone(), stance], 0.0)
    }

    /// Alternating gait: each foot is in stance for `duty * period` per cycle,
    /// the right foot half a period behind the left.
    pub fn periodic(name: &str, duration: f64, period: f64, duty: f64, command: f64) -> Result<Self> {
        if !(period > 0.0) || !(duty > 0.0 && duty < 1.0) {
            return Err(Error::Config(format!("schedule `{name}`: period must be > 0 and duty in (0, 1)")));
        }
        let foot = |offset: f64| {
            let mut cuts = vec![0.0, duration];
            let mut k = -1.0;
            while (k + offset) * period < duration {
                for c in [(k + offset) * period, (k + offset + duty) * period] {
                    if c > BOUNDARY_EPS && c < duration - BOUNDARY_EPS {
                        cuts.push(c);
                    }
                }
                k += 1.0;
            }
            cuts.sort_by(|a, b| a.total_cmp(b));
            cuts.dedup_by(|a, b| (*a - *b).abs() < BOUNDARY_EPS);
            let mut phases: Vec<Phase> = Vec::new();
            for w in cuts.windows(2) {
                let mid = 0.5 * (w[0] + w[1]) / period - offset;
                let kind = if mid.rem_euclid(1.0) < duty { PhaseKind::Stance } else { PhaseKind::Swing };
                match phases.last_mut() {
                    Some(p) if p.kind == kind => p.duration += w[1] - w[0],
                    _ => phases.push(Phase { kind, duration: w[1] - w[0] }),
                }
            }
            phases
        };
        GaitSchedule::new(name, duration, [foot(0.0), foot(0.5)], command)
    }

    pub fn intervals(&self, foot: usize) -> Vec<Interval> {
        let mut t = 0.0;
        self.feet[foot]
            .iter()
            .map(|p| {
                let iv = Interval { kind: p.kind, start: t, end: t + p.duration };
                t += p.duration;
                iv
            })
            .collect()
    }

    /// Stance test; times on a stance boundary count as stance.
    pub fn in_stance(&self, foot: usize, t: f64) -> bool {
        self.intervals(foot)
            .iter()
            .any(|iv| iv.kind == PhaseKind::Stance && t >= iv.start - BOUNDARY_EPS && t <= iv.end + BOUNDARY_EPS)
    }
}

/// Clip length of the generated references (s).
pub const CLIP_DURATION: f64 = 2.4;

/// Walk at 0.5 m/s, run at 1.5 m/s and run at 2.0 m/s.
pub fn standard_clips() -> Vec<GaitSchedule> {
    [("walk_0.5", 0.8, 0.6, 0.5), ("run_1.5", 0.6, 0.4, 1.5), ("run_2.0", 0.48, 0.35, 2.0)]
        .iter()
        .map(|&(name, period, duty, v)| GaitSchedule::periodic(name, CLIP_DURATION, period, duty, v).expect("valid clip"))
        .collect()
}

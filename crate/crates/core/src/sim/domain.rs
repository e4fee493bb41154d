//! Per-episode physical parameters and their randomization ranges.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A force on the trunk centre of mass starting at `time` for `duration`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PushEvent {
    pub time: f64,
    pub force: [f64; 2],
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainParams {
    pub link_mass_scale: f64,
    pub payload_mass: f64,
    /// Payload position along the trunk's forward axis (m).
    pub payload_offset: f64,
    pub friction: f64,
    pub restitution: f64,
    pub kp_scale: f64,
    pub kd_scale: f64,
    pub pushes: Vec<PushEvent>,
}

impl DomainParams {
    pub fn nominal() -> Self {
        DomainParams {
            link_mass_scale: 1.0,
            payload_mass: 0.0,
            payload_offset: 0.0,
            friction: 1.0,
            restitution: 0.0,
            kp_scale: 1.0,
            kd_scale: 1.0,
            pushes: Vec::new(),
        }
    }
}

impl Default for DomainParams {
    fn default() -> Self {
        Self::nominal()
    }
}

pub type Range = [f64; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DomainRanges {
    pub link_mass_scale: Range,
    pub payload_mass: Range,
    pub payload_offset: Range,
    pub friction: Range,
    pub restitution: Range,
    pub kp_scale: Range,
    pub kd_scale: Range,
    /// Seconds between random pushes.
    pub push_interval: Range,
    /// Horizontal push force magnitude (N); the sign is random.
    pub push_force: Range,
    pub push_duration: Range,
    /// Pushes are scheduled up to this time.
    pub push_horizon: f64,
}

impl Default for DomainRanges {
    fn default() -> Self {
        DomainRanges {
            link_mass_scale: [0.8, 1.2],
            payload_mass: [0.0, 3.0],
            payload_offset: [-0.1, 0.1],
            friction: [0.05, 2.75],
            restitution: [0.0, 1.0],
            kp_scale: [0.8, 1.2],
            kd_scale: [0.8, 1.2],
            push_interval: [4.0, 8.0],
            push_force: [0.0, 40.0],
            push_duration: [0.1, 0.1],
            push_horizon: 20.0,
        }
    }
}

impl DomainRanges {
    /// Every range collapsed onto the nominal value, no pushes.
    pub fn nominal() -> Self {
        DomainRanges {
            link_mass_scale: [1.0, 1.0],
            payload_mass: [0.0, 0.0],
            payload_offset: [0.0, 0.0],
            friction: [1.0, 1.0],
            restitution: [0.0, 0.0],
            kp_scale: [1.0, 1.0],
            kd_scale: [1.0, 1.0],
            push_interval: [1.0, 1.0],
            push_force: [0.0, 0.0],
            push_duration: [0.1, 0.1],
            push_horizon: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let named = [
            ("link_mass_scale", self.link_mass_scale),
            ("payload_mass", self.payload_mass),
            ("payload_offset", self.payload_offset),
            ("friction", self.friction),
            ("restitution", self.restitution),
            ("kp_scale", self.kp_scale),
            ("kd_scale", self.kd_scale),
            ("push_interval", self.push_interval),
            ("push_force", self.push_force),
            ("push_duration", self.push_duration),
        ];
        for (name, [lo, hi]) in named {
            if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::Config(format!("range `{name}` is malformed: [{lo}, {hi}]")));
            }
        }
        if self.friction[0] < 0.0 || self.link_mass_scale[0] <= 0.0 || self.payload_mass[0] < 0.0 {
            return Err(Error::Config("friction, mass scale and payload must be non-negative".into()));
        }
        if self.push_interval[0] <= 0.0 || self.push_duration[0] <= 0.0 {
            return Err(Error::Config("push interval and duration must be positive".into()));
        }
        Ok(())
    }
}

fn uniform(rng: &mut ChaCha8Rng, [lo, hi]: Range) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..=hi)
    }
}

pub fn randomize_domain(seed: u64, ranges: &DomainRanges) -> Result<DomainParams> {
    ranges.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = DomainParams {
        link_mass_scale: uniform(&mut rng, ranges.link_mass_scale),
        payload_mass: uniform(&mut rng, ranges.payload_mass),
        payload_offset: uniform(&mut rng, ranges.payload_offset),
        friction: uniform(&mut rng, ranges.friction),
        restitution: uniform(&mut rng, ranges.restitution),
        kp_scale: uniform(&mut rng, ranges.kp_scale),
        kd_scale: uniform(&mut rng, ranges.kd_scale),
        pushes: Vec::new(),
    };
    if ranges.push_force[1] > 0.0 {
        let mut t = uniform(&mut rng, ranges.push_interval);
        while t < ranges.push_horizon {
            let magnitude = uniform(&mut rng, ranges.push_force);
            let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let duration = uniform(&mut rng, ranges.push_duration);
            params.pushes.push(PushEvent { time: t, force: [sign * magnitude, 0.0], duration });
            t += uniform(&mut rng, ranges.push_interval);
        }
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inside(v: f64, [lo, hi]: Range) -> bool {
        lo <= v && v <= hi
    }

    #[test]
    fn samples_stay_inside_ranges() {
        let r = DomainRanges::default();
        for seed in 0..10_000 {
            let d = randomize_domain(seed, &r).unwrap();
            assert!(inside(d.link_mass_scale, [0.8, 1.2]));
            assert!(inside(d.payload_mass, [0.0, 3.0]));
            assert!(inside(d.friction, [0.05, 2.75]));
            assert!(inside(d.restitution, [0.0, 1.0]));
            assert!(inside(d.kp_scale, [0.8, 1.2]));
            assert!(inside(d.kd_scale, [0.8, 1.2]));
            assert!(inside(d.payload_offset, r.payload_offset));
        }
    }

    #[test]
    fn same_seed_same_params() {
        let r = DomainRanges::default();
        assert_eq!(randomize_domain(77, &r).unwrap(), randomize_domain(77, &r).unwrap());
        assert_ne!(randomize_domain(77, &r).unwrap(), randomize_domain(78, &r).unwrap());
    }

    #[test]
    fn degenerate_range_is_exact() {
        let r = DomainRanges { friction: [0.7, 0.7], ..DomainRanges::default() };
        for seed in 0..20 {
            assert_eq!(randomize_domain(seed, &r).unwrap().friction, 0.7);
        }
        assert_eq!(randomize_domain(3, &DomainRanges::nominal()).unwrap(), DomainParams::nominal());
    }

    #[test]
    fn malformed_range_is_config_error() {
        let r = DomainRanges { kp_scale: [1.2, 0.8], ..DomainRanges::default() };
        assert!(matches!(randomize_domain(0, &r), Err(Error::Config(_))));
    }

    #[test]
    fn push_schedule_is_increasing() {
        let d = randomize_domain(5, &DomainRanges::default()).unwrap();
        assert!(!d.pushes.is_empty());
        assert!(d.pushes.windows(2).all(|w| w[0].time < w[1].time));
    }
}

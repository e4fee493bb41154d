//! Observation vectors seen by the teacher and, in part, by the student.

use crate::sim::{SimState, Simulator, N_BODIES};
use crate::terrain::{height_scan, HeightField, SCAN_POINTS};

pub const PROPRIO_DIM: usize = 17;
pub const PRIVILEGED_DIM: usize = 13;
pub const TERRAIN_DIM: usize = SCAN_POINTS;

/// Scan value treated as zero by the terrain encoder input (m).
const SCAN_CENTER: f64 = 0.4;
const SCAN_GAIN: f64 = 5.0;
const ANG_VEL_GAIN: f64 = 0.25;
const JOINT_VEL_GAIN: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProprioObs {
    pub gravity: [f64; 2],
    pub lin_vel: [f64; 2],
    pub ang_vel: f64,
    pub joints: [f64; 4],
    pub joint_vel: [f64; 4],
    pub prev_action: [f64; 4],
}

impl ProprioObs {
    pub fn build(sim: &Simulator, state: &SimState, prev_action: [f64; 4]) -> Self {
        let base = sim.base_state(state);
        ProprioObs {
            gravity: base.projected_gravity,
            lin_vel: base.velocity,
            ang_vel: base.pitch_rate,
            joints: state.joints(),
            joint_vel: state.joint_velocities(),
            prev_action,
        }
    }

    pub fn to_array(&self) -> [f64; PROPRIO_DIM] {
        let mut v = [0.0; PROPRIO_DIM];
        v[0..2].copy_from_slice(&self.gravity);
        v[2..4].copy_from_slice(&self.lin_vel);
        v[4] = self.ang_vel;
        v[5..9].copy_from_slice(&self.joints);
        v[9..13].copy_from_slice(&self.joint_vel);
        v[13..17].copy_from_slice(&self.prev_action);
        v
    }

    /// Network input: joints relative to `nominal`, velocities rescaled.
    pub fn input(&self, nominal: &[f64; 4]) -> [f64; PROPRIO_DIM] {
        let mut v = self.to_array();
        v[4] *= ANG_VEL_GAIN;
        for j in 0..4 {
            v[5 + j] -= nominal[j];
            v[9 + j] *= JOINT_VEL_GAIN;
        }
        v
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|x| x.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrivilegedObs {
    pub friction: f64,
    pub restitution: f64,
    pub foot_force: [[f64; 2]; 2],
    pub external_force: [f64; 2],
    pub collisions: [f64; N_BODIES],
}

impl PrivilegedObs {
    pub fn build(sim: &Simulator, state: &SimState) -> Self {
        PrivilegedObs {
            friction: sim.domain.friction,
            restitution: sim.domain.restitution,
            foot_force: state.foot_force,
            external_force: state.external_force,
            collisions: state.body_contact.map(|c| if c { 1.0 } else { 0.0 }),
        }
    }

    pub fn to_array(&self) -> [f64; PRIVILEGED_DIM] {
        let mut v = [0.0; PRIVILEGED_DIM];
        v[0] = self.friction;
        v[1] = self.restitution;
        v[2..4].copy_from_slice(&self.foot_force[0]);
        v[4..6].copy_from_slice(&self.foot_force[1]);
        v[6..8].copy_from_slice(&self.external_force);
        v[8..13].copy_from_slice(&self.collisions);
        v
    }

    /// Network input with forces expressed in units of `weight`.
    pub fn input(&self, weight: f64) -> [f64; PRIVILEGED_DIM] {
        let mut v = self.to_array();
        for x in &mut v[2..8] {
            *x /= weight;
        }
        v
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|x| x.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TerrainObs {
    pub heights: [f64; TERRAIN_DIM],
}

impl TerrainObs {
    pub fn build(sim: &Simulator, state: &SimState, terrain: &HeightField) -> Self {
        let base = sim.base_state(state);
        TerrainObs { heights: height_scan(terrain, base.position[0], base.position[1]) }
    }

    pub fn input(&self) -> [f64; TERRAIN_DIM] {
        self.heights.map(|h| ((h - SCAN_CENTER) * SCAN_GAIN).clamp(-5.0, 5.0))
    }

    pub fn is_finite(&self) -> bool {
        self.heights.iter().all(|x| x.is_finite())
    }
}

/// All three observation groups for one environment at one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub proprio: ProprioObs,
    pub privileged: PrivilegedObs,
    pub terrain: TerrainObs,
}

impl Observation {
    pub fn build(sim: &Simulator, state: &SimState, terrain: &HeightField, prev_action: [f64; 4]) -> Self {
        Observation {
            proprio: ProprioObs::build(sim, state, prev_action),
            privileged: PrivilegedObs::build(sim, state),
            terrain: TerrainObs::build(sim, state, terrain),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.proprio.is_finite() && self.privileged.is_finite() && self.terrain.is_finite()
    }
}

use serde::{Deserialize, Serialize};

use super::domain::DomainParams;
use crate::error::{Error, Result};

/// Physical description of the planar biped: a trunk standing on two
/// thigh/calf legs with point feet.
///
/// Joint vectors are ordered `[left thigh, left calf, right thigh, right calf]`.
/// Thigh angles are measured from the trunk's downward axis, calf angles
/// relative to the thigh; a positive calf angle bends the knee backwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobotModel {
    pub trunk_mass: f64,
    pub thigh_mass: f64,
    pub calf_mass: f64,
    pub trunk_length: f64,
    pub thigh_length: f64,
    pub calf_length: f64,
    /// Trunk centre of mass above the hip, along the trunk axis.
    pub trunk_com_height: f64,
    pub trunk_inertia: f64,
    pub thigh_inertia: f64,
    pub calf_inertia: f64,
    pub thigh_limits: [f64; 2],
    pub calf_limits: [f64; 2],
    pub torque_limit: f64,
    pub nominal_thigh: f64,
    pub nominal_calf: f64,
    pub foot_radius: f64,
    pub kp: f64,
    pub kd: f64,
}

impl Default for RobotModel {
    fn default() -> Self {
        RobotModel {
            trunk_mass: 6.0,
            thigh_mass: 1.0,
            calf_mass: 0.5,
            trunk_length: 0.2,
            thigh_length: 0.2,
            calf_length: 0.2,
            trunk_com_height: 0.1,
            trunk_inertia: 0.04,
            thigh_inertia: 1.0 * 0.2 * 0.2 / 12.0,
            calf_inertia: 0.5 * 0.2 * 0.2 / 12.0,
            thigh_limits: [-1.8, 1.8],
            calf_limits: [0.05, 2.6],
            torque_limit: 20.0,
            nominal_thigh: -0.35,
            nominal_calf: 0.7,
            foot_radius: 0.02,
            kp: 20.0,
            kd: 0.5,
        }
    }
}

impl RobotModel {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.trunk_mass,
            self.thigh_mass,
            self.calf_mass,
            self.trunk_length,
            self.thigh_length,
            self.calf_length,
            self.trunk_inertia,
            self.thigh_inertia,
            self.calf_inertia,
            self.torque_limit,
            self.kp,
            self.kd,
        ];
        if positive.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Config("robot masses, lengths, inertias, gains must be > 0".into()));
        }
        if !(self.thigh_limits[0] < self.thigh_limits[1]) || !(self.calf_limits[0] < self.calf_limits[1]) {
            return Err(Error::Config("joint lower limit must be below upper limit".into()));
        }
        if self.foot_radius < 0.0 {
            return Err(Error::Config("foot radius must be >= 0".into()));
        }
        Ok(())
    }

    pub fn nominal_joints(&self) -> [f64; 4] {
        [self.nominal_thigh, self.nominal_calf, self.nominal_thigh, self.nominal_calf]
    }

    pub fn joint_limits(&self) -> [[f64; 2]; 4] {
        [self.thigh_limits, self.calf_limits, self.thigh_limits, self.calf_limits]
    }

    pub fn total_mass(&self) -> f64 {
        self.trunk_mass + 2.0 * (self.thigh_mass + self.calf_mass)
    }

    pub fn leg_reach(&self) -> f64 {
        self.thigh_length + self.calf_length
    }
}

/// Mass properties after domain randomization. Body order: trunk, left
/// thigh, left calf, right thigh, right calf.
#[derive(Debug, Clone, PartialEq)]
pub struct MassProperties {
    pub mass: [f64; 5],
    pub inertia: [f64; 5],
    /// Centre of mass in the body frame. The trunk frame has x forward and z
    /// up along the trunk; leg frames hang down (`(0, -s)` is `s` along the link).
    pub local_com: [[f64; 2]; 5],
    pub total_mass: f64,
}

impl MassProperties {
    pub fn new(model: &RobotModel, domain: &DomainParams) -> Self {
        let s = domain.link_mass_scale;
        let trunk_m = model.trunk_mass * s;
        let payload = domain.payload_mass;
        let trunk_com = [0.0, model.trunk_com_height];
        let payload_at = [domain.payload_offset, model.trunk_com_height];
        let m0 = trunk_m + payload;
        let com = [
            (trunk_m * trunk_com[0] + payload * payload_at[0]) / m0,
            (trunk_m * trunk_com[1] + payload * payload_at[1]) / m0,
        ];
        let d2 = |p: [f64; 2]| (p[0] - com[0]).powi(2) + (p[1] - com[1]).powi(2);
        let trunk_i = model.trunk_inertia * s + trunk_m * d2(trunk_com) + payload * d2(payload_at);

        let thigh = [0.0, -0.5 * model.thigh_length];
        let calf = [0.0, -0.5 * model.calf_length];
        let mass = [
            m0,
            model.thigh_mass * s,
            model.calf_mass * s,
            model.thigh_mass * s,
            model.calf_mass * s,
        ];
        let inertia = [
            trunk_i,
            model.thigh_inertia * s,
            model.calf_inertia * s,
            model.thigh_inertia * s,
            model.calf_inertia * s,
        ];
        MassProperties {
            mass,
            inertia,
            local_com: [com, thigh, calf, thigh, calf],
            total_mass: mass.iter().sum(),
        }
    }
}

use serde::{Deserialize, Serialize};

/// Penalty contact constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContactParams {
    /// Normal spring stiffness (N/m).
    pub stiffness: f64,
    /// Normal damping at zero restitution (N·s/m); scaled by `1 - restitution`.
    pub damping: f64,
    /// Viscous tangential coefficient (N·s/m) before the friction clamp.
    pub tangential: f64,
}

impl Default for ContactParams {
    fn default() -> Self {
        ContactParams { stiffness: 1e4, damping: 200.0, tangential: 300.0 }
    }
}

/// Contact-frame force `[tangential, normal]` at one point.
///
/// `penetration` is positive when the point is below the surface and
/// `penetration_rate` positive while it sinks further in.
pub fn contact_force(
    penetration: f64,
    penetration_rate: f64,
    tangential_velocity: f64,
    friction: f64,
    restitution: f64,
    params: &ContactParams,
) -> [f64; 2] {
    if penetration <= 0.0 {
        return [0.0, 0.0];
    }
    let damping = params.damping * (1.0 - restitution).clamp(0.0, 1.0);
    let normal = (params.stiffness * penetration + damping * penetration_rate).max(0.0);
    let bound = friction * normal;
    let tangential = -(params.tangential * tangential_velocity).clamp(-bound, bound);
    [tangential, normal]
}

/// Joint PD law with torque saturation.
pub fn pd_torque(
    offsets: &[f64; 4],
    nominal: &[f64; 4],
    q: &[f64; 4],
    qd: &[f64; 4],
    kp: f64,
    kd: f64,
    torque_limit: f64,
) -> [f64; 4] {
    let mut tau = [0.0; 4];
    for i in 0..4 {
        let t = kp * (nominal[i] + offsets[i] - q[i]) - kd * qd[i];
        tau[i] = t.clamp(-torque_limit, torque_limit);
    }
    tau
}

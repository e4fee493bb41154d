use crate::error::{Error, Result};
use crate::sim::{rotate, Vec2};

/// Planar two-link inverse kinematics, knee-backward branch.
///
/// `hip` and `foot` are world positions and `pitch` the trunk angle. Returns
/// `(thigh, calf)` joint angles relative to the trunk and thigh.
pub fn inverse_kinematics(hip: Vec2, pitch: f64, foot: Vec2, thigh: f64, calf: f64) -> Result<(f64, f64)> {
    let d = [foot[0] - hip[0], foot[1] - hip[1]];
    let dist = d[0].hypot(d[1]);
    let reach = thigh + calf;
    if dist > reach * (1.0 + 1e-12) || dist < (thigh - calf).abs() {
        return Err(Error::Reach { distance: dist, reach });
    }
    let cos_knee = ((dist * dist - thigh * thigh - calf * calf) / (2.0 * thigh * calf)).clamp(-1.0, 1.0);
    let q_calf = cos_knee.acos();
    // leg vector in the thigh frame at zero thigh angle
    let v = [calf * q_calf.sin(), -thigh - calf * q_calf.cos()];
    let abs_thigh = d[1].atan2(d[0]) - v[1].atan2(v[0]);
    Ok((wrap(abs_thigh - pitch), q_calf))
}

/// Foot position for given joint angles.
pub fn forward_kinematics(hip: Vec2, pitch: f64, q_thigh: f64, q_calf: f64, thigh: f64, calf: f64) -> Vec2 {
    let a = pitch + q_thigh;
    let knee = rotate(a, [0.0, -thigh]);
    let shin = rotate(a + q_calf, [0.0, -calf]);
    [hip[0] + knee[0] + shin[0], hip[1] + knee[1] + shin[1]]
}

fn wrap(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut x = (a + std::f64::consts::PI) % two_pi;
    if x < 0.0 {
        x += two_pi;
    }
    x - std::f64::consts::PI
}

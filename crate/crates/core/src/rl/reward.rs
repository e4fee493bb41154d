use serde::{Deserialize, Serialize};

/// Velocity-tracking reward with an exponential kernel on each error.
pub fn task_reward(cmd_vx: f64, vx: f64, cmd_w: f64, w: f64, weight_v: f64, weight_w: f64) -> f64 {
    weight_v * (-(cmd_vx - vx).abs()).exp() + weight_w * (-(cmd_w - w).abs()).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardWeights {
    pub tracking_v: f64,
    pub tracking_w: f64,
    pub action_rate: f64,
    pub torque: f64,
    pub vertical_velocity: f64,
    pub joint_limit: f64,
    /// Multiplier on the style term before composition.
    pub style: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights {
            tracking_v: 1.0,
            tracking_w: 0.5,
            action_rate: 0.01,
            torque: 2e-4,
            vertical_velocity: 1.0,
            joint_limit: 5.0,
            style: 1.0,
        }
    }
}

/// Summed squared excursion of `joints` beyond `limits`.
pub fn limit_violation(joints: &[f64; 4], limits: &[[f64; 2]; 4]) -> f64 {
    joints
        .iter()
        .zip(limits)
        .map(|(q, [lo, hi])| (q - hi).max(0.0) + (lo - q).max(0.0))
        .map(|e| e * e)
        .sum()
}

/// Penalties on action rate, torque, vertical base velocity and joint-limit
/// excursion; never positive.
pub fn regularization_reward(
    weights: &RewardWeights,
    vz: f64,
    action: &[f64; 4],
    prev_action: &[f64; 4],
    torques: &[f64; 4],
    limit_violation: f64,
) -> f64 {
    let rate: f64 = action.iter().zip(prev_action).map(|(a, b)| (a - b) * (a - b)).sum();
    let tau: f64 = torques.iter().map(|t| t * t).sum();
    -weights.action_rate * rate - weights.torque * tau - weights.vertical_velocity * vz * vz
        - weights.joint_limit * limit_violation
}

pub fn compose_reward(task: f64, style: f64, regularization: f64) -> f64 {
    task + style + regularization
}

/// Per-step reward split into its logged components.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RewardTerms {
    pub task: f64,
    pub style: f64,
    pub regularization: f64,
}

impl RewardTerms {
    pub fn total(&self) -> f64 {
        compose_reward(self.task, self.style, self.regularization)
    }
}

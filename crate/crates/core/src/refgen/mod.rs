//! Reference motion generation: gait schedules, single-rigid-body trajectory
//! optimization, whole-body inverse kinematics and the reference dataset file.

mod ik;
mod reference;
mod schedule;
mod trajopt;

pub use ik::{forward_kinematics, inverse_kinematics};
pub use reference::{
    build_dataset, finite_difference, load_reference_file, read_reference_csv, save_reference_file, to_reference,
    whole_body_ik, write_reference_csv, ReferenceTrajectory, REFERENCE_COLUMNS,
};
pub use schedule::{standard_clips, GaitSchedule, Interval, Phase, PhaseKind, CLIP_DURATION};
pub use trajopt::{optimize_gait, FootSample, ResidualReport, SrbdTrajectory, TrajOptConfig};

use crate::error::Result;
use crate::sim::RobotModel;
use crate::terrain::HeightField;

/// Frame rate of the reference clips (Hz).
pub const REFERENCE_RATE: f64 = 50.0;

/// Optimize and resample every standard clip on flat ground.
pub fn generate_reference_clips(model: &RobotModel, config: &TrajOptConfig) -> Result<Vec<(SrbdTrajectory, ReferenceTrajectory)>> {
    let terrain = HeightField::flat(10.0);
    standard_clips()
        .iter()
        .map(|s| {
            let traj = optimize_gait(model, s, &terrain, config)?;
            let reference = to_reference(&traj, model, &terrain, REFERENCE_RATE)?;
            Ok((traj, reference))
        })
        .collect()
}

use std::io::{Read, Write};
use std::path::Path;

use super::ik::inverse_kinematics;
use super::trajopt::SrbdTrajectory;
use crate::amp::{build_amp_state, AmpState, AmpTransition, Source, TransitionDataset};
use crate::error::{Error, Result};
use crate::sim::{com_in_hip_frame, DomainParams, MassProperties, QVec, RobotModel, SimConfig, SimState, Simulator, NQ};
use crate::terrain::HeightField;

/// Column order of the reference dataset file.
pub const REFERENCE_COLUMNS: [&str; 14] =
    ["clip_id", "t", "q0", "q1", "q2", "q3", "qd0", "qd1", "qd2", "qd3", "vx", "vz", "w", "h"];

fn header() -> Vec<&'static str> {
    REFERENCE_COLUMNS.to_vec()
}

/// Joint-space reference clip sampled at a fixed rate.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTrajectory {
    pub clip_id: String,
    pub rate: f64,
    pub frames: Vec<AmpState>,
    /// Full generalized coordinates per frame (not part of the file).
    pub poses: Vec<QVec>,
}

impl ReferenceTrajectory {
    pub fn times(&self) -> Vec<f64> {
        (0..self.frames.len()).map(|i| i as f64 / self.rate).collect()
    }
}

/// Joint angles placing the feet at `feet` while the whole-body centre of
/// mass sits at `com` with trunk pitch `pitch`.
pub fn whole_body_ik(model: &RobotModel, mp: &MassProperties, com: [f64; 2], pitch: f64, feet: [[f64; 2]; 2]) -> Result<[f64; 4]> {
    let mut joints = model.nominal_joints();
    let mut offset = com_in_hip_frame(model, mp, pitch, &joints);
    for _ in 0..200 {
        let hip = [com[0] - offset[0], com[1] - offset[1]];
        for leg in 0..2 {
            let (t, c) = inverse_kinematics(hip, pitch, feet[leg], model.thigh_length, model.calf_length)?;
            joints[2 * leg] = t;
            joints[2 * leg + 1] = c;
        }
        let next = com_in_hip_frame(model, mp, pitch, &joints);
        let change = (next[0] - offset[0]).abs() + (next[1] - offset[1]).abs();
        offset = next;
        if change < 1e-14 {
            break;
        }
    }
    let hip = [com[0] - offset[0], com[1] - offset[1]];
    for leg in 0..2 {
        let (t, c) = inverse_kinematics(hip, pitch, feet[leg], model.thigh_length, model.calf_length)?;
        joints[2 * leg] = t;
        joints[2 * leg + 1] = c;
    }
    Ok(joints)
}

/// Second-order finite differences over uniformly spaced samples; one-sided at the ends.
pub fn finite_difference(values: &[f64], dt: f64) -> Vec<f64> {
    let n = values.len();
    (0..n)
        .map(|i| {
            if n < 3 {
                if n < 2 {
                    0.0
                } else {
                    (values[1] - values[0]) / dt
                }
            } else if i == 0 {
                (-3.0 * values[0] + 4.0 * values[1] - values[2]) / (2.0 * dt)
            } else if i == n - 1 {
                (3.0 * values[n - 1] - 4.0 * values[n - 2] + values[n - 3]) / (2.0 * dt)
            } else {
                (values[i + 1] - values[i - 1]) / (2.0 * dt)
            }
        })
        .collect()
}

/// Resample a converged trajectory at `rate` Hz through inverse kinematics.
pub fn to_reference(
    traj: &SrbdTrajectory,
    model: &RobotModel,
    terrain: &HeightField,
    rate: f64,
) -> Result<ReferenceTrajectory> {
    if !(rate > 0.0) {
        return Err(Error::Config("reference rate must be positive".into()));
    }
    let domain = DomainParams::nominal();
    let mp = MassProperties::new(model, &domain);
    let n = (traj.schedule.duration * rate).round() as usize;
    let dt = 1.0 / rate;
    let mut poses = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 * dt;
        let b = traj.base_at(t);
        let feet = [traj.foot_at(0, t), traj.foot_at(1, t)];
        let joints = whole_body_ik(model, &mp, [b[0], b[1]], b[2], feet)
            .map_err(|e| Error::FrameIk { frame: i, source: Box::new(e) })?;
        poses.push([b[0], b[1], b[2], joints[0], joints[1], joints[2], joints[3]]);
    }
    let mut vel = vec![[0.0; NQ]; n];
    for c in 0..NQ {
        let series: Vec<f64> = poses.iter().map(|q| q[c]).collect();
        for (i, v) in finite_difference(&series, dt).into_iter().enumerate() {
            vel[i][c] = v;
        }
    }
    let sim = Simulator::new(model.clone(), domain, SimConfig::default())?;
    let frames = poses
        .iter()
        .zip(&vel)
        .map(|(q, qd)| build_amp_state(&sim, &SimState::from_coordinates(*q, *qd), terrain))
        .collect();
    Ok(ReferenceTrajectory { clip_id: traj.schedule.name.clone(), rate, frames, poses })
}

/// Consecutive-frame pairs of every clip, never across clips.
pub fn build_dataset(refs: &[ReferenceTrajectory]) -> Result<TransitionDataset> {
    if refs.is_empty() {
        return Err(Error::Config("dataset needs at least one reference clip".into()));
    }
    let transitions = refs
        .iter()
        .flat_map(|r| r.frames.windows(2).map(|w| AmpTransition::new(w[0], w[1], Source::Demo)))
        .collect();
    TransitionDataset::new(transitions)
}

pub fn write_reference_csv<W: Write>(refs: &[ReferenceTrajectory], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(header()).map_err(csv_err)?;
    for r in refs {
        for (i, f) in r.frames.iter().enumerate() {
            let mut rec = vec![r.clip_id.clone(), format!("{}", i as f64 / r.rate)];
            rec.extend(f.to_array().iter().map(|v| format!("{v}")));
            out.write_record(&rec).map_err(csv_err)?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_reference_csv<R: Read>(r: R) -> Result<Vec<ReferenceTrajectory>> {
    let mut rdr = csv::Reader::from_reader(r);
    let expected = header();
    let found: Vec<String> = rdr.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    if found != expected {
        return Err(Error::Data(format!("reference file header {found:?} does not match {expected:?}")));
    }
    let mut clips: Vec<(String, Vec<f64>, Vec<AmpState>)> = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let parse = |i: usize| -> Result<f64> {
            rec[i]
                .parse::<f64>()
                .map_err(|e| Error::Data(format!("reference row {}: column {}: {e}", line + 2, expected[i])))
        };
        let id = rec[0].to_string();
        let t = parse(1)?;
        let values = (2..expected.len()).map(parse).collect::<Result<Vec<f64>>>()?;
        let state = AmpState::from_slice(&values)?;
        if !state.is_finite() || !t.is_finite() {
            return Err(Error::Data(format!("reference row {} is not finite", line + 2)));
        }
        match clips.last_mut() {
            Some((last, ts, frames)) if *last == id => {
                ts.push(t);
                frames.push(state);
            }
            _ => {
                if clips.iter().any(|(c, _, _)| *c == id) {
                    return Err(Error::Data(format!("clip `{id}` is not contiguous in the reference file")));
                }
                clips.push((id, vec![t], vec![state]));
            }
        }
    }
    if clips.is_empty() {
        return Err(Error::Data("reference file has no frames".into()));
    }
    clips
        .into_iter()
        .map(|(clip_id, ts, frames)| {
            let rate = if ts.len() > 1 { 1.0 / (ts[1] - ts[0]) } else { 50.0 };
            if !(rate > 0.0) || !rate.is_finite() {
                return Err(Error::Data(format!("clip `{clip_id}` has non-increasing times")));
            }
            Ok(ReferenceTrajectory { clip_id, rate, frames, poses: Vec::new() })
        })
        .collect()
}

pub fn save_reference_file(refs: &[ReferenceTrajectory], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_reference_csv(refs, std::io::BufWriter::new(file))
}

pub fn load_reference_file(path: &Path) -> Result<Vec<ReferenceTrajectory>> {
    let file = std::fs::File::open(path)?;
    read_reference_csv(std::io::BufReader::new(file))
}

fn csv_err(e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            other => Error::Data(format!("{other:?}")),
        }
    } else {
        Error::Data(e.to_string())
    }
}

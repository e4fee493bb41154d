//! Planar five-link biped: trunk plus two thigh/calf legs with point feet,
//! penalty ground contact and PD joint actuation.
//!
//! Integration is semi-implicit in momentum form: each substep updates the
//! generalized momentum `p = M(q) q̇` from the generalized forces, advances
//! `q` with the velocity implied by the new momentum and then re-derives `q̇`
//! at the new configuration. In centre-of-mass coordinates this keeps
//! free-flight linear and angular momentum fixed to round-off.

mod contact;
mod domain;
mod kinematics;
mod model;

pub use contact::{contact_force, pd_torque, ContactParams};
pub use domain::{randomize_domain, DomainParams, DomainRanges, PushEvent, Range};
pub use kinematics::{
    com_in_hip_frame,
    dot2, perp, rotate, Kinematics, PointKin, QVec, Vec2, LEFT_CALF, LEFT_THIGH, NQ, N_BODIES, RIGHT_CALF,
    RIGHT_THIGH, TRUNK,
};
pub use model::{MassProperties, RobotModel};

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::terrain::HeightField;

pub const CONTROL_DT: f64 = 0.02;

type Mat7 = SMatrix<f64, NQ, NQ>;
type Vec7 = SVector<f64, NQ>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub substep: f64,
    pub gravity: f64,
    pub contact: ContactParams,
    /// |pitch| beyond this counts as a fall.
    pub fall_threshold: f64,
    /// Bound on policy joint offsets (rad).
    pub max_offset: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            substep: 0.001,
            gravity: 9.81,
            contact: ContactParams::default(),
            fall_threshold: 1.5,
            max_offset: 1.0,
        }
    }
}

/// Target joint offsets added to the nominal pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdCommand {
    pub offsets: [f64; 4],
}

impl PdCommand {
    pub fn new(offsets: [f64; 4], bound: f64) -> Self {
        let mut o = offsets;
        for v in &mut o {
            *v = if v.is_finite() { v.clamp(-bound, bound) } else { 0.0 };
        }
        PdCommand { offsets: o }
    }

    pub fn zero() -> Self {
        PdCommand { offsets: [0.0; 4] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct ActivePush {
    force: Vec2,
    remaining: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub q: QVec,
    pub qd: QVec,
    pub time: f64,
    pub foot_contact: [bool; 2],
    /// Mean world-frame ground force on each foot over the last step.
    pub foot_force: [Vec2; 2],
    /// The same force in the contact frame, `[tangential, normal]`.
    pub foot_force_local: [Vec2; 2],
    /// Trunk, left thigh, left calf, right thigh, right calf.
    pub body_contact: [bool; N_BODIES],
    /// Mean external force on the trunk over the last step.
    pub external_force: Vec2,
    /// Mean joint torque over the last step.
    pub joint_torque: [f64; 4],
    pushes: Vec<ActivePush>,
    next_push: usize,
}

impl SimState {
    pub fn from_coordinates(q: QVec, qd: QVec) -> Self {
        SimState {
            q,
            qd,
            time: 0.0,
            foot_contact: [false; 2],
            foot_force: [[0.0; 2]; 2],
            foot_force_local: [[0.0; 2]; 2],
            body_contact: [false; N_BODIES],
            external_force: [0.0; 2],
            joint_torque: [0.0; 4],
            pushes: Vec::new(),
            next_push: 0,
        }
    }

    pub fn joints(&self) -> [f64; 4] {
        [self.q[3], self.q[4], self.q[5], self.q[6]]
    }

    pub fn joint_velocities(&self) -> [f64; 4] {
        [self.qd[3], self.qd[4], self.qd[5], self.qd[6]]
    }

    pub fn pitch(&self) -> f64 {
        self.q[2]
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(self.qd.iter()).all(|v| v.is_finite())
    }
}

/// Apply `force` (N) to the trunk centre of mass for `duration` seconds of
/// subsequent simulation.
pub fn apply_push(state: &mut SimState, force: Vec2, duration: f64) -> Result<()> {
    if !(duration > 0.0) {
        return Err(Error::Config("push duration must be positive".into()));
    }
    state.pushes.push(ActivePush { force, remaining: duration });
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    BodyContact,
    Fall,
    Diverged,
}

impl TerminationReason {
    pub fn name(self) -> &'static str {
        match self {
            TerminationReason::BodyContact => "body_contact",
            TerminationReason::Fall => "fall",
            TerminationReason::Diverged => "diverged",
        }
    }
}

/// Kinematic quantities of the trunk ("base") used by observations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaseState {
    pub position: Vec2,
    /// World (heading-frame) linear velocity.
    pub velocity: Vec2,
    pub pitch: f64,
    pub pitch_rate: f64,
    /// Unit gravity direction expressed in the trunk frame `[forward, up]`.
    pub projected_gravity: Vec2,
}

#[derive(Debug, Clone)]
pub struct Simulator {
    pub model: RobotModel,
    pub domain: DomainParams,
    pub config: SimConfig,
    mass: MassProperties,
}

impl Simulator {
    pub fn new(model: RobotModel, domain: DomainParams, config: SimConfig) -> Result<Self> {
        model.validate()?;
        if !(config.substep > 0.0) {
            return Err(Error::Config("substep must be positive".into()));
        }
        let mass = MassProperties::new(&model, &domain);
        Ok(Simulator { model, domain, config, mass })
    }

    pub fn mass_properties(&self) -> &MassProperties {
        &self.mass
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.total_mass
    }

    pub fn kinematics(&self, q: &QVec) -> Kinematics {
        Kinematics::new(&self.model, &self.mass, q)
    }

    /// The trunk point used as "base": the hip joint.
    pub fn base_point(&self, kin: &Kinematics) -> PointKin {
        kin.point(TRUNK, [0.0, 0.0])
    }

    pub fn base_state(&self, state: &SimState) -> BaseState {
        let kin = self.kinematics(&state.q);
        let pk = self.base_point(&kin);
        let theta = state.q[2];
        BaseState {
            position: kin.world(&pk),
            velocity: kin.velocity(&pk, &state.qd),
            pitch: theta,
            pitch_rate: state.qd[2],
            projected_gravity: [-theta.sin(), -theta.cos()],
        }
    }

    pub fn foot_positions(&self, state: &SimState) -> [Vec2; 2] {
        let kin = self.kinematics(&state.q);
        [kin.world(&kin.feet[0]), kin.world(&kin.feet[1])]
    }

    /// Nominal standing pose with the feet resting on the terrain at `x`.
    pub fn standing_state(&self, terrain: &HeightField, x: f64) -> SimState {
        self.posed_state(terrain, x, self.model.nominal_joints(), 0.0)
    }

    /// Pose with both feet at the terrain (compressed by the static load) and
    /// the hip above `x`.
    pub fn posed_state(&self, terrain: &HeightField, x: f64, joints: [f64; 4], pitch: f64) -> SimState {
        let q0 = [0.0, 0.0, pitch, joints[0], joints[1], joints[2], joints[3]];
        let kin = self.kinematics(&q0);
        let hip = kin.hip_world();
        let feet = [kin.world(&kin.feet[0]), kin.world(&kin.feet[1])];
        let sink = self.mass.total_mass * self.config.gravity / (2.0 * self.config.contact.stiffness);
        // lift so the lowest foot touches its terrain point
        let lift = feet
            .iter()
            .map(|f| terrain.height_at(x + f[0] - hip[0]) + self.model.foot_radius - f[1])
            .fold(f64::NEG_INFINITY, f64::max)
            - sink;
        let mut q = q0;
        q[0] = x - hip[0];
        q[1] = lift;
        SimState::from_coordinates(q, [0.0; NQ])
    }

    fn pd(&self, cmd: &PdCommand, q: &QVec, qd: &QVec) -> [f64; 4] {
        pd_torque(
            &cmd.offsets,
            &self.model.nominal_joints(),
            &[q[3], q[4], q[5], q[6]],
            &[qd[3], qd[4], qd[5], qd[6]],
            self.model.kp * self.domain.kp_scale,
            self.model.kd * self.domain.kd_scale,
            self.model.torque_limit,
        )
    }

    fn factor(kin: &Kinematics) -> Result<(Mat7, nalgebra::Cholesky<f64, nalgebra::Const<NQ>>)> {
        let m = kin.mass_matrix();
        let mat = Mat7::from_fn(|i, j| m[i][j]);
        let chol = mat
            .cholesky()
            .ok_or_else(|| Error::Numeric("mass matrix is not positive definite".into()))?;
        Ok((mat, chol))
    }

    /// Advance by `dt` seconds holding the PD command.
    pub fn step(&self, state: &SimState, cmd: &PdCommand, terrain: &HeightField, dt: f64) -> Result<SimState> {
        if !(dt > 0.0) {
            return Err(Error::Config("step dt must be positive".into()));
        }
        if !state.is_finite() {
            return Err(Error::Diverged { time: state.time });
        }
        let n_sub = ((dt / self.config.substep).round() as usize).max(1);
        let h = dt / n_sub as f64;
        let g = self.config.gravity;
        let mut next = state.clone();
        let mut q = state.q;
        let mut qd = state.qd;
        let mut kin = self.kinematics(&q);
        let (mut mass, mut chol) = Self::factor(&kin)?;

        let mut foot_force = [[0.0; 2]; 2];
        let mut foot_local = [[0.0; 2]; 2];
        let mut foot_contact = [false; 2];
        let mut ext_sum = [0.0; 2];
        let mut tau_sum = [0.0; 4];

        for sub in 0..n_sub {
            let t = state.time + sub as f64 * h;
            while let Some(ev) = self.domain.pushes.get(next.next_push) {
                if ev.time <= t + 1e-9 {
                    next.pushes.push(ActivePush { force: ev.force, remaining: ev.duration });
                    next.next_push += 1;
                } else {
                    break;
                }
            }

            let mut gen = kin.kinetic_energy_gradient(&qd);
            gen[1] -= self.mass.total_mass * g;

            let tau = self.pd(cmd, &q, &qd);
            for i in 0..4 {
                gen[3 + i] += tau[i];
                tau_sum[i] += tau[i];
            }

            for foot in 0..2 {
                let pk = &kin.feet[foot];
                let pos = kin.world(pk);
                let vel = kin.velocity(pk, &qd);
                let slope = terrain.slope_at(pos[0]);
                let norm = (1.0 + slope * slope).sqrt();
                let n = [-slope / norm, 1.0 / norm];
                let tdir = [1.0 / norm, slope / norm];
                let gap = terrain.height_at(pos[0]) + self.model.foot_radius - pos[1];
                let depth = gap * n[1];
                let local = contact_force(
                    depth,
                    -dot2(vel, n),
                    dot2(vel, tdir),
                    self.domain.friction,
                    self.domain.restitution,
                    &self.config.contact,
                );
                if depth > 0.0 {
                    foot_contact[foot] = sub + 1 == n_sub || foot_contact[foot];
                    let f = [local[0] * tdir[0] + local[1] * n[0], local[0] * tdir[1] + local[1] * n[1]];
                    let cols = kin.jacobian(pk);
                    for j in 0..NQ {
                        gen[j] += dot2(cols[j], f);
                    }
                    foot_force[foot][0] += f[0];
                    foot_force[foot][1] += f[1];
                    foot_local[foot][0] += local[0];
                    foot_local[foot][1] += local[1];
                }
            }

            let mut push = [0.0; 2];
            for p in next.pushes.iter_mut() {
                let w = p.remaining.min(h) / h;
                push[0] += w * p.force[0];
                push[1] += w * p.force[1];
                p.remaining -= h;
            }
            next.pushes.retain(|p| p.remaining > 1e-12);
            if push != [0.0, 0.0] {
                let cols = kin.jacobian(&kin.body_coms[TRUNK]);
                for j in 0..NQ {
                    gen[j] += dot2(cols[j], push);
                }
                ext_sum[0] += push[0];
                ext_sum[1] += push[1];
            }

            let momentum = mass * Vec7::from_column_slice(&qd) + Vec7::from_column_slice(&gen) * h;
            let v_mid = chol.solve(&momentum);
            for j in 0..NQ {
                q[j] += h * v_mid[j];
            }
            kin = self.kinematics(&q);
            let f = Self::factor(&kin)?;
            mass = f.0;
            chol = f.1;
            let v = chol.solve(&momentum);
            for j in 0..NQ {
                qd[j] = v[j];
            }
        }

        let inv = 1.0 / n_sub as f64;
        next.q = q;
        next.qd = qd;
        next.time = state.time + dt;
        // contact flag reflects the final substep
        for foot in 0..2 {
            let pos = kin.world(&kin.feet[foot]);
            foot_contact[foot] = pos[1] < terrain.height_at(pos[0]) + self.model.foot_radius;
            for c in 0..2 {
                foot_force[foot][c] *= inv;
                foot_local[foot][c] *= inv;
            }
        }
        next.foot_contact = foot_contact;
        next.foot_force = foot_force;
        next.foot_force_local = foot_local;
        next.external_force = [ext_sum[0] * inv, ext_sum[1] * inv];
        next.joint_torque = tau_sum.map(|t| t * inv);
        next.body_contact = self.body_contacts(&kin, terrain);
        if !next.is_finite() || next.qd.iter().any(|v| v.abs() > 1e4) {
            return Err(Error::Diverged { time: next.time });
        }
        Ok(next)
    }

    fn body_contacts(&self, kin: &Kinematics, terrain: &HeightField) -> [bool; N_BODIES] {
        let m = &self.model;
        let below = |p: Vec2| p[1] <= terrain.height_at(p[0]);
        let hit = |body: usize, locals: &[Vec2]| locals.iter().any(|l| below(kin.world(&kin.point(body, *l))));
        let trunk = [[0.0, 0.0], [0.0, 0.5 * m.trunk_length], [0.0, m.trunk_length]];
        let thigh = [[0.0, -0.5 * m.thigh_length], [0.0, -m.thigh_length]];
        let calf = [[0.0, -0.5 * m.calf_length]];
        [
            hit(TRUNK, &trunk),
            hit(LEFT_THIGH, &thigh),
            hit(LEFT_CALF, &calf),
            hit(RIGHT_THIGH, &thigh),
            hit(RIGHT_CALF, &calf),
        ]
    }

    pub fn check_termination(&self, state: &SimState, terrain: &HeightField) -> Option<TerminationReason> {
        if !state.is_finite() {
            return Some(TerminationReason::Diverged);
        }
        let kin = self.kinematics(&state.q);
        if self.body_contacts(&kin, terrain).iter().any(|c| *c) {
            return Some(TerminationReason::BodyContact);
        }
        if state.q[2].abs() > self.config.fall_threshold {
            return Some(TerminationReason::Fall);
        }
        None
    }

    pub fn potential_energy(&self, state: &SimState) -> f64 {
        self.mass.total_mass * self.config.gravity * state.q[1]
    }

    pub fn kinetic_energy(&self, state: &SimState) -> f64 {
        self.kinematics(&state.q).kinetic_energy(&state.qd)
    }
}

/// One control step with a freshly built simulator.
pub fn step(
    state: &SimState,
    cmd: &PdCommand,
    model: &RobotModel,
    domain: &DomainParams,
    terrain: &HeightField,
    dt: f64,
) -> Result<SimState> {
    Simulator::new(model.clone(), domain.clone(), SimConfig::default())?.step(state, cmd, terrain, dt)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sim() -> Simulator {
        Simulator::new(RobotModel::default(), DomainParams::nominal(), SimConfig::default()).unwrap()
    }

    #[test]
    fn standing_pose_is_not_terminated() {
        let s = sim();
        let terrain = HeightField::flat(10.0);
        let st = s.standing_state(&terrain, 1.0);
        assert_eq!(s.check_termination(&st, &terrain), None);
        let base = s.base_state(&st);
        assert!(base.position[1] > 0.38 && base.position[1] < 0.40, "{:?}", base.position);
    }

    #[test]
    fn trunk_on_ground_is_body_contact() {
        let s = sim();
        let terrain = HeightField::flat(10.0);
        let mut st = s.standing_state(&terrain, 1.0);
        let kin = s.kinematics(&st.q);
        let centre = kin.world(&kin.point(TRUNK, [0.0, 0.5 * s.model.trunk_length]));
        st.q[1] -= centre[1];
        assert_eq!(s.check_termination(&st, &terrain), Some(TerminationReason::BodyContact));
    }

    #[test]
    fn pitch_beyond_threshold_is_fall() {
        let s = sim();
        let terrain = HeightField::flat(10.0);
        let mut st = s.standing_state(&terrain, 1.0);
        st.q[1] += 5.0;
        st.q[2] = 1.6;
        assert_eq!(s.check_termination(&st, &terrain), Some(TerminationReason::Fall));
        st.q[2] = 1.4;
        assert_eq!(s.check_termination(&st, &terrain), None);
    }

    #[test]
    fn free_fall_velocity_change() {
        let s = sim();
        let terrain = HeightField::flat(10.0);
        let mut st = s.standing_state(&terrain, 1.0);
        st.q[1] += 10.0;
        st.qd[1] = 0.3;
        let next = s.step(&st, &PdCommand::zero(), &terrain, CONTROL_DT).unwrap();
        assert!((next.qd[1] - 0.3 + 9.81 * CONTROL_DT).abs() < 1e-12);
    }

    #[test]
    fn zero_gravity_drift_is_linear() {
        let cfg = SimConfig { gravity: 0.0, ..SimConfig::default() };
        let s = Simulator::new(RobotModel::default(), DomainParams::nominal(), cfg).unwrap();
        let terrain = HeightField::flat(10.0);
        let mut st = s.standing_state(&terrain, 1.0);
        st.q[1] += 10.0;
        st.qd = [0.4, -0.2, 0.0, 0.0, 0.0, 0.0, 0.0];
        // nominal pose, zero offsets: PD torques vanish at rest
        let next = s.step(&st, &PdCommand::zero(), &terrain, CONTROL_DT).unwrap();
        for j in 0..NQ {
            assert!((next.qd[j] - st.qd[j]).abs() < 1e-12);
            assert!((next.q[j] - (st.q[j] + st.qd[j] * CONTROL_DT)).abs() < 1e-12);
        }
    }

    #[test]
    fn push_impulse_changes_momentum() {
        let cfg = SimConfig { gravity: 0.0, ..SimConfig::default() };
        let s = Simulator::new(RobotModel::default(), DomainParams::nominal(), cfg).unwrap();
        let terrain = HeightField::flat(10.0);
        let mut st = s.standing_state(&terrain, 1.0);
        st.q[1] += 10.0;
        apply_push(&mut st, [10.0 * s.total_mass(), 0.0], 0.1).unwrap();
        for _ in 0..10 {
            st = s.step(&st, &PdCommand::zero(), &terrain, CONTROL_DT).unwrap();
        }
        assert!((st.qd[0] - 1.0).abs() < 1e-9, "{}", st.qd[0]);
        assert!(apply_push(&mut st, [1.0, 0.0], 0.0).is_err());
    }

    #[test]
    fn scheduled_push_fires_once() {
        let domain = DomainParams {
            pushes: vec![PushEvent { time: 0.05, force: [90.0, 0.0], duration: 0.1 }],
            ..DomainParams::nominal()
        };
        let cfg = SimConfig { gravity: 0.0, ..SimConfig::default() };
        let s = Simulator::new(RobotModel::default(), domain, cfg).unwrap();
        let terrain = HeightField::flat(10.0);
        let mut st = s.standing_state(&terrain, 1.0);
        st.q[1] += 10.0;
        for _ in 0..20 {
            st = s.step(&st, &PdCommand::zero(), &terrain, CONTROL_DT).unwrap();
        }
        assert!((st.qd[0] - 9.0 / s.total_mass()).abs() < 1e-9);
    }

    #[test]
    fn standing_robot_settles_on_ground() {
        let s = sim();
        let terrain = HeightField::flat(10.0);
        let mut st = s.standing_state(&terrain, 1.0);
        for _ in 0..5 {
            st = s.step(&st, &PdCommand::zero(), &terrain, CONTROL_DT).unwrap();
        }
        assert!(st.foot_contact.iter().all(|c| *c));
        let fz: f64 = st.foot_force.iter().map(|f| f[1]).sum();
        assert!(fz > 0.0);
    }
}

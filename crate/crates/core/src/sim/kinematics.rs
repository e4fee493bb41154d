//! Planar kinematics in centre-of-mass coordinates.
//!
//! The generalized coordinates are `q = [x, z, θ, q_LT, q_LC, q_RT, q_RC]`
//! where `(x, z)` is the whole-body centre of mass, `θ` the trunk pitch and
//! the rest joint angles. With the centre of mass as the translational
//! coordinate the mass matrix decouples translation from shape and pitch
//! becomes a cyclic coordinate, so free-flight momentum is preserved by the
//! integrator.
//!
//! Geometry is first built in a hip frame (hip at the origin, world axes)
//! and then shifted so the centre of mass sits at `(x, z)`.

use super::model::{MassProperties, RobotModel};

pub const NQ: usize = 7;
pub const N_BODIES: usize = 5;

pub type Vec2 = [f64; 2];
pub type QVec = [f64; NQ];

pub const TRUNK: usize = 0;
pub const LEFT_THIGH: usize = 1;
pub const LEFT_CALF: usize = 2;
pub const RIGHT_THIGH: usize = 3;
pub const RIGHT_CALF: usize = 4;

/// Rotational coordinates (indices into `q`) that move each body.
const CHAIN: [&[usize]; N_BODIES] = [&[2], &[2, 3], &[2, 3, 4], &[2, 5], &[2, 5, 6]];

#[inline]
pub fn rotate(angle: f64, v: Vec2) -> Vec2 {
    let (s, c) = angle.sin_cos();
    [c * v[0] - s * v[1], s * v[0] + c * v[1]]
}

/// Counter-clockwise quarter turn.
#[inline]
pub fn perp(v: Vec2) -> Vec2 {
    [-v[1], v[0]]
}

#[inline]
fn sub(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
pub fn dot2(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// A point fixed to a body, in the hip frame, with its partials with respect
/// to the rotational coordinates `q[2..7]`.
#[derive(Debug, Clone, Copy)]
pub struct PointKin {
    pub body: usize,
    pub pos: Vec2,
    pub partials: [Vec2; 5],
}

#[derive(Debug, Clone)]
pub struct Kinematics {
    pub q: QVec,
    /// Absolute angle of each body frame.
    pub angles: [f64; N_BODIES],
    pub knees: [PointKin; 2],
    pub feet: [PointKin; 2],
    pub body_coms: [PointKin; N_BODIES],
    /// Centre of mass in the hip frame and its partials.
    pub com: Vec2,
    pub com_partials: [Vec2; 5],
    masses: [f64; N_BODIES],
    inertias: [f64; N_BODIES],
    total_mass: f64,
    thigh_length: f64,
    calf_length: f64,
}

impl Kinematics {
    pub fn new(model: &RobotModel, mp: &MassProperties, q: &QVec) -> Self {
        let theta = q[2];
        let angles = [
            theta,
            theta + q[3],
            theta + q[3] + q[4],
            theta + q[5],
            theta + q[5] + q[6],
        ];
        let mut kin = Kinematics {
            q: *q,
            angles,
            knees: [empty_point(); 2],
            feet: [empty_point(); 2],
            body_coms: [empty_point(); N_BODIES],
            com: [0.0; 2],
            com_partials: [[0.0; 2]; 5],
            masses: mp.mass,
            inertias: mp.inertia,
            total_mass: mp.total_mass,
            thigh_length: model.thigh_length,
            calf_length: model.calf_length,
        };
        kin.knees = [
            kin.point(LEFT_THIGH, [0.0, -model.thigh_length]),
            kin.point(RIGHT_THIGH, [0.0, -model.thigh_length]),
        ];
        kin.feet = [
            kin.point(LEFT_CALF, [0.0, -model.calf_length]),
            kin.point(RIGHT_CALF, [0.0, -model.calf_length]),
        ];
        for b in 0..N_BODIES {
            kin.body_coms[b] = kin.point(b, mp.local_com[b]);
        }
        let m = mp.total_mass;
        let mut com = [0.0; 2];
        let mut partials = [[0.0; 2]; 5];
        for (b, pk) in kin.body_coms.iter().enumerate() {
            let w = mp.mass[b] / m;
            com[0] += w * pk.pos[0];
            com[1] += w * pk.pos[1];
            for j in 0..5 {
                partials[j][0] += w * pk.partials[j][0];
                partials[j][1] += w * pk.partials[j][1];
            }
        }
        kin.com = com;
        kin.com_partials = partials;
        kin
    }

    fn pivot(&self, coord: usize) -> Vec2 {
        match coord {
            4 => self.knees[0].pos,
            6 => self.knees[1].pos,
            _ => [0.0, 0.0],
        }
    }

    /// Point at `local` in the frame of `body` (trunk: x forward, z up the
    /// trunk; legs: origin at the proximal joint, `(0, -s)` along the link).
    pub fn point(&self, body: usize, local: Vec2) -> PointKin {
        let origin = match body {
            LEFT_CALF => self.knees[0].pos,
            RIGHT_CALF => self.knees[1].pos,
            _ => [0.0, 0.0],
        };
        let r = rotate(self.angles[body], local);
        let pos = [origin[0] + r[0], origin[1] + r[1]];
        let mut partials = [[0.0; 2]; 5];
        for &j in CHAIN[body] {
            partials[j - 2] = perp(sub(pos, self.pivot(j)));
        }
        PointKin { body, pos, partials }
    }

    pub fn hip_world(&self) -> Vec2 {
        [self.q[0] - self.com[0], self.q[1] - self.com[1]]
    }

    pub fn world(&self, pk: &PointKin) -> Vec2 {
        [self.q[0] + pk.pos[0] - self.com[0], self.q[1] + pk.pos[1] - self.com[1]]
    }

    /// World-frame Jacobian columns, one per coordinate.
    pub fn jacobian(&self, pk: &PointKin) -> [Vec2; NQ] {
        let mut cols = [[0.0; 2]; NQ];
        cols[0] = [1.0, 0.0];
        cols[1] = [0.0, 1.0];
        for j in 0..5 {
            cols[j + 2] = sub(pk.partials[j], self.com_partials[j]);
        }
        cols
    }

    pub fn velocity(&self, pk: &PointKin, qd: &QVec) -> Vec2 {
        let cols = self.jacobian(pk);
        let mut v = [0.0; 2];
        for j in 0..NQ {
            v[0] += cols[j][0] * qd[j];
            v[1] += cols[j][1] * qd[j];
        }
        v
    }

    /// Velocity in the hip frame (the hip held fixed, world axes).
    fn hip_frame_velocity(pk: &PointKin, qd: &QVec) -> Vec2 {
        let mut v = [0.0; 2];
        for j in 0..5 {
            v[0] += pk.partials[j][0] * qd[j + 2];
            v[1] += pk.partials[j][1] * qd[j + 2];
        }
        v
    }

    pub fn angular_velocity(&self, body: usize, qd: &QVec) -> f64 {
        CHAIN[body].iter().map(|&j| qd[j]).sum()
    }

    pub fn mass_matrix(&self) -> [[f64; NQ]; NQ] {
        let mut m = [[0.0; NQ]; NQ];
        m[0][0] = self.total_mass;
        m[1][1] = self.total_mass;
        for b in 0..N_BODIES {
            let cols = self.jacobian(&self.body_coms[b]);
            let mb = self.masses[b];
            for i in 2..NQ {
                for j in i..NQ {
                    let v = mb * dot2(cols[i], cols[j]);
                    m[i][j] += v;
                }
            }
            for &i in CHAIN[b] {
                for &j in CHAIN[b] {
                    if j >= i {
                        m[i][j] += self.inertias[b];
                    }
                }
            }
        }
        for i in 2..NQ {
            for j in 0..i {
                m[i][j] = m[j][i];
            }
        }
        m
    }

    /// Partial derivatives of kinetic energy with respect to `q`.
    ///
    /// Only the joint angles contribute: translation and pitch are cyclic in
    /// centre-of-mass coordinates.
    pub fn kinetic_energy_gradient(&self, qd: &QVec) -> QVec {
        let mut out = [0.0; NQ];
        let hip_vel: Vec<Vec2> = self.body_coms.iter().map(|pk| Self::hip_frame_velocity(pk, qd)).collect();
        let knee_vel = [
            Self::hip_frame_velocity(&self.knees[0], qd),
            Self::hip_frame_velocity(&self.knees[1], qd),
        ];
        let pivot_vel = |j: usize| match j {
            4 => knee_vel[0],
            6 => knee_vel[1],
            _ => [0.0, 0.0],
        };
        let world_vel: Vec<Vec2> = self.body_coms.iter().map(|pk| self.velocity(pk, qd)).collect();
        for j in 3..NQ {
            let pv = pivot_vel(j);
            // d/dt of the centre-of-mass partial
            let mut com_dot = [0.0; 2];
            for b in 0..N_BODIES {
                if CHAIN[b].contains(&j) {
                    let w = self.masses[b] / self.total_mass;
                    let d = perp(sub(hip_vel[b], pv));
                    com_dot[0] += w * d[0];
                    com_dot[1] += w * d[1];
                }
            }
            let mut acc = 0.0;
            for b in 0..N_BODIES {
                let mut jdot = [-com_dot[0], -com_dot[1]];
                if CHAIN[b].contains(&j) {
                    let d = perp(sub(hip_vel[b], pv));
                    jdot[0] += d[0];
                    jdot[1] += d[1];
                }
                acc += self.masses[b] * dot2(world_vel[b], jdot);
            }
            out[j] = acc;
        }
        out
    }

    pub fn kinetic_energy(&self, qd: &QVec) -> f64 {
        let m = self.mass_matrix();
        let mut e = 0.0;
        for i in 0..NQ {
            for j in 0..NQ {
                e += 0.5 * qd[i] * m[i][j] * qd[j];
            }
        }
        e
    }

    /// Total linear momentum summed over bodies.
    pub fn linear_momentum(&self, qd: &QVec) -> Vec2 {
        let mut p = [0.0; 2];
        for b in 0..N_BODIES {
            let v = self.velocity(&self.body_coms[b], qd);
            p[0] += self.masses[b] * v[0];
            p[1] += self.masses[b] * v[1];
        }
        p
    }

    /// Angular momentum about the world origin, summed over bodies.
    pub fn angular_momentum(&self, qd: &QVec) -> f64 {
        let mut l = 0.0;
        for b in 0..N_BODIES {
            let pk = &self.body_coms[b];
            let r = self.world(pk);
            let v = self.velocity(pk, qd);
            l += self.masses[b] * (r[0] * v[1] - r[1] * v[0]) + self.inertias[b] * self.angular_velocity(b, qd);
        }
        l
    }

    pub fn thigh_length(&self) -> f64 {
        self.thigh_length
    }

    pub fn calf_length(&self) -> f64 {
        self.calf_length
    }
}

fn empty_point() -> PointKin {
    PointKin { body: 0, pos: [0.0; 2], partials: [[0.0; 2]; 5] }
}

/// Joint angles and hip-relative geometry for a given centre-of-mass offset:
/// returns the hip-frame centre of mass of a configuration.
pub fn com_in_hip_frame(model: &RobotModel, mp: &MassProperties, theta: f64, joints: &[f64; 4]) -> Vec2 {
    let q = [0.0, 0.0, theta, joints[0], joints[1], joints[2], joints[3]];
    Kinematics::new(model, mp, &q).com
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::domain::DomainParams;

    fn setup() -> (RobotModel, MassProperties) {
        let model = RobotModel::default();
        let mp = MassProperties::new(&model, &DomainParams::nominal());
        (model, mp)
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let (model, mp) = setup();
        let q = [0.3, 0.5, 0.2, -0.4, 0.9, 0.3, 0.6];
        let kin = Kinematics::new(&model, &mp, &q);
        let h = 1e-6;
        for foot in 0..2 {
            let cols = kin.jacobian(&kin.feet[foot]);
            for j in 0..NQ {
                let mut qp = q;
                qp[j] += h;
                let mut qm = q;
                qm[j] -= h;
                let kp = Kinematics::new(&model, &mp, &qp);
                let km = Kinematics::new(&model, &mp, &qm);
                let (a, b) = (kp.world(&kp.feet[foot]), km.world(&km.feet[foot]));
                for c in 0..2 {
                    let fd = (a[c] - b[c]) / (2.0 * h);
                    assert!((fd - cols[j][c]).abs() < 1e-7, "foot {foot} coord {j}: {fd} vs {}", cols[j][c]);
                }
            }
        }
    }

    #[test]
    fn centre_of_mass_is_the_origin_coordinate() {
        let (model, mp) = setup();
        let q = [1.3, 0.45, -0.3, 0.2, 0.5, -0.6, 1.1];
        let kin = Kinematics::new(&model, &mp, &q);
        let mut c = [0.0; 2];
        for b in 0..N_BODIES {
            let w = kin.world(&kin.body_coms[b]);
            c[0] += mp.mass[b] * w[0] / mp.total_mass;
            c[1] += mp.mass[b] * w[1] / mp.total_mass;
        }
        assert!((c[0] - 1.3).abs() < 1e-14 && (c[1] - 0.45).abs() < 1e-14);
    }

    #[test]
    fn energy_gradient_matches_finite_differences() {
        let (model, mp) = setup();
        let q = [0.0, 0.5, 0.4, -0.2, 0.7, 0.5, 0.3];
        let qd = [0.3, -0.2, 1.1, -2.0, 0.7, 1.5, -0.4];
        let kin = Kinematics::new(&model, &mp, &q);
        let grad = kin.kinetic_energy_gradient(&qd);
        let h = 1e-6;
        for j in 0..NQ {
            let mut qp = q;
            qp[j] += h;
            let mut qm = q;
            qm[j] -= h;
            let fd = (Kinematics::new(&model, &mp, &qp).kinetic_energy(&qd)
                - Kinematics::new(&model, &mp, &qm).kinetic_energy(&qd))
                / (2.0 * h);
            assert!((fd - grad[j]).abs() < 1e-7, "coord {j}: {fd} vs {}", grad[j]);
        }
    }

    #[test]
    fn mass_matrix_is_symmetric_and_decoupled() {
        let (model, mp) = setup();
        let kin = Kinematics::new(&model, &mp, &[0.0, 0.4, 0.1, -0.3, 0.6, -0.4, 0.8]);
        let m = kin.mass_matrix();
        for i in 0..NQ {
            for j in 0..NQ {
                assert_eq!(m[i][j], m[j][i]);
            }
        }
        for i in 0..2 {
            for j in 2..NQ {
                assert_eq!(m[i][j], 0.0);
            }
        }
    }
}

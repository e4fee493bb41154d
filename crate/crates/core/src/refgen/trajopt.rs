//! Phase-based trajectory optimization over a planar single rigid body.
//!
//! Decision variables are the body knots `(x, z, pitch)`, one foothold per
//! stance phase, free swing-foot knots and the contact force of every stance
//! foot at every knot. The discrete Newton-Euler equations at the interior
//! knots are hard equality constraints; everything else (speed tracking,
//! posture, reach, friction, swing clearance, smoothness) is a weighted
//! least-squares residual. The problem is solved by damped Gauss-Newton steps
//! on the equality-constrained linearization with an l1 merit line search.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::schedule::{GaitSchedule, PhaseKind, BOUNDARY_EPS};
use crate::error::{Error, Result};
use crate::sim::{com_in_hip_frame, rotate, DomainParams, Kinematics, MassProperties, RobotModel, Vec2};
use crate::terrain::HeightField;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajOptConfig {
    pub knots_per_second: f64,
    /// Friction coefficient assumed by the planner.
    pub friction: f64,
    pub clearance: f64,
    pub max_iterations: usize,
    pub defect_tolerance: f64,
    pub max_speed: f64,
    /// Hip-to-foot distance limits as fractions of the leg length.
    pub max_reach: f64,
    pub min_reach: f64,
    pub gravity: f64,
    pub start_x: f64,
}

impl Default for TrajOptConfig {
    fn default() -> Self {
        TrajOptConfig {
            knots_per_second: 30.0,
            friction: 0.6,
            clearance: 0.05,
            max_iterations: 200,
            defect_tolerance: 1e-3,
            max_speed: 2.0,
            max_reach: 0.9,
            min_reach: 0.5,
            gravity: 9.81,
            start_x: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ResidualReport {
    /// Largest Newton-Euler defect (N or N·m).
    pub max_dynamics_defect: f64,
    /// Largest friction, unilateral or reach violation (N or m).
    pub max_constraint_violation: f64,
    pub iterations: usize,
    pub cost: f64,
}

/// A foot trajectory sample used for dense resampling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FootSample {
    pub t: f64,
    pub pos: Vec2,
    /// Index of the stance phase this sample pins, if any.
    pub stance: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct SrbdTrajectory {
    pub schedule: GaitSchedule,
    pub knot_times: Vec<f64>,
    /// `(x, z, pitch)` of the centre of mass and trunk.
    pub base: Vec<[f64; 3]>,
    pub base_vel: Vec<[f64; 3]>,
    pub feet: Vec<[Vec2; 2]>,
    pub forces: Vec<[Vec2; 2]>,
    pub foot_tracks: [Vec<FootSample>; 2],
    pub mass: f64,
    pub inertia: f64,
    pub gravity: f64,
    /// Centre of mass relative to the hip with the trunk upright.
    pub com_offset: Vec2,
    pub report: ResidualReport,
}

impl SrbdTrajectory {
    pub fn is_stance(&self, foot: usize, k: usize) -> bool {
        self.schedule.in_stance(foot, self.knot_times[k])
    }

    /// Newton-Euler defects re-evaluated at every interior knot.
    pub fn dynamics_defects(&self) -> Vec<[f64; 3]> {
        let h = self.knot_times[1] - self.knot_times[0];
        (1..self.base.len() - 1)
            .map(|k| {
                let acc = |c: usize| (self.base[k + 1][c] - 2.0 * self.base[k][c] + self.base[k - 1][c]) / (h * h);
                let mut f = [0.0; 2];
                let mut tau = 0.0;
                for i in 0..2 {
                    let fi = self.forces[k][i];
                    f[0] += fi[0];
                    f[1] += fi[1];
                    let r = [self.feet[k][i][0] - self.base[k][0], self.feet[k][i][1] - self.base[k][1]];
                    tau += r[0] * fi[1] - r[1] * fi[0];
                }
                [
                    self.mass * acc(0) - f[0],
                    self.mass * acc(1) - f[1] + self.mass * self.gravity,
                    self.inertia * acc(2) - tau,
                ]
            })
            .collect()
    }

    /// Position of a foot at time `t`, cubic between samples, fixed in stance.
    pub fn foot_at(&self, foot: usize, t: f64) -> Vec2 {
        let s = &self.foot_tracks[foot];
        if t <= s[0].t {
            return s[0].pos;
        }
        if t >= s[s.len() - 1].t {
            return s[s.len() - 1].pos;
        }
        let j = s.partition_point(|p| p.t <= t).max(1) - 1;
        let (a, b) = (s[j], s[j + 1]);
        if a.stance.is_some() && a.stance == b.stance {
            return a.pos;
        }
        let ta = sample_tangent(s, j);
        let tb = sample_tangent(s, j + 1);
        let dt = b.t - a.t;
        let u = (t - a.t) / dt;
        let (h00, h10, h01, h11) = hermite(u);
        let mut out = [0.0; 2];
        for c in 0..2 {
            out[c] = h00 * a.pos[c] + h10 * dt * ta[c] + h01 * b.pos[c] + h11 * dt * tb[c];
        }
        out
    }

    /// Body `(x, z, pitch)` at time `t` by cubic Hermite interpolation.
    pub fn base_at(&self, t: f64) -> [f64; 3] {
        let n = self.knot_times.len();
        let h = self.knot_times[1] - self.knot_times[0];
        let k = ((t / h).floor().max(0.0) as usize).min(n - 2);
        let u = ((t - self.knot_times[k]) / h).clamp(0.0, 1.0);
        let (h00, h10, h01, h11) = hermite(u);
        let mut out = [0.0; 3];
        for c in 0..3 {
            out[c] = h00 * self.base[k][c]
                + h10 * h * self.base_vel[k][c]
                + h01 * self.base[k + 1][c]
                + h11 * h * self.base_vel[k + 1][c];
        }
        out
    }
}

fn hermite(u: f64) -> (f64, f64, f64, f64) {
    let u2 = u * u;
    let u3 = u2 * u;
    (2.0 * u3 - 3.0 * u2 + 1.0, u3 - 2.0 * u2 + u, -2.0 * u3 + 3.0 * u2, u3 - u2)
}

fn sample_tangent(s: &[FootSample], j: usize) -> Vec2 {
    if s[j].stance.is_some() {
        return [0.0, 0.0];
    }
    let a = if j > 0 { j - 1 } else { j };
    let b = (j + 1).min(s.len() - 1);
    let dt = s[b].t - s[a].t;
    if dt <= 0.0 {
        return [0.0, 0.0];
    }
    [(s[b].pos[0] - s[a].pos[0]) / dt, (s[b].pos[1] - s[a].pos[1]) / dt]
}

#[derive(Debug, Clone, Copy)]
enum FootVar {
    Hold(usize),
    /// Swing knot variable index (x; z follows) and swing-phase fraction.
    Swing(usize, f64),
}

#[derive(Debug, Clone, Copy)]
struct Hold {
    var: usize,
    start: f64,
    end: f64,
}

struct Rows {
    val: Vec<f64>,
    jac: Vec<Vec<(usize, f64)>>,
}

impl Rows {
    fn new() -> Self {
        Rows { val: Vec::new(), jac: Vec::new() }
    }

    fn push(&mut self, w: f64, v: f64, entries: Vec<(usize, f64)>) {
        self.val.push(w * v);
        self.jac.push(entries.into_iter().map(|(i, d)| (i, w * d)).collect());
    }

    fn sq_norm(&self) -> f64 {
        self.val.iter().map(|v| v * v).sum()
    }
}

struct Problem<'a> {
    terrain: &'a HeightField,
    schedule: &'a GaitSchedule,
    cfg: &'a TrajOptConfig,
    mass: f64,
    inertia: f64,
    com_offset: Vec2,
    foot_radius: f64,
    leg: f64,
    z_ref: f64,
    k: usize,
    h: f64,
    foot_at: [Vec<FootVar>; 2],
    force_at: [Vec<Option<usize>>; 2],
    holds: [Vec<Hold>; 2],
    n: usize,
}

const W_VEL: f64 = 10.0;
const W_HEIGHT: f64 = 10.0;
const W_PITCH: f64 = 3.0;
const W_PITCH_RATE: f64 = 0.3;
const W_FORCE_SMOOTH: f64 = 0.02;
const W_FORCE: f64 = 0.005;
const W_FRICTION: f64 = 30.0;
const W_REACH: f64 = 300.0;
const W_SWING: f64 = 10.0;
const W_SWING_SMOOTH: f64 = 3.0;
const W_HOLD: f64 = 1.0;

impl<'a> Problem<'a> {
    fn base(&self, k: usize, c: usize) -> usize {
        3 * k + c
    }

    fn new(model: &RobotModel, schedule: &'a GaitSchedule, terrain: &'a HeightField, cfg: &'a TrajOptConfig) -> Self {
        let mp = MassProperties::new(model, &DomainParams::nominal());
        let nominal = model.nominal_joints();
        let q = [0.0, 0.0, 0.0, nominal[0], nominal[1], nominal[2], nominal[3]];
        let kin = Kinematics::new(model, &mp, &q);
        let inertia = kin.mass_matrix()[2][2];
        let com_offset = com_in_hip_frame(model, &mp, 0.0, &nominal);
        // centre-of-mass height above the ground with the feet touching it
        let z_ref = model.foot_radius - kin.world(&kin.feet[0])[1];

        let k = (schedule.duration * cfg.knots_per_second).round().max(2.0) as usize;
        let h = schedule.duration / k as f64;
        let mut n = 3 * (k + 1);
        let mut holds: [Vec<Hold>; 2] = [Vec::new(), Vec::new()];
        for (f, hs) in holds.iter_mut().enumerate() {
            for iv in schedule.intervals(f) {
                if iv.kind == PhaseKind::Stance {
                    hs.push(Hold { var: n, start: iv.start, end: iv.end });
                    n += 1;
                }
            }
        }
        let mut foot_at: [Vec<FootVar>; 2] = [Vec::new(), Vec::new()];
        let mut force_at: [Vec<Option<usize>>; 2] = [Vec::new(), Vec::new()];
        for f in 0..2 {
            let intervals = schedule.intervals(f);
            for j in 0..=k {
                let t = j as f64 * h;
                let hold = holds[f]
                    .iter()
                    .find(|hd| t >= hd.start - BOUNDARY_EPS && t <= hd.end + BOUNDARY_EPS);
                match hold {
                    Some(hd) => {
                        foot_at[f].push(FootVar::Hold(hd.var));
                        force_at[f].push(Some(n));
                        n += 2;
                    }
                    None => {
                        let iv = intervals
                            .iter()
                            .find(|iv| t >= iv.start && t <= iv.end)
                            .copied()
                            .expect("time inside clip");
                        let s = (t - iv.start) / (iv.end - iv.start);
                        foot_at[f].push(FootVar::Swing(n, s));
                        force_at[f].push(None);
                        n += 2;
                    }
                }
            }
        }
        Problem {
            terrain,
            schedule,
            cfg,
            mass: mp.total_mass,
            inertia,
            com_offset,
            foot_radius: model.foot_radius,
            leg: model.leg_reach(),
            z_ref,
            k,
            h,
            foot_at,
            force_at,
            holds,
            n,
        }
    }

    /// Foot position and its sparse derivative.
    fn foot(&self, x: &[f64], fv: FootVar) -> (Vec2, Vec<(usize, Vec2)>) {
        match fv {
            FootVar::Hold(v) => {
                let px = x[v];
                (
                    [px, self.terrain.height_at(px) + self.foot_radius],
                    vec![(v, [1.0, self.terrain.slope_at(px)])],
                )
            }
            FootVar::Swing(v, _) => ([x[v], x[v + 1]], vec![(v, [1.0, 0.0]), (v + 1, [0.0, 1.0])]),
        }
    }

    fn hold_pos(&self, x: &[f64], var: usize) -> Vec2 {
        [x[var], self.terrain.height_at(x[var]) + self.foot_radius]
    }

    fn initial_guess(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.n];
        let v = self.schedule.command;
        for j in 0..=self.k {
            let t = j as f64 * self.h;
            x[self.base(j, 0)] = self.cfg.start_x + v * t;
            x[self.base(j, 1)] = self.z_ref + self.terrain.height_at(self.cfg.start_x + v * t);
        }
        let hip_x = |t: f64| self.cfg.start_x + v * t - self.com_offset[0];
        for f in 0..2 {
            for hd in &self.holds[f] {
                x[hd.var] = hip_x(0.5 * (hd.start + hd.end));
            }
        }
        for j in 0..=self.k {
            let t = j as f64 * self.h;
            let n_stance = (0..2).filter(|&f| self.force_at[f][j].is_some()).count();
            for f in 0..2 {
                if let Some(fi) = self.force_at[f][j] {
                    x[fi + 1] = self.mass * self.cfg.gravity / n_stance as f64;
                }
                if let FootVar::Swing(var, s) = self.foot_at[f][j] {
                    x[var] = hip_x(t);
                    x[var + 1] = self.terrain.height_at(hip_x(t)) + self.foot_radius + self.cfg.clearance * 4.0 * s * (1.0 - s);
                }
            }
        }
        x
    }

    fn constraints(&self, x: &[f64]) -> Rows {
        let mut rows = Rows::new();
        let (m, inertia, h2) = (self.mass, self.inertia, self.h * self.h);
        for j in 1..self.k {
            let acc = |c: usize| (x[self.base(j + 1, c)] - 2.0 * x[self.base(j, c)] + x[self.base(j - 1, c)]) / h2;
            let second = |c: usize, scale: f64| {
                vec![
                    (self.base(j + 1, c), scale / h2),
                    (self.base(j, c), -2.0 * scale / h2),
                    (self.base(j - 1, c), scale / h2),
                ]
            };
            let mut ex = second(0, m);
            let mut ez = second(1, m);
            let mut et = second(2, inertia);
            let mut vx = m * acc(0);
            let mut vz = m * acc(1) + m * self.cfg.gravity;
            let mut vt = inertia * acc(2);
            for f in 0..2 {
                let Some(fi) = self.force_at[f][j] else { continue };
                let (fx, fz) = (x[fi], x[fi + 1]);
                vx -= fx;
                vz -= fz;
                ex.push((fi, -1.0));
                ez.push((fi + 1, -1.0));
                let (p, dp) = self.foot(x, self.foot_at[f][j]);
                let r = [p[0] - x[self.base(j, 0)], p[1] - x[self.base(j, 1)]];
                vt -= r[0] * fz - r[1] * fx;
                et.push((self.base(j, 0), fz));
                et.push((self.base(j, 1), -fx));
                et.push((fi + 1, -r[0]));
                et.push((fi, r[1]));
                for (v, d) in dp {
                    et.push((v, -(fz * d[0] - fx * d[1])));
                }
            }
            rows.push(1.0, vx, ex);
            rows.push(1.0, vz, ez);
            rows.push(1.0, vt, et);
        }
        rows
    }

    /// Soft residuals; `violation` collects the largest hinge activation.
    fn residuals(&self, x: &[f64], violation: &mut f64) -> Rows {
        let mut rows = Rows::new();
        let h = self.h;
        let v = self.schedule.command;
        let mu = self.cfg.friction;
        for j in 0..self.k {
            let (a, b) = (self.base(j, 0), self.base(j + 1, 0));
            rows.push(W_VEL, (x[b] - x[a]) / h - v, vec![(b, 1.0 / h), (a, -1.0 / h)]);
            let (a, b) = (self.base(j, 2), self.base(j + 1, 2));
            rows.push(W_PITCH_RATE, (x[b] - x[a]) / h, vec![(b, 1.0 / h), (a, -1.0 / h)]);
        }
        for j in 0..=self.k {
            let (ix, iz, it) = (self.base(j, 0), self.base(j, 1), self.base(j, 2));
            let ground = self.terrain.height_at(x[ix]);
            rows.push(
                W_HEIGHT,
                x[iz] - ground - self.z_ref,
                vec![(iz, 1.0), (ix, -self.terrain.slope_at(x[ix]))],
            );
            rows.push(W_PITCH, x[it], vec![(it, 1.0)]);

            let rc = rotate(x[it], self.com_offset);
            let hip = [x[ix] - rc[0], x[iz] - rc[1]];
            let dhip_dt = [rc[1], -rc[0]];
            let n_stance = (0..2).filter(|&f| self.force_at[f][j].is_some()).count().max(1);
            for f in 0..2 {
                let (p, dp) = self.foot(x, self.foot_at[f][j]);
                let d = [p[0] - hip[0], p[1] - hip[1]];
                let dist = d[0].hypot(d[1]);
                let u = [d[0] / dist, d[1] / dist];
                let mut reach = |excess: f64, sign: f64, rows: &mut Rows| {
                    if excess > 0.0 {
                        *violation = violation.max(excess);
                        let mut e = vec![
                            (ix, -sign * u[0]),
                            (iz, -sign * u[1]),
                            (it, -sign * (u[0] * dhip_dt[0] + u[1] * dhip_dt[1])),
                        ];
                        for (var, dv) in &dp {
                            e.push((*var, sign * (u[0] * dv[0] + u[1] * dv[1])));
                        }
                        rows.push(W_REACH, excess, e);
                    }
                };
                reach(dist - self.cfg.max_reach * self.leg, 1.0, &mut rows);
                reach(self.cfg.min_reach * self.leg - dist, -1.0, &mut rows);

                if let Some(fi) = self.force_at[f][j] {
                    let (fx, fz) = (x[fi], x[fi + 1]);
                    let share = self.mass * self.cfg.gravity / n_stance as f64;
                    rows.push(W_FORCE, fx, vec![(fi, 1.0)]);
                    rows.push(W_FORCE, fz - share, vec![(fi + 1, 1.0)]);
                    for (val, e) in [
                        (fx - mu * fz, vec![(fi, 1.0), (fi + 1, -mu)]),
                        (-fx - mu * fz, vec![(fi, -1.0), (fi + 1, -mu)]),
                        (-fz, vec![(fi + 1, -1.0)]),
                    ] {
                        if val > 0.0 {
                            *violation = violation.max(val);
                            rows.push(W_FRICTION, val, e);
                        }
                    }
                    if j < self.k {
                        if let Some(gi) = self.force_at[f][j + 1] {
                            let same = matches!((self.foot_at[f][j], self.foot_at[f][j + 1]),
                                (FootVar::Hold(a), FootVar::Hold(b)) if a == b);
                            if same {
                                rows.push(W_FORCE_SMOOTH, x[gi] - fx, vec![(gi, 1.0), (fi, -1.0)]);
                                rows.push(W_FORCE_SMOOTH, x[gi + 1] - fz, vec![(gi + 1, 1.0), (fi + 1, -1.0)]);
                            }
                        }
                    }
                }
                if let FootVar::Swing(var, s) = self.foot_at[f][j] {
                    let px = x[var];
                    let target = self.terrain.height_at(px) + self.foot_radius + self.cfg.clearance * 4.0 * s * (1.0 - s);
                    rows.push(
                        W_SWING,
                        x[var + 1] - target,
                        vec![(var + 1, 1.0), (var, -self.terrain.slope_at(px))],
                    );
                    if j > 0 && j < self.k {
                        let (pa, da) = self.foot(x, self.foot_at[f][j - 1]);
                        let (pb, db) = self.foot(x, self.foot_at[f][j + 1]);
                        let mut e: Vec<(usize, f64)> = vec![(var, -2.0)];
                        e.extend(da.iter().map(|(i, d)| (*i, d[0])));
                        e.extend(db.iter().map(|(i, d)| (*i, d[0])));
                        rows.push(W_SWING_SMOOTH, pa[0] - 2.0 * px + pb[0], e);
                    }
                }
            }
        }
        for f in 0..2 {
            for hd in &self.holds[f] {
                let t = 0.5 * (hd.start + hd.end);
                let a = ((t / h).floor() as usize).min(self.k - 1);
                let w = (t - a as f64 * h) / h;
                let (ia, ib) = (self.base(a, 0), self.base(a + 1, 0));
                let com_x = (1.0 - w) * x[ia] + w * x[ib];
                rows.push(
                    W_HOLD,
                    x[hd.var] - (com_x - self.com_offset[0]),
                    vec![(hd.var, 1.0), (ia, -(1.0 - w)), (ib, -w)],
                );
            }
        }
        rows
    }

    fn merit(&self, x: &[f64], rho: f64) -> (f64, f64) {
        let mut viol = 0.0;
        let r = self.residuals(x, &mut viol);
        let c = self.constraints(x);
        let c1: f64 = c.val.iter().map(|v| v.abs()).sum();
        let cmax = c.val.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        (0.5 * r.sq_norm() + rho * c1, cmax)
    }

    fn solve(&self) -> Result<(Vec<f64>, ResidualReport)> {
        let n = self.n;
        let mut x = self.initial_guess();
        let mut mu = 1e-6;
        let mut rho: f64 = 1.0;
        let mut iterations = 0;
        let mut last_cost = f64::INFINITY;
        for it in 0..self.cfg.max_iterations {
            iterations = it + 1;
            let mut viol = 0.0;
            let r = self.residuals(&x, &mut viol);
            let c = self.constraints(&x);
            let m = c.val.len();
            let dim = n + m;
            let mut kkt = DMatrix::<f64>::zeros(dim, dim);
            let mut rhs = DVector::<f64>::zeros(dim);
            for (val, row) in r.val.iter().zip(&r.jac) {
                for &(i, di) in row {
                    rhs[i] -= di * val;
                    for &(k, dk) in row {
                        kkt[(i, k)] += di * dk;
                    }
                }
            }
            for i in 0..n {
                kkt[(i, i)] += mu;
            }
            for (ci, (val, row)) in c.val.iter().zip(&c.jac).enumerate() {
                for &(i, di) in row {
                    kkt[(n + ci, i)] += di;
                    kkt[(i, n + ci)] += di;
                }
                rhs[n + ci] = -val;
            }
            let sol = kkt
                .lu()
                .solve(&rhs)
                .ok_or_else(|| Error::Numeric("trajectory optimization KKT system is singular".into()))?;
            let lambda_max = (n..dim).fold(0.0f64, |a, i| a.max(sol[i].abs()));
            rho = rho.max(1.5 * lambda_max);
            let (phi0, _) = self.merit(&x, rho);
            let mut alpha = 1.0;
            let mut accepted = false;
            let mut trial = x.clone();
            for _ in 0..30 {
                for i in 0..n {
                    trial[i] = x[i] + alpha * sol[i];
                }
                let (phi, _) = self.merit(&trial, rho);
                if phi < phi0 || (phi - phi0).abs() <= 1e-14 * phi0.max(1.0) {
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !accepted {
                mu *= 10.0;
                if mu > 1e6 {
                    break;
                }
                continue;
            }
            x.clone_from(&trial);
            mu = if alpha == 1.0 { (mu / 3.0).max(1e-9) } else { mu * 2.0 };
            let step = (0..n).fold(0.0f64, |a, i| a.max((alpha * sol[i]).abs()));
            let mut viol = 0.0;
            let cost = 0.5 * self.residuals(&x, &mut viol).sq_norm();
            let cmax = self.constraints(&x).val.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let settled = (last_cost - cost).abs() <= 1e-10 * cost.max(1e-12) || step < 1e-11;
            last_cost = cost;
            if cmax < 1e-9 && settled {
                break;
            }
        }
        let mut viol = 0.0;
        let cost = 0.5 * self.residuals(&x, &mut viol).sq_norm();
        let defect = self.constraints(&x).val.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        Ok((x, ResidualReport { max_dynamics_defect: defect, max_constraint_violation: viol, iterations, cost }))
    }

    fn to_trajectory(&self, x: &[f64], report: ResidualReport) -> SrbdTrajectory {
        let knots = self.k + 1;
        let knot_times: Vec<f64> = (0..knots).map(|j| j as f64 * self.h).collect();
        let base: Vec<[f64; 3]> = (0..knots)
            .map(|j| [x[self.base(j, 0)], x[self.base(j, 1)], x[self.base(j, 2)]])
            .collect();
        let base_vel = (0..knots)
            .map(|j| {
                let mut v = [0.0; 3];
                for c in 0..3 {
                    v[c] = if j == 0 {
                        (-3.0 * base[0][c] + 4.0 * base[1][c] - base[2][c]) / (2.0 * self.h)
                    } else if j == self.k {
                        (3.0 * base[j][c] - 4.0 * base[j - 1][c] + base[j - 2][c]) / (2.0 * self.h)
                    } else {
                        (base[j + 1][c] - base[j - 1][c]) / (2.0 * self.h)
                    };
                }
                v
            })
            .collect();
        let feet = (0..knots)
            .map(|j| [self.foot(x, self.foot_at[0][j]).0, self.foot(x, self.foot_at[1][j]).0])
            .collect();
        let forces = (0..knots)
            .map(|j| {
                let f = |foot: usize| self.force_at[foot][j].map_or([0.0, 0.0], |i| [x[i], x[i + 1]]);
                [f(0), f(1)]
            })
            .collect();
        let foot_tracks = [0, 1].map(|f| {
            let mut samples = Vec::new();
            for (idx, hd) in self.holds[f].iter().enumerate() {
                let p = self.hold_pos(x, hd.var);
                samples.push(FootSample { t: hd.start, pos: p, stance: Some(idx) });
                samples.push(FootSample { t: hd.end, pos: p, stance: Some(idx) });
            }
            for j in 0..knots {
                if let FootVar::Swing(var, _) = self.foot_at[f][j] {
                    samples.push(FootSample { t: knot_times[j], pos: [x[var], x[var + 1]], stance: None });
                }
            }
            samples.sort_by(|a, b| a.t.total_cmp(&b.t));
            samples
        });
        SrbdTrajectory {
            schedule: self.schedule.clone(),
            knot_times,
            base,
            base_vel,
            feet,
            forces,
            foot_tracks,
            mass: self.mass,
            inertia: self.inertia,
            gravity: self.cfg.gravity,
            com_offset: self.com_offset,
            report,
        }
    }
}

/// Solve the gait transcription for `schedule` on `terrain`.
pub fn optimize_gait(
    model: &RobotModel,
    schedule: &GaitSchedule,
    terrain: &HeightField,
    config: &TrajOptConfig,
) -> Result<SrbdTrajectory> {
    schedule.validate()?;
    model.validate()?;
    if schedule.command.abs() > config.max_speed {
        return Err(Error::Config(format!(
            "command {} m/s exceeds the {} m/s envelope",
            schedule.command, config.max_speed
        )));
    }
    let problem = Problem::new(model, schedule, terrain, config);
    let (x, report) = problem.solve()?;
    if !(report.max_dynamics_defect < config.defect_tolerance) || x.iter().any(|v| !v.is_finite()) {
        return Err(Error::OptimizationFailed {
            iterations: report.iterations,
            max_defect: report.max_dynamics_defect,
            max_violation: report.max_constraint_violation,
        });
    }
    Ok(problem.to_trajectory(&x, report))
}

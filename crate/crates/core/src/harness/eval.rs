use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::amp::{stack_features, style_reward, Discriminator};
use crate::distill::{ObservationHistory, StudentPolicy};
use crate::error::{Error, Result};
use crate::nn::Checkpoint;
use crate::rl::{csv_err, EnvConfig, EpisodeSetup, LocomotionEnv, Observation, RewardTerms, TeacherPolicy};
use crate::sim::{apply_push, randomize_domain, DomainRanges, RobotModel, SimConfig, TerminationReason, CONTROL_DT};
use crate::terrain::{generate_terrain, HeightField, TerrainKind};

/// Maps observations to joint offsets, keeping whatever memory it needs.
pub trait Controller {
    fn reset(&mut self);
    fn act(&mut self, obs: &Observation) -> Result<[f64; 4]>;
}

pub struct TeacherController<'a> {
    policy: &'a TeacherPolicy,
}

impl<'a> TeacherController<'a> {
    pub fn new(policy: &'a TeacherPolicy) -> Self {
        TeacherController { policy }
    }
}

impl Controller for TeacherController<'_> {
    fn reset(&mut self) {}

    fn act(&mut self, obs: &Observation) -> Result<[f64; 4]> {
        Ok(self.policy.forward(obs)?.mean)
    }
}

pub struct StudentController<'a> {
    policy: &'a StudentPolicy,
    history: ObservationHistory,
}

impl<'a> StudentController<'a> {
    pub fn new(policy: &'a StudentPolicy) -> Self {
        StudentController { policy, history: policy.new_history() }
    }
}

impl Controller for StudentController<'_> {
    fn reset(&mut self) {
        self.history.clear();
    }

    fn act(&mut self, obs: &Observation) -> Result<[f64; 4]> {
        let out = self.policy.forward(&self.history, &obs.proprio)?;
        self.history.push(obs.proprio.input(&self.policy.scaling.nominal_joints));
        Ok(out.action)
    }
}

/// A deployable policy: the privileged teacher or the history-based student.
#[derive(Debug, Clone, PartialEq)]
pub enum Policy {
    Teacher(TeacherPolicy),
    Student(StudentPolicy),
}

impl Policy {
    pub fn controller(&self) -> Box<dyn Controller + '_> {
        match self {
            Policy::Teacher(p) => Box::new(TeacherController { policy: p }),
            Policy::Student(p) => Box::new(StudentController::new(p)),
        }
    }

    /// Prefers the student when the checkpoint holds both.
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        if ckpt.network("student.memory_encoder").is_ok() {
            Ok(Policy::Student(StudentPolicy::from_checkpoint(ckpt)?))
        } else {
            Ok(Policy::Teacher(TeacherPolicy::from_checkpoint(ckpt)?))
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Policy::Teacher(_) => "teacher",
            Policy::Student(_) => "student",
        }
    }
}

/// One control step of an evaluation episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeRow {
    pub time: f64,
    pub cmd_vx: f64,
    pub vx: f64,
    pub cmd_yaw_rate: f64,
    /// Rotation rate of the trunk in the sagittal plane.
    pub yaw_rate: f64,
    pub joints: [f64; 4],
    pub joint_vel: [f64; 4],
    /// `[Fx, Fz]` ground force on each foot.
    pub foot_force: [[f64; 2]; 2],
    pub reward: RewardTerms,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub rows: Vec<EpisodeRow>,
    pub horizon: usize,
    pub termination: Option<TerminationReason>,
}

impl EpisodeLog {
    /// Ran the full horizon without terminating.
    pub fn completed(&self) -> bool {
        self.termination.is_none() && self.rows.len() >= self.horizon
    }
}

pub const EPISODE_COLUMNS: [&str; 24] = [
    "time",
    "cmd_vx",
    "vx",
    "cmd_yaw_rate",
    "yaw_rate",
    "q_left_thigh",
    "q_left_calf",
    "q_right_thigh",
    "q_right_calf",
    "qd_left_thigh",
    "qd_left_calf",
    "qd_right_thigh",
    "qd_right_calf",
    "left_fx",
    "left_fz",
    "right_fx",
    "right_fz",
    "reward_task",
    "reward_style",
    "reward_reg",
    "reward_total",
    "step",
    "done",
    "termination",
];

pub fn write_episode_csv<W: Write>(log: &EpisodeLog, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(EPISODE_COLUMNS).map_err(csv_err)?;
    let last = log.rows.len().saturating_sub(1);
    for (k, r) in log.rows.iter().enumerate() {
        let mut rec: Vec<String> = [r.time, r.cmd_vx, r.vx, r.cmd_yaw_rate, r.yaw_rate]
            .iter()
            .chain(&r.joints)
            .chain(&r.joint_vel)
            .chain(r.foot_force.iter().flatten())
            .chain(&[r.reward.task, r.reward.style, r.reward.regularization, r.reward.total()])
            .map(|v| format!("{v}"))
            .collect();
        rec.push(k.to_string());
        let done = k == last;
        rec.push(u8::from(done).to_string());
        rec.push(match (done, log.termination) {
            (true, Some(t)) => t.name().to_string(),
            (true, None) if log.completed() => "horizon".into(),
            _ => String::new(),
        });
        out.write_record(&rec).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

/// `100 * mean(exp(-|cmd_vx - vx|))` over the steps of an episode.
pub fn tracking_accuracy(log: &EpisodeLog) -> Result<f64> {
    if log.rows.is_empty() {
        return Err(Error::Data("tracking accuracy of an empty episode".into()));
    }
    let s: f64 = log.rows.iter().map(|r| (-(r.cmd_vx - r.vx).abs()).exp()).sum();
    Ok(100.0 * s / log.rows.len() as f64)
}

/// Percentage of episodes that ran their full horizon.
pub fn success_rate(logs: &[EpisodeLog]) -> Result<f64> {
    if logs.is_empty() {
        return Err(Error::Data("success rate of zero episodes".into()));
    }
    Ok(100.0 * logs.iter().filter(|l| l.completed()).count() as f64 / logs.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PushTestConfig {
    pub trials: usize,
    pub speed: f64,
    /// Push onset (s).
    pub time: f64,
    /// Momentum delivered (N s).
    pub impulse: f64,
    pub duration: f64,
    /// Time after the push within which the speed must recover (s).
    pub recovery_time: f64,
    /// Span at the end of the recovery time over which velocity is averaged (s).
    pub settle_span: f64,
    pub tolerance: f64,
}

impl Default for PushTestConfig {
    fn default() -> Self {
        PushTestConfig {
            trials: 10,
            speed: 0.5,
            time: 2.0,
            impulse: 10.0 * 9.0 / 12.5,
            duration: 0.1,
            recovery_time: 2.0,
            settle_span: 0.5,
            tolerance: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub episodes: usize,
    pub horizon_steps: usize,
    pub terrains: Vec<String>,
    pub speeds: Vec<f64>,
    pub difficulty: f64,
    pub spawn_x: f64,
    pub init_noise: f64,
    pub domain: DomainRanges,
    pub push: PushTestConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            episodes: 50,
            horizon_steps: 1000,
            terrains: ["uniform_noise", "wave", "stepping_stones", "slope", "stairs", "obstacles"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            speeds: vec![0.5, 1.0, 1.5, 2.0],
            difficulty: 0.5,
            spawn_x: 1.0,
            init_noise: 0.0,
            domain: DomainRanges::nominal(),
            push: PushTestConfig::default(),
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 || self.horizon_steps == 0 {
            return Err(Error::Config("evaluation needs positive episodes and horizon".into()));
        }
        if !(0.0..=1.0).contains(&self.difficulty) {
            return Err(Error::Config("evaluation difficulty must be in [0, 1]".into()));
        }
        self.terrain_kinds()?;
        let p = &self.push;
        if p.trials == 0 || !(p.duration > 0.0) || !(p.settle_span > 0.0) || p.settle_span > p.recovery_time {
            return Err(Error::Config("push test needs trials, a positive duration and settle span <= recovery time".into()));
        }
        self.domain.validate()
    }

    pub fn terrain_kinds(&self) -> Result<Vec<TerrainKind>> {
        self.terrains.iter().map(|s| s.parse()).collect()
    }

    fn env_config(&self, horizon: usize) -> EnvConfig {
        EnvConfig { max_episode_steps: horizon, init_noise: self.init_noise, spawn_x: self.spawn_x, ..EnvConfig::default() }
    }

    /// Enough ground for the commanded distance plus margin.
    fn terrain_length(&self, speed: f64, horizon: usize) -> f64 {
        self.spawn_x + speed.abs() * horizon as f64 * CONTROL_DT * 1.5 + 5.0
    }
}

/// A scheduled push for [`run_episode`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Push {
    pub time: f64,
    pub force: [f64; 2],
    pub duration: f64,
}

/// Roll out one episode of at most `horizon` control steps.
#[allow(clippy::too_many_arguments)]
pub fn run_episode(
    model: &RobotModel,
    sim: &SimConfig,
    env_cfg: &EnvConfig,
    setup: EpisodeSetup,
    controller: &mut dyn Controller,
    disc: Option<&Discriminator>,
    push: Option<Push>,
    seed: u64,
) -> Result<EpisodeLog> {
    let horizon = env_cfg.max_episode_steps;
    let mut env = LocomotionEnv::new(model.clone(), *sim, setup, env_cfg.init_noise, env_cfg.spawn_x, seed)?;
    controller.reset();
    let mut log = EpisodeLog { rows: Vec::with_capacity(horizon), horizon, termination: None };
    let mut pushed = false;
    for _ in 0..horizon {
        if let Some(p) = push {
            if !pushed && env.state.time + 1e-9 >= p.time {
                apply_push(&mut env.state, p.force, p.duration)?;
                pushed = true;
            }
        }
        let action = controller.act(&env.obs)?;
        let r = env.step(action, env_cfg);
        let mut reward = r.reward;
        if let Some(d) = disc {
            let score = d.scores(stack_features(&[r.transition]).view())?[0];
            reward.style = env_cfg.rewards.style * style_reward(score);
        }
        let base = env.sim.base_state(&env.state);
        let ff = env.state.foot_force;
        log.rows.push(EpisodeRow {
            time: env.state.time,
            cmd_vx: env.command[0],
            vx: base.velocity[0],
            cmd_yaw_rate: env.command[1],
            yaw_rate: base.pitch_rate,
            joints: env.state.joints(),
            joint_vel: env.state.joint_velocities(),
            foot_force: [[ff[0][0], ff[0][1]], [ff[1][0], ff[1][1]]],
            reward,
        });
        if let Some(t) = r.terminated {
            log.termination = Some(t);
            break;
        }
    }
    Ok(log)
}

fn episode_seed(base: u64, parts: &[u64]) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    for &p in parts {
        rng = ChaCha8Rng::seed_from_u64(rng.gen::<u64>() ^ p.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    }
    rng.gen()
}

fn eval_setup(cfg: &EvalConfig, kind: TerrainKind, speed: f64, seed: u64) -> Result<EpisodeSetup> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let length = cfg.terrain_length(speed, cfg.horizon_steps);
    let terrain = match kind {
        TerrainKind::Flat => HeightField::flat(length),
        k => generate_terrain(k, cfg.difficulty, rng.gen(), length)?,
    };
    let domain = randomize_domain(rng.gen(), &cfg.domain)?;
    Ok(EpisodeSetup { terrain, domain, command: [speed, 0.0] })
}

/// Episodes of `policy` on one terrain at one speed, run in parallel.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_cell(
    policy: &Policy,
    model: &RobotModel,
    sim: &SimConfig,
    cfg: &EvalConfig,
    kind: TerrainKind,
    speed: f64,
    episodes: usize,
    seed: u64,
) -> Result<Vec<EpisodeLog>> {
    let env_cfg = cfg.env_config(cfg.horizon_steps);
    (0..episodes)
        .into_par_iter()
        .map(|e| {
            let s = episode_seed(seed, &[e as u64]);
            let setup = eval_setup(cfg, kind, speed, s)?;
            let mut ctrl = policy.controller();
            run_episode(model, sim, &env_cfg, setup, ctrl.as_mut(), None, None, s ^ 1)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub terrain: TerrainKind,
    pub speed: f64,
    pub accuracy: f64,
    pub success: f64,
    pub episodes: usize,
}

pub const SWEEP_COLUMNS: [&str; 5] = ["terrain", "speed_mps", "acc_pct", "succ_pct", "n_episodes"];

/// Tracking accuracy and success rate for every configured terrain and speed.
pub fn eval_sweep(policy: &Policy, model: &RobotModel, sim: &SimConfig, cfg: &EvalConfig, seed: u64) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let kinds = cfg.terrain_kinds()?;
    let mut rows = Vec::with_capacity(kinds.len() * cfg.speeds.len());
    for (ti, &kind) in kinds.iter().enumerate() {
        for (si, &speed) in cfg.speeds.iter().enumerate() {
            let cell_seed = episode_seed(seed, &[ti as u64, si as u64]);
            let logs = evaluate_cell(policy, model, sim, cfg, kind, speed, cfg.episodes, cell_seed)?;
            let acc = logs.iter().map(tracking_accuracy).sum::<Result<f64>>()? / logs.len() as f64;
            rows.push(SweepRow { terrain: kind, speed, accuracy: acc, success: success_rate(&logs)?, episodes: logs.len() });
        }
    }
    Ok(rows)
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(SWEEP_COLUMNS).map_err(csv_err)?;
    for r in rows {
        out.write_record([
            r.terrain.name().to_string(),
            format!("{:.2}", r.speed),
            format!("{:.4}", r.accuracy),
            format!("{:.4}", r.success),
            r.episodes.to_string(),
        ])
        .map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PushTrial {
    pub direction: f64,
    pub recovered: bool,
    /// Mean forward velocity over the settle span.
    pub settled_vx: f64,
    pub log: EpisodeLog,
}

/// Whether an episode pushed at `cfg.time` survives and returns to the
/// commanded speed within the recovery time.
pub fn push_recovered(log: &EpisodeLog, cfg: &PushTestConfig) -> (bool, f64) {
    let end = cfg.time + cfg.recovery_time;
    let window: Vec<f64> = log
        .rows
        .iter()
        .filter(|r| r.time > end - cfg.settle_span - 1e-9 && r.time <= end + 1e-9)
        .map(|r| r.vx)
        .collect();
    if log.termination.is_some() || window.is_empty() {
        return (false, f64::NAN);
    }
    let vx = window.iter().sum::<f64>() / window.len() as f64;
    (log.completed() && (vx - cfg.speed).abs() <= cfg.tolerance, vx)
}

pub const PUSH_COLUMNS: [&str; 5] = ["trial", "direction", "recovered", "settled_vx", "termination"];

pub fn write_push_csv<W: Write>(trials: &[PushTrial], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(PUSH_COLUMNS).map_err(csv_err)?;
    for (k, t) in trials.iter().enumerate() {
        out.write_record([
            k.to_string(),
            format!("{}", t.direction),
            u8::from(t.recovered).to_string(),
            format!("{:.4}", t.settled_vx),
            t.log.termination.map(|r| r.name()).unwrap_or("").to_string(),
        ])
        .map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

/// Flat-ground push trials with random push direction.
pub fn run_push_test(
    policy: &Policy,
    model: &RobotModel,
    sim: &SimConfig,
    cfg: &EvalConfig,
    seed: u64,
) -> Result<Vec<PushTrial>> {
    cfg.validate()?;
    let p = cfg.push;
    let horizon = ((p.time + p.recovery_time) / CONTROL_DT).ceil() as usize + 1;
    let env_cfg = cfg.env_config(horizon);
    (0..p.trials)
        .into_par_iter()
        .map(|k| {
            let s = episode_seed(seed, &[k as u64]);
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let direction = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            let domain = randomize_domain(rng.gen(), &cfg.domain)?;
            let setup = EpisodeSetup {
                terrain: HeightField::flat(cfg.terrain_length(p.speed, horizon)),
                domain,
                command: [p.speed, 0.0],
            };
            let push = Push { time: p.time, force: [direction * p.impulse / p.duration, 0.0], duration: p.duration };
            let mut ctrl = policy.controller();
            let log = run_episode(model, sim, &env_cfg, setup, ctrl.as_mut(), None, Some(push), rng.gen())?;
            let (recovered, settled_vx) = push_recovered(&log, &p);
            Ok(PushTrial { direction, recovered, settled_vx, log })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(cmd: f64, vx: f64, t: f64) -> EpisodeRow {
        EpisodeRow {
            time: t,
            cmd_vx: cmd,
            vx,
            cmd_yaw_rate: 0.0,
            yaw_rate: 0.0,
            joints: [0.0; 4],
            joint_vel: [0.0; 4],
            foot_force: [[0.0; 2]; 2],
            reward: RewardTerms::default(),
        }
    }

    #[test]
    fn accuracy_examples() {
        let log = EpisodeLog { rows: vec![row(1.0, 1.0, 0.02), row(1.0, 0.0, 0.04)], horizon: 2, termination: None };
        let a = tracking_accuracy(&log).unwrap();
        assert!((a - 50.0 * (1.0 + (-1.0f64).exp())).abs() < 1e-12);
        let empty = EpisodeLog { rows: vec![], horizon: 1, termination: None };
        assert!(matches!(tracking_accuracy(&empty), Err(Error::Data(_))));
    }

    #[test]
    fn success_counts_full_horizon() {
        let ok = EpisodeLog { rows: vec![row(0.0, 0.0, 0.02); 3], horizon: 3, termination: None };
        let short = EpisodeLog { rows: vec![row(0.0, 0.0, 0.02)], horizon: 3, termination: Some(TerminationReason::Fall) };
        assert_eq!(success_rate(&[ok.clone(), short, ok]).unwrap(), 200.0 / 3.0);
        assert!(success_rate(&[]).is_err());
    }

    #[test]
    fn sweep_rejects_unknown_terrain() {
        let cfg = EvalConfig { terrains: vec!["lava".into()], ..EvalConfig::default() };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn push_impulse_scaled_to_robot_mass() {
        assert!((PushTestConfig::default().impulse - 7.2).abs() < 1e-12);
    }
}

//! Locomotion environments: episode setup, control steps, rewards and resets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::obs::Observation;
use super::reward::{limit_violation, regularization_reward, task_reward, RewardTerms, RewardWeights};
use crate::amp::{build_amp_state, AmpState, AmpTransition, Source};
use crate::error::{Error, Result};
use crate::sim::{
    randomize_domain, DomainParams, DomainRanges, PdCommand, RobotModel, SimConfig, SimState, Simulator,
    TerminationReason, CONTROL_DT,
};
use crate::terrain::{generate_terrain, HeightField, TerrainKind};

pub type Range = [f64; 2];

/// Per-episode command sampling ranges. The angular command is the planar
/// counterpart of a yaw-rate command (trunk pitch rate).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CommandRanges {
    pub vx: Range,
    pub angular: Range,
}

impl Default for CommandRanges {
    fn default() -> Self {
        CommandRanges { vx: [-0.5, 2.0], angular: [0.0, 0.0] }
    }
}

impl CommandRanges {
    pub fn fixed(vx: f64) -> Self {
        CommandRanges { vx: [vx, vx], angular: [0.0, 0.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TerrainSpec {
    pub kinds: Vec<TerrainKind>,
    /// Difficulty ceiling reached at the end of the curriculum.
    pub max_difficulty: f64,
    /// Iterations over which the ceiling ramps up from zero.
    pub curriculum_iterations: usize,
    pub length: f64,
}

impl Default for TerrainSpec {
    fn default() -> Self {
        TerrainSpec { kinds: vec![TerrainKind::Flat], max_difficulty: 0.0, curriculum_iterations: 1, length: 30.0 }
    }
}

impl TerrainSpec {
    pub fn difficulty_ceiling(&self, iteration: usize) -> f64 {
        let ramp = (iteration as f64 / self.curriculum_iterations.max(1) as f64).min(1.0);
        self.max_difficulty * ramp
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub max_episode_steps: usize,
    pub action_bound: f64,
    /// Half-width of the uniform joint perturbation at reset (rad).
    pub init_noise: f64,
    pub spawn_x: f64,
    pub commands: CommandRanges,
    pub terrain: TerrainSpec,
    pub domain: DomainRanges,
    pub rewards: RewardWeights,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            max_episode_steps: 1000,
            action_bound: 1.0,
            init_noise: 0.05,
            spawn_x: 1.0,
            commands: CommandRanges::default(),
            terrain: TerrainSpec::default(),
            domain: DomainRanges::default(),
            rewards: RewardWeights::default(),
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        let ranges = [("commands.vx", self.commands.vx), ("commands.angular", self.commands.angular)];
        for (name, [lo, hi]) in ranges {
            if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::Config(format!("range `{name}` is malformed: [{lo}, {hi}]")));
            }
        }
        if self.max_episode_steps == 0 || !(self.action_bound > 0.0) || !(self.init_noise >= 0.0) {
            return Err(Error::Config("episode length, action bound and init noise must be positive".into()));
        }
        if self.terrain.kinds.is_empty() || !(0.0..=1.0).contains(&self.terrain.max_difficulty) || !(self.terrain.length > 0.0) {
            return Err(Error::Config("terrain spec needs kinds, difficulty in [0, 1] and positive length".into()));
        }
        self.domain.validate()
    }
}

/// Everything fixed for one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeSetup {
    pub terrain: HeightField,
    pub domain: DomainParams,
    /// `[vx, angular]`.
    pub command: [f64; 2],
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, [lo, hi]: Range) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..=hi)
    }
}

/// Draw a random episode from the configured distributions.
pub fn sample_setup<R: Rng + ?Sized>(cfg: &EnvConfig, ceiling: f64, rng: &mut R) -> Result<EpisodeSetup> {
    let kind = cfg.terrain.kinds[rng.gen_range(0..cfg.terrain.kinds.len())];
    let difficulty = if ceiling > 0.0 { rng.gen_range(0.0..=ceiling) } else { 0.0 };
    let terrain_seed: u64 = rng.gen();
    let domain_seed: u64 = rng.gen();
    let terrain = match kind {
        TerrainKind::Flat => HeightField::flat(cfg.terrain.length),
        k => generate_terrain(k, difficulty, terrain_seed, cfg.terrain.length)?,
    };
    let domain = randomize_domain(domain_seed, &cfg.domain)?;
    let command = [uniform(rng, cfg.commands.vx), uniform(rng, cfg.commands.angular)];
    Ok(EpisodeSetup { terrain, domain, command })
}

/// Outcome of one control step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    /// Task and regularization terms; style is filled in by the caller.
    pub reward: RewardTerms,
    pub transition: AmpTransition,
    pub terminated: Option<TerminationReason>,
    pub truncated: bool,
    /// Episode length including this step.
    pub episode_steps: usize,
}

impl StepResult {
    pub fn done(&self) -> bool {
        self.terminated.is_some() || self.truncated
    }
}

#[derive(Debug, Clone)]
pub struct LocomotionEnv {
    pub model: RobotModel,
    pub sim_config: SimConfig,
    pub sim: Simulator,
    pub terrain: HeightField,
    pub state: SimState,
    pub command: [f64; 2],
    pub prev_action: [f64; 4],
    pub steps: usize,
    pub obs: Observation,
    amp: AmpState,
    rng: ChaCha8Rng,
}

impl LocomotionEnv {
    pub fn new(
        model: RobotModel,
        sim_config: SimConfig,
        setup: EpisodeSetup,
        init_noise: f64,
        spawn_x: f64,
        seed: u64,
    ) -> Result<Self> {
        let sim = Simulator::new(model.clone(), setup.domain.clone(), sim_config)?;
        let state = sim.standing_state(&setup.terrain, spawn_x);
        let obs = Observation::build(&sim, &state, &setup.terrain, [0.0; 4]);
        let amp = build_amp_state(&sim, &state, &setup.terrain);
        let mut env = LocomotionEnv {
            model,
            sim_config,
            sim,
            terrain: setup.terrain.clone(),
            state,
            command: setup.command,
            prev_action: [0.0; 4],
            steps: 0,
            obs,
            amp,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        env.reset_with(setup, init_noise, spawn_x)?;
        Ok(env)
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    /// Start a new episode standing at `spawn_x` with perturbed joints.
    pub fn reset_with(&mut self, setup: EpisodeSetup, init_noise: f64, spawn_x: f64) -> Result<()> {
        self.sim = Simulator::new(self.model.clone(), setup.domain, self.sim_config)?;
        self.terrain = setup.terrain;
        self.command = setup.command;
        let mut joints = self.model.nominal_joints();
        if init_noise > 0.0 {
            for j in &mut joints {
                *j += self.rng.gen_range(-init_noise..=init_noise);
            }
        }
        self.state = self.sim.posed_state(&self.terrain, spawn_x, joints, 0.0);
        self.prev_action = [0.0; 4];
        self.steps = 0;
        self.refresh();
        Ok(())
    }

    pub fn reset_random(&mut self, cfg: &EnvConfig, ceiling: f64) -> Result<()> {
        let setup = sample_setup(cfg, ceiling, &mut self.rng)?;
        self.reset_with(setup, cfg.init_noise, cfg.spawn_x)
    }

    fn refresh(&mut self) {
        self.obs = Observation::build(&self.sim, &self.state, &self.terrain, self.prev_action);
        self.amp = build_amp_state(&self.sim, &self.state, &self.terrain);
    }

    /// Hold `action` (joint offsets, clipped to the bound) for one control period.
    pub fn step(&mut self, action: [f64; 4], cfg: &EnvConfig) -> StepResult {
        let cmd = PdCommand::new(action, cfg.action_bound);
        let before = self.amp;
        let mut terminated = None;
        match self.sim.step(&self.state, &cmd, &self.terrain, CONTROL_DT) {
            Ok(next) => self.state = next,
            Err(_) => terminated = Some(TerminationReason::Diverged),
        }
        self.steps += 1;
        let prev = self.prev_action;
        self.prev_action = cmd.offsets;
        if terminated.is_none() {
            terminated = self.sim.check_termination(&self.state, &self.terrain);
        }
        let reward = if terminated == Some(TerminationReason::Diverged) {
            RewardTerms::default()
        } else {
            self.refresh();
            let base = self.sim.base_state(&self.state);
            let w = &cfg.rewards;
            let limits = self.model.joint_limits();
            RewardTerms {
                task: task_reward(self.command[0], base.velocity[0], self.command[1], base.pitch_rate, w.tracking_v, w.tracking_w),
                style: 0.0,
                regularization: regularization_reward(
                    w,
                    base.velocity[1],
                    &cmd.offsets,
                    &prev,
                    &self.state.joint_torque,
                    limit_violation(&self.state.joints(), &limits),
                ),
            }
        };
        let truncated = terminated.is_none() && self.steps >= cfg.max_episode_steps;
        StepResult {
            reward,
            transition: AmpTransition::new(before, self.amp, Source::Agent),
            terminated,
            truncated,
            episode_steps: self.steps,
        }
    }
}

/// Summary of a finished episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeSummary {
    pub length: usize,
    pub terminated: Option<TerminationReason>,
}

/// A batch of independently seeded environments with automatic resets.
#[derive(Debug, Clone)]
pub struct VecEnv {
    pub envs: Vec<LocomotionEnv>,
    pub config: EnvConfig,
    pub ceiling: f64,
}

/// One step of every environment.
#[derive(Debug, Clone)]
pub struct VecStep {
    pub results: Vec<StepResult>,
    /// Observation reached just before an automatic reset, for truncated episodes.
    pub final_obs: Vec<Option<Observation>>,
    pub finished: Vec<EpisodeSummary>,
}

impl VecEnv {
    pub fn new(model: &RobotModel, sim_config: &SimConfig, config: EnvConfig, n_envs: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        if n_envs == 0 {
            return Err(Error::Config("need at least one environment".into()));
        }
        let mut seeder = ChaCha8Rng::seed_from_u64(seed);
        let mut envs = Vec::with_capacity(n_envs);
        for _ in 0..n_envs {
            let env_seed: u64 = seeder.gen();
            let mut rng = ChaCha8Rng::seed_from_u64(env_seed);
            let setup = sample_setup(&config, 0.0, &mut rng)?;
            let env_rng_seed: u64 = rng.gen();
            envs.push(LocomotionEnv::new(
                model.clone(),
                *sim_config,
                setup,
                config.init_noise,
                config.spawn_x,
                env_rng_seed,
            )?);
        }
        Ok(VecEnv { envs, config, ceiling: 0.0 })
    }

    pub fn len(&self) -> usize {
        self.envs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.envs.is_empty()
    }

    pub fn set_iteration(&mut self, iteration: usize) {
        self.ceiling = self.config.terrain.difficulty_ceiling(iteration);
    }

    pub fn observations(&self) -> Vec<Observation> {
        self.envs.iter().map(|e| e.obs).collect()
    }

    /// Step every environment in parallel, resetting finished ones.
    pub fn step(&mut self, actions: &[[f64; 4]]) -> Result<VecStep> {
        if actions.len() != self.envs.len() {
            return Err(Error::Shape(format!("{} actions for {} environments", actions.len(), self.envs.len())));
        }
        let cfg = &self.config;
        let ceiling = self.ceiling;
        let out: Vec<Result<(StepResult, Option<Observation>)>> = self
            .envs
            .par_iter_mut()
            .zip(actions.par_iter())
            .map(|(env, a)| {
                let r = env.step(*a, cfg);
                let mut final_obs = None;
                if r.done() {
                    if r.truncated {
                        final_obs = Some(env.obs);
                    }
                    env.reset_random(cfg, ceiling)?;
                }
                Ok((r, final_obs))
            })
            .collect();
        let mut step = VecStep { results: Vec::with_capacity(out.len()), final_obs: Vec::with_capacity(out.len()), finished: Vec::new() };
        for o in out {
            let (r, f) = o?;
            if r.done() {
                step.finished.push(EpisodeSummary { length: r.episode_steps, terminated: r.terminated });
            }
            step.results.push(r);
            step.final_obs.push(f);
        }
        Ok(step)
    }
}

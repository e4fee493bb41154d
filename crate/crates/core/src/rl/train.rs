use std::collections::VecDeque;
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::env::{EnvConfig, VecEnv};
use super::policy::{InputScaling, PolicyShape, TeacherPolicy};
use super::ppo::{ppo_update, PolicyOptimizer, PpoConfig, PpoStats};
use super::rollout::{collect_rollouts, RolloutBuffer};
use crate::amp::{DiscriminatorConfig, DiscriminatorTrainer, LossTerms, TransitionDataset};
use crate::error::{Error, Result};
use crate::nn::Checkpoint;
use crate::sim::{RobotModel, SimConfig};

/// Episodes averaged for the reported episode length.
const LENGTH_WINDOW: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub iterations: usize,
    pub n_envs: usize,
    pub n_steps: usize,
    /// Factor applied to the composed reward before advantage estimation.
    pub reward_scale: f64,
    pub ppo: PpoConfig,
    pub policy: PolicyShape,
    pub discriminator: DiscriminatorConfig,
    pub env: EnvConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 2000,
            n_envs: 64,
            n_steps: 100,
            reward_scale: 0.1,
            ppo: PpoConfig::default(),
            policy: PolicyShape::default(),
            discriminator: DiscriminatorConfig::default(),
            env: EnvConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_envs == 0 || self.n_steps == 0 || !(self.reward_scale > 0.0) {
            return Err(Error::Config("n_envs, n_steps and reward_scale must be positive".into()));
        }
        self.ppo.validate()?;
        self.env.validate()
    }
}

pub const TRAIN_LOG_COLUMNS: [&str; 8] =
    ["iteration", "task_reward", "style_reward", "reg_reward", "episode_length", "disc_demo", "disc_agent", "kl"];

/// One row of the training log.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TrainLogRow {
    pub iteration: usize,
    pub task: f64,
    /// Unweighted style reward, before the configured multiplier.
    pub style: f64,
    pub regularization: f64,
    pub episode_length: f64,
    pub disc_demo: f64,
    pub disc_agent: f64,
    pub kl: f64,
}

impl TrainLogRow {
    fn record(&self) -> Vec<String> {
        let mut r = vec![self.iteration.to_string()];
        r.extend(
            [self.task, self.style, self.regularization, self.episode_length, self.disc_demo, self.disc_agent, self.kl]
                .iter()
                .map(|v| format!("{v}")),
        );
        r
    }
}

/// Appends training-log rows to a CSV stream, header first.
pub struct TrainLogWriter<W: Write> {
    out: csv::Writer<W>,
}

impl<W: Write> TrainLogWriter<W> {
    pub fn new(w: W) -> Result<Self> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(TRAIN_LOG_COLUMNS).map_err(csv_err)?;
        Ok(TrainLogWriter { out })
    }

    pub fn write(&mut self, row: &TrainLogRow) -> Result<()> {
        self.out.write_record(row.record()).map_err(csv_err)?;
        self.out.flush()?;
        Ok(())
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Data(format!("{other:?}")),
    }
}

/// Teacher training state: policy, discriminator and environments.
pub struct TeacherTrainer {
    pub config: TrainConfig,
    pub policy: TeacherPolicy,
    pub discriminator: DiscriminatorTrainer,
    pub envs: VecEnv,
    pub iteration: usize,
    pub last_stats: PpoStats,
    pub last_disc: LossTerms,
    demo: TransitionDataset,
    optimizer: PolicyOptimizer,
    rng: ChaCha8Rng,
    lengths: VecDeque<usize>,
}

impl TeacherTrainer {
    pub fn new(config: TrainConfig, model: &RobotModel, sim: &SimConfig, demo: TransitionDataset, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let policy = TeacherPolicy::new(&config.policy, InputScaling::for_model(model, sim.gravity), &mut rng);
        let optimizer = PolicyOptimizer::new(&policy, config.ppo.learning_rate);
        let discriminator = DiscriminatorTrainer::new(config.discriminator.clone(), &demo, seed ^ 0x5eed_d15c)?;
        let envs = VecEnv::new(model, sim, config.env.clone(), config.n_envs, seed.wrapping_add(1))?;
        Ok(TeacherTrainer {
            config,
            policy,
            discriminator,
            envs,
            iteration: 0,
            last_stats: PpoStats::default(),
            last_disc: LossTerms::default(),
            demo,
            optimizer,
            rng,
            lengths: VecDeque::with_capacity(LENGTH_WINDOW),
        })
    }

    /// Mean length of the most recent finished episodes, or the mean running
    /// length when none has finished yet.
    pub fn mean_episode_length(&self) -> f64 {
        if self.lengths.is_empty() {
            let n = self.envs.len() as f64;
            self.envs.envs.iter().map(|e| e.steps as f64).sum::<f64>() / n
        } else {
            self.lengths.iter().sum::<usize>() as f64 / self.lengths.len() as f64
        }
    }

    /// Collect one rollout, update discriminator and policy.
    pub fn iterate(&mut self) -> Result<TrainLogRow> {
        self.envs.set_iteration(self.iteration);
        let buf = collect_rollouts(
            &mut self.envs,
            &self.policy,
            &self.discriminator.disc,
            self.config.env.rewards.style,
            self.config.n_steps,
        )?;
        self.absorb(&buf);
        for t in &buf.transitions {
            self.discriminator.buffer.push(*t);
        }
        self.last_disc = self.discriminator.update(&self.demo, &mut self.rng)?;
        let batch = buf.to_batch(self.config.ppo.gamma, self.config.ppo.lambda, self.config.reward_scale)?;
        self.last_stats = ppo_update(&mut self.policy, &mut self.optimizer, &batch, &self.config.ppo, &mut self.rng)?;
        let means = buf.mean_rewards();
        let row = TrainLogRow {
            iteration: self.iteration,
            task: means.task,
            style: buf.mean_style_reward(),
            regularization: means.regularization,
            episode_length: self.mean_episode_length(),
            disc_demo: self.last_disc.demo_score,
            disc_agent: self.last_disc.agent_score,
            kl: self.last_stats.approx_kl,
        };
        self.iteration += 1;
        Ok(row)
    }

    fn absorb(&mut self, buf: &RolloutBuffer) {
        for e in &buf.finished {
            if self.lengths.len() == LENGTH_WINDOW {
                self.lengths.pop_front();
            }
            self.lengths.push_back(e.length);
        }
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::default();
        self.policy.to_checkpoint(&mut ck);
        self.discriminator.disc.to_checkpoint(&mut ck);
        ck
    }
}

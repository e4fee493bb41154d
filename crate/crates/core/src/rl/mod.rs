//! Teacher training: observations, rewards, the encoder/low-level policy,
//! rollouts and the clipped-surrogate update.

mod env;
mod obs;
mod policy;
mod ppo;
mod reward;
mod rollout;
mod train;

pub use env::{
    sample_setup, CommandRanges, EnvConfig, EpisodeSetup, EpisodeSummary, LocomotionEnv, StepResult, TerrainSpec,
    VecEnv, VecStep,
};
pub use obs::{Observation, PrivilegedObs, ProprioObs, TerrainObs, PRIVILEGED_DIM, PROPRIO_DIM, TERRAIN_DIM};
pub use policy::{
    gaussian_entropy, gaussian_log_prob, sample_action, InputScaling, ObsBatch, PolicyShape, SampledAction,
    TeacherForward, TeacherGrads, TeacherOutput, TeacherPolicy, ACTION_DIM, LATENT_DIM, LOW_LEVEL_INPUT,
    LOW_LEVEL_OUTPUT, PRIVILEGED_LATENT, TERRAIN_LATENT,
};
pub use ppo::{
    clipped_surrogate, gae, normalize_advantages, ppo_loss, ppo_update, PolicyOptimizer, PpoBatch, PpoConfig,
    PpoStats,
};
pub use reward::{compose_reward, limit_violation, regularization_reward, task_reward, RewardTerms, RewardWeights};
pub use rollout::{collect_rollouts, RolloutBuffer};
pub use train::{TeacherTrainer, TrainConfig, TrainLogRow, TrainLogWriter, TRAIN_LOG_COLUMNS};
pub(crate) use train::csv_err;

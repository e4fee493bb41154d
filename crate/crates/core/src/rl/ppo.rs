//! Advantage estimation and the clipped-surrogate update.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::policy::{gaussian_entropy, ObsBatch, TeacherGrads, TeacherPolicy, ACTION_DIM, LOW_LEVEL_OUTPUT};
use crate::error::{Error, Result};
use crate::nn::{optimizer_step, AdamConfig, OptimizerState, VectorAdam};

/// Advantages and returns by exponentially weighted TD residuals.
///
/// `values` carries one extra trailing entry, the bootstrap value.
pub fn gae(rewards: &[f64], values: &[f64], dones: &[bool], gamma: f64, lambda: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = rewards.len();
    if values.len() != n + 1 || dones.len() != n {
        return Err(Error::Shape(format!(
            "gae needs values of length {} and dones of length {n}; got {} and {}",
            n + 1,
            values.len(),
            dones.len()
        )));
    }
    let mut adv = vec![0.0; n];
    let mut next = 0.0;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * values[t + 1] * live - values[t];
        next = delta + gamma * lambda * live * next;
        adv[t] = next;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, returns))
}

/// Shift and scale to zero mean, unit standard deviation.
pub fn normalize_advantages(adv: &mut [f64]) {
    if adv.is_empty() {
        return;
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    let std = var.sqrt() + 1e-8;
    adv.iter_mut().for_each(|a| *a = (*a - mean) / std);
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub gamma: f64,
    pub lambda: f64,
    pub clip: f64,
    pub epochs: usize,
    pub minibatches: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub learning_rate: f64,
    /// Global gradient-norm cap per minibatch step; 0 disables it.
    pub max_grad_norm: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            gamma: 0.99,
            lambda: 0.95,
            clip: 0.2,
            epochs: 5,
            minibatches: 4,
            entropy_coef: 0.005,
            value_coef: 0.5,
            learning_rate: 3e-4,
            max_grad_norm: 1.0,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..=1.0).contains(&self.gamma)
            && (0.0..=1.0).contains(&self.lambda)
            && self.clip > 0.0
            && self.epochs > 0
            && self.minibatches > 0
            && self.entropy_coef >= 0.0
            && self.value_coef >= 0.0
            && self.learning_rate > 0.0
            && self.max_grad_norm >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config("ppo hyperparameters out of range".into()))
        }
    }
}

/// Flattened on-policy samples ready for optimisation.
#[derive(Debug, Clone, PartialEq)]
pub struct PpoBatch {
    pub obs: ObsBatch,
    /// Unclipped sampled actions, `B x 4`.
    pub actions: Array2<f64>,
    pub old_log_prob: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl PpoBatch {
    pub fn len(&self) -> usize {
        self.old_log_prob.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, rows: &[usize]) -> Self {
        PpoBatch {
            obs: self.obs.select(rows),
            actions: self.actions.select(ndarray::Axis(0), rows),
            old_log_prob: rows.iter().map(|&i| self.old_log_prob[i]).collect(),
            advantages: rows.iter().map(|&i| self.advantages[i]).collect(),
            returns: rows.iter().map(|&i| self.returns[i]).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PpoStats {
    /// Mean clipped surrogate (maximised).
    pub surrogate: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

/// Clipped surrogate for one sample with ratio `r` and advantage `a`.
pub fn clipped_surrogate(r: f64, a: f64, clip: f64) -> f64 {
    (r * a).min(r.clamp(1.0 - clip, 1.0 + clip) * a)
}

/// Loss to minimise, `-surrogate + c_v * value_loss - c_e * entropy`, and its
/// exact gradient.
pub fn ppo_loss(policy: &TeacherPolicy, batch: &PpoBatch, cfg: &PpoConfig) -> Result<(f64, TeacherGrads, PpoStats)> {
    let n = batch.len();
    if n == 0 {
        return Err(Error::Config("empty ppo batch".into()));
    }
    let fwd = policy.forward_batch(&batch.obs)?;
    let inv_std: Vec<f64> = policy.log_std.iter().map(|l| (-l).exp()).collect();
    let nf = n as f64;
    let mut out_grad = Array2::<f64>::zeros((n, LOW_LEVEL_OUTPUT));
    let mut log_std_grad = vec![0.0; ACTION_DIM];
    let mut stats = PpoStats::default();
    let mut clipped = 0usize;
    for i in 0..n {
        let mut logp = 0.0;
        let mut z = [0.0; ACTION_DIM];
        for j in 0..ACTION_DIM {
            z[j] = (batch.actions[[i, j]] - fwd.output[[i, j]]) * inv_std[j];
            logp += -0.5 * z[j] * z[j] - policy.log_std[j] - 0.918_938_533_204_672_8;
        }
        let log_ratio = logp - batch.old_log_prob[i];
        let r = log_ratio.exp();
        let a = batch.advantages[i];
        stats.surrogate += clipped_surrogate(r, a, cfg.clip) / nf;
        stats.approx_kl += ((r - 1.0) - log_ratio) / nf;
        if (r - 1.0).abs() > cfg.clip {
            clipped += 1;
        }
        // d surrogate / d logp; zero when the clipped branch is the minimum
        let unclipped_active = r * a <= r.clamp(1.0 - cfg.clip, 1.0 + cfg.clip) * a;
        let dlogp = if unclipped_active { -a * r / nf } else { 0.0 };
        if dlogp != 0.0 {
            for j in 0..ACTION_DIM {
                out_grad[[i, j]] = dlogp * z[j] * inv_std[j];
                log_std_grad[j] += dlogp * (z[j] * z[j] - 1.0);
            }
        }
        let v = fwd.output[[i, ACTION_DIM]];
        let err = v - batch.returns[i];
        stats.value_loss += err * err / nf;
        out_grad[[i, ACTION_DIM]] = cfg.value_coef * 2.0 * err / nf;
    }
    stats.entropy = gaussian_entropy(&policy.log_std);
    stats.clip_fraction = clipped as f64 / nf;
    for g in &mut log_std_grad {
        *g -= cfg.entropy_coef;
    }
    let loss = -stats.surrogate + cfg.value_coef * stats.value_loss - cfg.entropy_coef * stats.entropy;
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("ppo loss is not finite ({loss})")));
    }
    let grads = policy.backward(&fwd, out_grad.view(), log_std_grad)?;
    Ok((loss, grads, stats))
}

/// Adam state for every trainable part of the teacher.
#[derive(Debug, Clone)]
pub struct PolicyOptimizer {
    terrain_encoder: OptimizerState,
    privileged_encoder: OptimizerState,
    low_level: OptimizerState,
    log_std: VectorAdam,
}

impl PolicyOptimizer {
    pub fn new(policy: &TeacherPolicy, learning_rate: f64) -> Self {
        let cfg = AdamConfig { learning_rate, ..AdamConfig::default() };
        PolicyOptimizer {
            terrain_encoder: OptimizerState::new(&policy.terrain_encoder, cfg),
            privileged_encoder: OptimizerState::new(&policy.privileged_encoder, cfg),
            low_level: OptimizerState::new(&policy.low_level, cfg),
            log_std: VectorAdam::new(ACTION_DIM, cfg),
        }
    }

    pub fn step(&mut self, policy: &mut TeacherPolicy, grads: &TeacherGrads) -> Result<()> {
        optimizer_step(&mut policy.terrain_encoder, &grads.terrain_encoder, &mut self.terrain_encoder)?;
        optimizer_step(&mut policy.privileged_encoder, &grads.privileged_encoder, &mut self.privileged_encoder)?;
        optimizer_step(&mut policy.low_level, &grads.low_level, &mut self.low_level)?;
        self.log_std.step(&mut policy.log_std, &grads.log_std)
    }
}

/// Several epochs of shuffled minibatch steps; statistics are averaged over
/// all minibatches.
pub fn ppo_update<R: Rng + ?Sized>(
    policy: &mut TeacherPolicy,
    optimizer: &mut PolicyOptimizer,
    batch: &PpoBatch,
    cfg: &PpoConfig,
    rng: &mut R,
) -> Result<PpoStats> {
    cfg.validate()?;
    let n = batch.len();
    if n < cfg.minibatches {
        return Err(Error::Config(format!("batch of {n} cannot be split into {} minibatches", cfg.minibatches)));
    }
    let mut total = PpoStats::default();
    let mut count = 0.0;
    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for m in 0..cfg.minibatches {
            let lo = m * n / cfg.minibatches;
            let hi = (m + 1) * n / cfg.minibatches;
            let mb = batch.select(&order[lo..hi]);
            let (_, mut grads, stats) = ppo_loss(policy, &mb, cfg)?;
            if !grads.is_finite() {
                return Err(Error::Numeric("ppo gradient is not finite".into()));
            }
            if cfg.max_grad_norm > 0.0 {
                let norm = grads.norm_sq().sqrt();
                if norm > cfg.max_grad_norm {
                    grads.scale(cfg.max_grad_norm / norm);
                }
            }
            optimizer.step(policy, &grads)?;
            total.surrogate += stats.surrogate;
            total.value_loss += stats.value_loss;
            total.entropy += stats.entropy;
            total.approx_kl += stats.approx_kl;
            total.clip_fraction += stats.clip_fraction;
            count += 1.0;
        }
    }
    if !policy.is_finite() {
        return Err(Error::Numeric("policy parameters became non-finite".into()));
    }
    total.surrogate /= count;
    total.value_loss /= count;
    total.entropy /= count;
    total.approx_kl /= count;
    total.clip_fraction /= count;
    Ok(total)
}

use ndarray::Array2;

use super::env::{EpisodeSummary, VecEnv};
use super::policy::{sample_action, ObsBatch, TeacherPolicy, ACTION_DIM};
use super::ppo::{gae, normalize_advantages, PpoBatch};
use super::reward::RewardTerms;
use crate::amp::{stack_features, style_reward, AmpTransition, Discriminator};
use crate::error::{Error, Result};

/// On-policy samples laid out step-major: row `t * n_envs + i`.
#[derive(Debug, Clone)]
pub struct RolloutBuffer {
    pub n_envs: usize,
    pub n_steps: usize,
    pub obs: ObsBatch,
    /// Unclipped sampled actions.
    pub actions: Array2<f64>,
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    pub rewards: Vec<RewardTerms>,
    pub dones: Vec<bool>,
    /// Value of the last observation of a truncated episode, zero elsewhere.
    pub timeout_values: Vec<f64>,
    /// Bootstrap values after the final step, one per environment.
    pub last_values: Vec<f64>,
    pub transitions: Vec<AmpTransition>,
    /// Raw discriminator score of each transition.
    pub scores: Vec<f64>,
    pub finished: Vec<EpisodeSummary>,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.n_envs * self.n_steps
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn mean_rewards(&self) -> RewardTerms {
        let n = self.rewards.len().max(1) as f64;
        let mut m = RewardTerms::default();
        for r in &self.rewards {
            m.task += r.task / n;
            m.style += r.style / n;
            m.regularization += r.regularization / n;
        }
        m
    }

    /// Mean unweighted style reward of the collected transitions.
    pub fn mean_style_reward(&self) -> f64 {
        self.scores.iter().map(|&d| style_reward(d)).sum::<f64>() / self.scores.len().max(1) as f64
    }

    /// Per-environment advantages and returns, with truncated episodes
    /// bootstrapped from their final value.
    pub fn advantages(&self, gamma: f64, lambda: f64, reward_scale: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let (n, t_max) = (self.n_envs, self.n_steps);
        let mut adv = vec![0.0; n * t_max];
        let mut ret = vec![0.0; n * t_max];
        for i in 0..n {
            let rows: Vec<usize> = (0..t_max).map(|t| t * n + i).collect();
            let rewards: Vec<f64> = rows
                .iter()
                .map(|&k| reward_scale * self.rewards[k].total() + gamma * self.timeout_values[k])
                .collect();
            let mut values: Vec<f64> = rows.iter().map(|&k| self.values[k]).collect();
            values.push(self.last_values[i]);
            let dones: Vec<bool> = rows.iter().map(|&k| self.dones[k]).collect();
            let (a, r) = gae(&rewards, &values, &dones, gamma, lambda)?;
            for (j, &k) in rows.iter().enumerate() {
                adv[k] = a[j];
                ret[k] = r[j];
            }
        }
        Ok((adv, ret))
    }

    pub fn to_batch(&self, gamma: f64, lambda: f64, reward_scale: f64) -> Result<PpoBatch> {
        let (mut advantages, returns) = self.advantages(gamma, lambda, reward_scale)?;
        normalize_advantages(&mut advantages);
        Ok(PpoBatch {
            obs: self.obs.clone(),
            actions: self.actions.clone(),
            old_log_prob: self.log_probs.clone(),
            advantages,
            returns,
        })
    }
}

/// Run every environment for `n_steps` control steps under the stochastic
/// policy, scoring style with the current discriminator.
pub fn collect_rollouts(
    envs: &mut VecEnv,
    policy: &TeacherPolicy,
    disc: &Discriminator,
    style_weight: f64,
    n_steps: usize,
) -> Result<RolloutBuffer> {
    let n = envs.len();
    let rows = n * n_steps;
    let mut buf = RolloutBuffer {
        n_envs: n,
        n_steps,
        obs: ObsBatch::from_observations(&policy.scaling, &[]),
        actions: Array2::zeros((rows, ACTION_DIM)),
        log_probs: Vec::with_capacity(rows),
        values: Vec::with_capacity(rows),
        rewards: Vec::with_capacity(rows),
        dones: Vec::with_capacity(rows),
        timeout_values: Vec::with_capacity(rows),
        last_values: Vec::new(),
        transitions: Vec::with_capacity(rows),
        scores: Vec::with_capacity(rows),
        finished: Vec::new(),
    };
    let mut obs_rows = Vec::with_capacity(rows);
    let bound = envs.config.action_bound;
    for t in 0..n_steps {
        let obs = envs.observations();
        let batch = ObsBatch::from_observations(&policy.scaling, &obs);
        let (out, _) = policy.predict(&batch)?;
        let mut actions = Vec::with_capacity(n);
        for (i, env) in envs.envs.iter_mut().enumerate() {
            let mean = [out[[i, 0]], out[[i, 1]], out[[i, 2]], out[[i, 3]]];
            let s = sample_action(&mean, &policy.log_std, bound, env.rng());
            for j in 0..ACTION_DIM {
                buf.actions[[t * n + i, j]] = s.raw[j];
            }
            buf.log_probs.push(s.log_prob);
            buf.values.push(out[[i, ACTION_DIM]]);
            actions.push(s.action);
        }
        obs_rows.extend(obs);
        let step = envs.step(&actions)?;
        let transitions: Vec<AmpTransition> = step.results.iter().map(|r| r.transition).collect();
        let scores = disc.scores(stack_features(&transitions).view())?;

        let truncated: Vec<usize> = (0..n).filter(|&i| step.final_obs[i].is_some()).collect();
        let mut timeout = vec![0.0; n];
        if !truncated.is_empty() {
            let finals: Vec<_> = truncated.iter().map(|&i| step.final_obs[i].expect("truncated")).collect();
            let (v, _) = policy.predict(&ObsBatch::from_observations(&policy.scaling, &finals))?;
            for (k, &i) in truncated.iter().enumerate() {
                timeout[i] = v[[k, ACTION_DIM]];
            }
        }
        for (i, r) in step.results.iter().enumerate() {
            let mut terms = r.reward;
            terms.style = style_weight * style_reward(scores[i]);
            if !terms.total().is_finite() {
                return Err(Error::Numeric(format!("non-finite reward in environment {i}")));
            }
            buf.rewards.push(terms);
            buf.dones.push(r.done());
            buf.timeout_values.push(timeout[i]);
        }
        buf.transitions.extend(transitions);
        buf.scores.extend(scores);
        buf.finished.extend(step.finished);
    }
    buf.obs = ObsBatch::from_observations(&policy.scaling, &obs_rows);
    let (out, _) = policy.predict(&ObsBatch::from_observations(&policy.scaling, &envs.observations()))?;
    buf.last_values = out.column(ACTION_DIM).to_vec();
    Ok(buf)
}

//! Adversarial motion prior: the shared AMP state, the least-squares
//! discriminator with its input-gradient penalty and the style reward.

use std::collections::VecDeque;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{
    backward_batch, forward_batch, input_gradient_penalty, optimizer_step, predict_batch, Activation, AdamConfig,
    Checkpoint, GradTree, OptimizerState, ParamTree,
};
use crate::sim::{SimState, Simulator};
use crate::terrain::HeightField;

pub const AMP_STATE_DIM: usize = 12;
pub const AMP_TRANSITION_DIM: usize = 2 * AMP_STATE_DIM;

/// Joint positions and velocities, base linear velocity `[x, z]`, base
/// pitch rate and base height above the terrain below it.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AmpState {
    pub joints: [f64; 4],
    pub joint_vel: [f64; 4],
    pub base_vel: [f64; 2],
    pub base_ang_vel: f64,
    pub height: f64,
}

impl AmpState {
    pub fn to_array(&self) -> [f64; AMP_STATE_DIM] {
        let mut out = [0.0; AMP_STATE_DIM];
        out[..4].copy_from_slice(&self.joints);
        out[4..8].copy_from_slice(&self.joint_vel);
        out[8..10].copy_from_slice(&self.base_vel);
        out[10] = self.base_ang_vel;
        out[11] = self.height;
        out
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        if v.len() != AMP_STATE_DIM {
            return Err(Error::Shape(format!("AMP state needs {AMP_STATE_DIM} values, got {}", v.len())));
        }
        Ok(AmpState {
            joints: [v[0], v[1], v[2], v[3]],
            joint_vel: [v[4], v[5], v[6], v[7]],
            base_vel: [v[8], v[9]],
            base_ang_vel: v[10],
            height: v[11],
        })
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// The single AMP-state extractor used for both simulated and reference motion.
pub fn build_amp_state(sim: &Simulator, state: &SimState, terrain: &HeightField) -> AmpState {
    let base = sim.base_state(state);
    AmpState {
        joints: state.joints(),
        joint_vel: state.joint_velocities(),
        base_vel: base.velocity,
        base_ang_vel: base.pitch_rate,
        height: base.position[1] - terrain.height_at(base.position[0]),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Demo,
    Agent,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmpTransition {
    pub state: AmpState,
    pub next: AmpState,
    pub source: Source,
}

impl AmpTransition {
    pub fn new(state: AmpState, next: AmpState, source: Source) -> Self {
        AmpTransition { state, next, source }
    }

    pub fn features(&self) -> [f64; AMP_TRANSITION_DIM] {
        let mut out = [0.0; AMP_TRANSITION_DIM];
        out[..AMP_STATE_DIM].copy_from_slice(&self.state.to_array());
        out[AMP_STATE_DIM..].copy_from_slice(&self.next.to_array());
        out
    }

    pub fn is_finite(&self) -> bool {
        self.state.is_finite() && self.next.is_finite()
    }
}

pub fn stack_features(transitions: &[AmpTransition]) -> Array2<f64> {
    let mut out = Array2::zeros((transitions.len(), AMP_TRANSITION_DIM));
    for (mut row, t) in out.outer_iter_mut().zip(transitions) {
        row.assign(&Array1::from(t.features().to_vec()));
    }
    out
}

/// Demonstration transitions with a seeded uniform sampler.
#[derive(Debug, Clone)]
pub struct TransitionDataset {
    transitions: Vec<AmpTransition>,
}

impl TransitionDataset {
    pub fn new(transitions: Vec<AmpTransition>) -> Result<Self> {
        if transitions.is_empty() {
            return Err(Error::Config("transition dataset is empty".into()));
        }
        Ok(TransitionDataset { transitions })
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn transitions(&self) -> &[AmpTransition] {
        &self.transitions
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<AmpTransition> {
        (0..n).map(|_| self.transitions[rng.gen_range(0..self.transitions.len())]).collect()
    }
}

/// Bounded FIFO of agent transitions.
#[derive(Debug, Clone)]
pub struct AgentTransitionBuffer {
    capacity: usize,
    items: VecDeque<AmpTransition>,
}

impl AgentTransitionBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("agent buffer capacity must be positive".into()));
        }
        Ok(AgentTransitionBuffer { capacity, items: VecDeque::with_capacity(capacity.min(1 << 16)) })
    }

    pub fn push(&mut self, t: AmpTransition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<AmpTransition> {
        if self.items.is_empty() {
            return Vec::new();
        }
        (0..n).map(|_| self.items[rng.gen_range(0..self.items.len())]).collect()
    }
}

/// Discriminator network plus the fixed affine feature normalization applied
/// before it. The gradient penalty is taken with respect to the normalized
/// features seen by the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator {
    pub net: ParamTree,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Discriminator {
    pub fn new<R: Rng + ?Sized>(hidden: &[usize], rng: &mut R) -> Self {
        let mut sizes = vec![AMP_TRANSITION_DIM];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let net = ParamTree::mlp("disc", &sizes, Activation::Tanh, 1.0, 1.0, rng);
        Discriminator { net, mean: vec![0.0; AMP_TRANSITION_DIM], std: vec![1.0; AMP_TRANSITION_DIM] }
    }

    pub fn from_net(net: ParamTree) -> Result<Self> {
        if net.in_dim() != AMP_TRANSITION_DIM || net.out_dim() != 1 {
            return Err(Error::Shape(format!(
                "discriminator must map {AMP_TRANSITION_DIM} -> 1, got {} -> {}",
                net.in_dim(),
                net.out_dim()
            )));
        }
        Ok(Discriminator { net, mean: vec![0.0; AMP_TRANSITION_DIM], std: vec![1.0; AMP_TRANSITION_DIM] })
    }

    /// Set the normalization from demonstration statistics.
    pub fn fit_normalization(&mut self, demo: &TransitionDataset) {
        let x = stack_features(demo.transitions());
        let mean = x.mean_axis(Axis(0)).expect("dataset is non-empty");
        let std = x.std_axis(Axis(0), 0.0);
        self.mean = mean.to_vec();
        self.std = std.iter().map(|s| s.max(0.05)).collect();
    }

    pub fn normalize(&self, raw: ArrayView2<f64>) -> Result<Array2<f64>> {
        if raw.ncols() != AMP_TRANSITION_DIM {
            return Err(Error::Shape(format!(
                "discriminator input has {} columns, expected {AMP_TRANSITION_DIM}",
                raw.ncols()
            )));
        }
        let mut x = raw.to_owned();
        for mut row in x.outer_iter_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - self.mean[j]) / self.std[j];
            }
        }
        Ok(x)
    }

    pub fn scores(&self, raw: ArrayView2<f64>) -> Result<Vec<f64>> {
        let x = self.normalize(raw)?;
        Ok(predict_batch(&self.net, x.view())?.column(0).to_vec())
    }

    pub fn to_checkpoint(&self, ckpt: &mut Checkpoint) {
        ckpt.networks.push(("discriminator".into(), self.net.clone()));
        ckpt.vectors.push(("discriminator.mean".into(), self.mean.clone()));
        ckpt.vectors.push(("discriminator.std".into(), self.std.clone()));
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let mut d = Discriminator::from_net(ckpt.network("discriminator")?.clone())?;
        d.mean = ckpt.vector("discriminator.mean")?.to_vec();
        d.std = ckpt.vector("discriminator.std")?.to_vec();
        if d.mean.len() != AMP_TRANSITION_DIM || d.std.len() != AMP_TRANSITION_DIM {
            return Err(Error::Shape("discriminator normalization has the wrong length".into()));
        }
        Ok(d)
    }
}

pub fn discriminator_score(disc: &Discriminator, tr: &AmpTransition) -> Result<f64> {
    let f = tr.features();
    let x = ArrayView2::from_shape((1, AMP_TRANSITION_DIM), &f).map_err(|e| Error::Shape(e.to_string()))?;
    Ok(disc.scores(x)?[0])
}

/// Mean squared input-gradient norm over the demo batch and its parameter gradient.
pub fn gradient_penalty(disc: &Discriminator, demo: ArrayView2<f64>) -> Result<(f64, GradTree)> {
    if demo.nrows() == 0 {
        return Err(Error::Config("gradient penalty needs a non-empty batch".into()));
    }
    let x = disc.normalize(demo)?;
    input_gradient_penalty(&disc.net, x.view())
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossTerms {
    pub demo: f64,
    pub agent: f64,
    pub penalty: f64,
    pub demo_score: f64,
    pub agent_score: f64,
}

impl LossTerms {
    pub fn total(&self, gp_coef: f64) -> f64 {
        self.demo + self.agent + 0.5 * gp_coef * self.penalty
    }
}

/// Least-squares discriminator objective: demo scores pulled to +1, agent
/// scores to -1, plus `gp_coef / 2` times the demo input-gradient penalty.
pub fn discriminator_loss<'a>(
    disc: &Discriminator,
    demo: ArrayView2<'a, f64>,
    agent: ArrayView2<'a, f64>,
    gp_coef: f64,
) -> Result<(f64, GradTree, LossTerms)> {
    if demo.nrows() == 0 || agent.nrows() == 0 {
        return Err(Error::Config("discriminator loss needs non-empty demo and agent batches".into()));
    }
    let mut grads = GradTree::zeros_like(&disc.net);
    let mut terms = LossTerms::default();
    for (batch, target, is_demo) in [(demo, 1.0, true), (agent, -1.0, false)] {
        let x = disc.normalize(batch)?;
        let n = x.nrows() as f64;
        let (y, tape) = forward_batch(&disc.net, x.view())?;
        let d = y.column(0);
        let loss = d.iter().map(|s| (s - target).powi(2)).sum::<f64>() / n;
        let mean_score = d.sum() / n;
        let dy = y.mapv(|s| 2.0 * (s - target) / n);
        let (g, _) = backward_batch(&disc.net, &tape, dy.view())?;
        grads.add_assign(&g);
        if is_demo {
            terms.demo = loss;
            terms.demo_score = mean_score;
        } else {
            terms.agent = loss;
            terms.agent_score = mean_score;
        }
    }
    if gp_coef != 0.0 {
        let (pen, mut g) = gradient_penalty(disc, demo)?;
        terms.penalty = pen;
        g.scale(0.5 * gp_coef);
        grads.add_assign(&g);
    }
    Ok((terms.total(gp_coef), grads, terms))
}

/// Style reward of a discriminator score, in `[0, 1]`.
pub fn style_reward(score: f64) -> f64 {
    (1.0 - 0.25 * (score - 1.0).powi(2)).max(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscriminatorConfig {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub updates_per_iteration: usize,
    pub gp_coef: f64,
    pub buffer_capacity: usize,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        DiscriminatorConfig {
            hidden: vec![256, 128],
            learning_rate: 3e-4,
            batch_size: 256,
            updates_per_iteration: 2,
            gp_coef: 10.0,
            buffer_capacity: 100_000,
        }
    }
}

/// Discriminator, its optimizer and the agent replay buffer.
#[derive(Debug, Clone)]
pub struct DiscriminatorTrainer {
    pub disc: Discriminator,
    pub optimizer: OptimizerState,
    pub buffer: AgentTransitionBuffer,
    pub config: DiscriminatorConfig,
}

impl DiscriminatorTrainer {
    pub fn new(config: DiscriminatorConfig, demo: &TransitionDataset, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut disc = Discriminator::new(&config.hidden, &mut rng);
        disc.fit_normalization(demo);
        let optimizer = OptimizerState::new(&disc.net, AdamConfig { learning_rate: config.learning_rate, ..AdamConfig::default() });
        let buffer = AgentTransitionBuffer::new(config.buffer_capacity)?;
        Ok(DiscriminatorTrainer { disc, optimizer, buffer, config })
    }

    /// Runs the configured number of minibatch updates; returns the mean terms.
    pub fn update<R: Rng + ?Sized>(&mut self, demo: &TransitionDataset, rng: &mut R) -> Result<LossTerms> {
        let mut mean = LossTerms::default();
        if self.buffer.is_empty() {
            return Ok(mean);
        }
        let n = self.config.updates_per_iteration.max(1);
        for _ in 0..n {
            let d = stack_features(&demo.sample(self.config.batch_size, rng));
            let a = stack_features(&self.buffer.sample(self.config.batch_size, rng));
            let (loss, grads, terms) = discriminator_loss(&self.disc, d.view(), a.view(), self.config.gp_coef)?;
            if !loss.is_finite() {
                return Err(Error::Numeric("discriminator loss is not finite".into()));
            }
            optimizer_step(&mut self.disc.net, &grads, &mut self.optimizer)?;
            mean.demo += terms.demo / n as f64;
            mean.agent += terms.agent / n as f64;
            mean.penalty += terms.penalty / n as f64;
            mean.demo_score += terms.demo_score / n as f64;
            mean.agent_score += terms.agent_score / n as f64;
        }
        Ok(mean)
    }
}

/// Demo transitions paired with "impostors" whose successor state comes from
/// a random other time of the same pool.
pub fn shuffled_impostors<R: Rng + ?Sized>(demo: &[AmpTransition], rng: &mut R) -> Vec<AmpTransition> {
    let mut nexts: Vec<AmpState> = demo.iter().map(|t| t.next).collect();
    nexts.shuffle(rng);
    demo.iter()
        .zip(nexts)
        .map(|(t, next)| AmpTransition::new(t.state, next, Source::Agent))
        .collect()
}

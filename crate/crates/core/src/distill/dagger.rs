use std::io::Write;

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::history::ObservationHistory;
use super::student::{distill_batch_loss, DistillTerms, StudentPolicy, StudentShape};
use crate::error::{Error, Result};
use crate::nn::{optimizer_step, AdamConfig, Checkpoint, OptimizerState};
use crate::rl::{csv_err, EnvConfig, ObsBatch, TeacherPolicy, VecEnv, ACTION_DIM, LATENT_DIM, PROPRIO_DIM};
use crate::sim::{RobotModel, SimConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistillConfig {
    pub epochs: usize,
    pub n_envs: usize,
    /// Control steps collected per environment and epoch.
    pub steps_per_epoch: usize,
    pub updates_per_epoch: usize,
    pub minibatch: usize,
    pub learning_rate: f64,
    pub lambda_rec: f64,
    pub beta_start: f64,
    pub beta_end: f64,
    /// Epoch by which the teacher-execution probability reaches `beta_end`.
    pub beta_decay_epochs: usize,
    /// Most recent samples kept in the aggregated dataset.
    pub dataset_capacity: usize,
    pub max_grad_norm: f64,
    pub student: StudentShape,
    pub env: EnvConfig,
}

impl Default for DistillConfig {
    fn default() -> Self {
        DistillConfig {
            epochs: 40,
            n_envs: 32,
            steps_per_epoch: 100,
            updates_per_epoch: 100,
            minibatch: 256,
            learning_rate: 1e-3,
            lambda_rec: 1.0,
            beta_start: 1.0,
            beta_end: 0.0,
            beta_decay_epochs: 20,
            dataset_capacity: 40_000,
            max_grad_norm: 1.0,
            student: StudentShape::default(),
            env: EnvConfig::default(),
        }
    }
}

impl DistillConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.n_envs == 0 || self.steps_per_epoch == 0 || self.minibatch == 0 {
            return Err(Error::Config("epochs, n_envs, steps_per_epoch and minibatch must be positive".into()));
        }
        if self.dataset_capacity < self.n_envs * self.steps_per_epoch {
            return Err(Error::Config("dataset_capacity must hold at least one epoch of samples".into()));
        }
        for b in [self.beta_start, self.beta_end] {
            if !(0.0..=1.0).contains(&b) {
                return Err(Error::Config(format!("beta {b} outside [0, 1]")));
            }
        }
        if !(self.learning_rate > 0.0) || !(self.lambda_rec >= 0.0) || !(self.max_grad_norm > 0.0) {
            return Err(Error::Config("learning_rate and max_grad_norm must be positive, lambda_rec non-negative".into()));
        }
        self.env.validate()
    }

    /// Linear anneal from `beta_start` to `beta_end`.
    pub fn beta(&self, epoch: usize) -> f64 {
        if self.beta_decay_epochs == 0 || epoch >= self.beta_decay_epochs {
            return self.beta_end;
        }
        let f = epoch as f64 / self.beta_decay_epochs as f64;
        self.beta_start + (self.beta_end - self.beta_start) * f
    }
}

pub const DISTILL_LOG_COLUMNS: [&str; 4] = ["epoch", "action_mse", "latent_mse", "beta"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistillLogRow {
    pub epoch: usize,
    pub action_mse: f64,
    pub latent_mse: f64,
    pub beta: f64,
}

pub struct DistillLogWriter<W: Write> {
    out: csv::Writer<W>,
}

impl<W: Write> DistillLogWriter<W> {
    pub fn new(w: W) -> Result<Self> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(DISTILL_LOG_COLUMNS).map_err(csv_err)?;
        Ok(DistillLogWriter { out })
    }

    pub fn write(&mut self, row: &DistillLogRow) -> Result<()> {
        let rec = [
            row.epoch.to_string(),
            format!("{}", row.action_mse),
            format!("{}", row.latent_mse),
            format!("{}", row.beta),
        ];
        self.out.write_record(rec).map_err(csv_err)?;
        self.out.flush()?;
        Ok(())
    }
}

/// Aggregated (history, proprio, teacher action, teacher latent) samples,
/// oldest dropped first once full.
#[derive(Debug, Clone)]
pub struct DistillDataset {
    capacity: usize,
    history_dim: usize,
    history: Vec<f64>,
    proprio: Vec<f64>,
    action: Vec<f64>,
    latent: Vec<f64>,
}

fn view(src: &[f64], n: usize, dim: usize) -> Result<ArrayView2<'_, f64>> {
    ArrayView2::from_shape((n, dim), src).map_err(|e| Error::Shape(e.to_string()))
}

impl DistillDataset {
    pub fn new(capacity: usize, history_len: usize) -> Self {
        DistillDataset {
            capacity,
            history_dim: history_len * PROPRIO_DIM,
            history: Vec::new(),
            proprio: Vec::new(),
            action: Vec::new(),
            latent: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.action.len() / ACTION_DIM
    }

    pub fn is_empty(&self) -> bool {
        self.action.is_empty()
    }

    pub fn push(&mut self, history: &[f64], proprio: &[f64], action: &[f64], latent: &[f64]) {
        self.history.extend_from_slice(history);
        self.proprio.extend_from_slice(proprio);
        self.action.extend_from_slice(action);
        self.latent.extend_from_slice(latent);
        let excess = self.len().saturating_sub(self.capacity);
        if excess > self.capacity / 4 {
            self.history.drain(..excess * self.history_dim);
            self.proprio.drain(..excess * PROPRIO_DIM);
            self.action.drain(..excess * ACTION_DIM);
            self.latent.drain(..excess * LATENT_DIM);
        }
    }

    fn gather(&self, rows: &[usize]) -> [Array2<f64>; 4] {
        let pick = |src: &[f64], dim: usize| {
            let mut out = Array2::zeros((rows.len(), dim));
            for (k, &r) in rows.iter().enumerate() {
                out.row_mut(k).as_slice_mut().expect("contiguous").copy_from_slice(&src[r * dim..(r + 1) * dim]);
            }
            out
        };
        [
            pick(&self.history, self.history_dim),
            pick(&self.proprio, PROPRIO_DIM),
            pick(&self.action, ACTION_DIM),
            pick(&self.latent, LATENT_DIM),
        ]
    }

    /// Mean-square errors of `student` over the whole set.
    pub fn evaluate(&self, student: &StudentPolicy) -> Result<DistillTerms> {
        let n = self.len();
        if n == 0 {
            return Err(Error::Data("empty distillation dataset".into()));
        }
        let (a, l) = student.predict(view(&self.history, n, self.history_dim)?, view(&self.proprio, n, PROPRIO_DIM)?)?;
        let da = &a - &view(&self.action, n, ACTION_DIM)?;
        let dl = &l - &view(&self.latent, n, LATENT_DIM)?;
        Ok(DistillTerms {
            action_mse: da.iter().map(|v| v * v).sum::<f64>() / (n * ACTION_DIM) as f64,
            latent_mse: dl.iter().map(|v| v * v).sum::<f64>() / (n * LATENT_DIM) as f64,
        })
    }
}

/// Teacher-student distillation by dataset aggregation: roll out a
/// per-step mixture of teacher and student actions, label every visited
/// state with the teacher, and regress the student onto the labels.
pub struct Distiller {
    pub config: DistillConfig,
    pub teacher: TeacherPolicy,
    pub student: StudentPolicy,
    pub dataset: DistillDataset,
    pub envs: VecEnv,
    pub epoch: usize,
    histories: Vec<ObservationHistory>,
    opt_memory: OptimizerState,
    opt_low: OptimizerState,
    rng: ChaCha8Rng,
}

impl Distiller {
    pub fn new(config: DistillConfig, teacher: TeacherPolicy, model: &RobotModel, sim: &SimConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let student = StudentPolicy::from_teacher(&teacher, &config.student, &mut rng)?;
        let adam = AdamConfig { learning_rate: config.learning_rate, ..AdamConfig::default() };
        let opt_memory = OptimizerState::new(&student.memory_encoder, adam);
        let opt_low = OptimizerState::new(&student.low_level, adam);
        let envs = VecEnv::new(model, sim, config.env.clone(), config.n_envs, seed.wrapping_add(7))?;
        let histories = (0..config.n_envs).map(|_| student.new_history()).collect();
        let dataset = DistillDataset::new(config.dataset_capacity, student.history_len);
        Ok(Distiller { config, teacher, student, dataset, envs, epoch: 0, histories, opt_memory, opt_low, rng })
    }

    /// Collect `steps_per_epoch` steps per environment executing the teacher
    /// with probability `beta`. Returns the fresh samples as their own set.
    pub fn collect(&mut self, beta: f64) -> Result<DistillDataset> {
        let n = self.envs.len();
        let steps = self.config.steps_per_epoch;
        let hdim = self.student.history_len * PROPRIO_DIM;
        let mut fresh = DistillDataset::new(n * steps, self.student.history_len);
        let mut hist = Array2::zeros((n, hdim));
        let mut proprio = Array2::zeros((n, PROPRIO_DIM));
        for _ in 0..steps {
            let obs = self.envs.observations();
            let batch = ObsBatch::from_observations(&self.teacher.scaling, &obs);
            let (t_out, t_latent) = self.teacher.predict(&batch)?;
            for i in 0..n {
                self.histories[i].flatten_into(hist.row_mut(i).as_slice_mut().expect("contiguous"));
            }
            proprio.assign(&batch.proprio);
            let (s_action, _) = self.student.predict(hist.view(), proprio.view())?;
            let mut actions = Vec::with_capacity(n);
            for i in 0..n {
                let row = if self.rng.gen::<f64>() < beta { t_out.row(i) } else { s_action.row(i) };
                actions.push([row[0], row[1], row[2], row[3]]);
                let t_action: Vec<f64> = t_out.row(i).iter().take(ACTION_DIM).copied().collect();
                fresh.push(
                    hist.row(i).as_slice().expect("contiguous"),
                    proprio.row(i).as_slice().expect("contiguous"),
                    &t_action,
                    &t_latent.row(i).to_vec(),
                );
            }
            let step = self.envs.step(&actions)?;
            for (i, r) in step.results.iter().enumerate() {
                if r.done() {
                    self.histories[i].clear();
                } else {
                    let mut p = [0.0; PROPRIO_DIM];
                    p.copy_from_slice(proprio.row(i).as_slice().expect("contiguous"));
                    self.histories[i].push(p);
                }
            }
        }
        Ok(fresh)
    }

    fn absorb(&mut self, fresh: &DistillDataset) {
        let n = fresh.len();
        let hd = fresh.history_dim;
        for k in 0..n {
            self.dataset.push(
                &fresh.history[k * hd..(k + 1) * hd],
                &fresh.proprio[k * PROPRIO_DIM..(k + 1) * PROPRIO_DIM],
                &fresh.action[k * ACTION_DIM..(k + 1) * ACTION_DIM],
                &fresh.latent[k * LATENT_DIM..(k + 1) * LATENT_DIM],
            );
        }
    }

    /// Minibatch regression steps over the aggregated dataset.
    pub fn train(&mut self) -> Result<DistillTerms> {
        let n = self.dataset.len();
        let mut order: Vec<usize> = (0..n).collect();
        let mut last = DistillTerms::default();
        let mb = self.config.minibatch.min(n);
        let mut cursor = n;
        for _ in 0..self.config.updates_per_epoch {
            if cursor + mb > n {
                order.shuffle(&mut self.rng);
                cursor = 0;
            }
            let rows = &order[cursor..cursor + mb];
            cursor += mb;
            let [h, p, a, l] = self.dataset.gather(rows);
            let (_, mut g, terms) =
                distill_batch_loss(&self.student, h.view(), p.view(), a.view(), l.view(), self.config.lambda_rec)?;
            let norm = (g.memory_encoder.norm_sq() + g.low_level.norm_sq()).sqrt();
            if norm > self.config.max_grad_norm {
                let k = self.config.max_grad_norm / norm;
                g.memory_encoder.scale(k);
                g.low_level.scale(k);
            }
            optimizer_step(&mut self.student.memory_encoder, &g.memory_encoder, &mut self.opt_memory)?;
            optimizer_step(&mut self.student.low_level, &g.low_level, &mut self.opt_low)?;
            last = terms;
        }
        Ok(last)
    }

    /// One round: collect with the scheduled beta, score the student on the
    /// fresh (not yet trained on) samples, then aggregate and train.
    pub fn iterate(&mut self) -> Result<DistillLogRow> {
        let beta = self.config.beta(self.epoch);
        let fresh = self.collect(beta)?;
        let held_out = fresh.evaluate(&self.student)?;
        self.absorb(&fresh);
        self.train()?;
        let row = DistillLogRow { epoch: self.epoch, action_mse: held_out.action_mse, latent_mse: held_out.latent_mse, beta };
        self.epoch += 1;
        Ok(row)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::default();
        self.student.to_checkpoint(&mut ck);
        ck
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beta_anneals_linearly() {
        let c = DistillConfig { beta_decay_epochs: 4, ..DistillConfig::default() };
        assert_eq!(c.beta(0), 1.0);
        assert_eq!(c.beta(2), 0.5);
        assert_eq!(c.beta(4), 0.0);
        assert_eq!(c.beta(100), 0.0);
    }

    #[test]
    fn dataset_drops_oldest() {
        let mut d = DistillDataset::new(4, 1);
        for k in 0..6 {
            let v = k as f64;
            d.push(&[v; PROPRIO_DIM], &[v; PROPRIO_DIM], &[v; ACTION_DIM], &[v; LATENT_DIM]);
        }
        assert_eq!(d.len(), 4);
        assert_eq!(d.action[0], 2.0);
    }
}

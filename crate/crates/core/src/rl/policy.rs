//! Teacher policy: terrain and privileged encoders feeding a low-level
//! network that emits the action mean and a value estimate.

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::obs::{Observation, PRIVILEGED_DIM, PROPRIO_DIM, TERRAIN_DIM};
use crate::error::{Error, Result};
use crate::nn::{backward_batch, forward_batch, predict_batch, Activation, Checkpoint, GradTree, ParamTree, Tape};
use crate::sim::RobotModel;

pub const ACTION_DIM: usize = 4;
pub const TERRAIN_LATENT: usize = 16;
pub const PRIVILEGED_LATENT: usize = 8;
pub const LATENT_DIM: usize = TERRAIN_LATENT + PRIVILEGED_LATENT;
pub const LOW_LEVEL_INPUT: usize = PROPRIO_DIM + LATENT_DIM;
/// Action mean followed by the value estimate.
pub const LOW_LEVEL_OUTPUT: usize = ACTION_DIM + 1;

const HALF_LN_TWO_PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyShape {
    pub encoder_hidden: Vec<usize>,
    pub low_level_hidden: Vec<usize>,
    pub init_log_std: f64,
}

impl Default for PolicyShape {
    fn default() -> Self {
        PolicyShape { encoder_hidden: vec![128, 64], low_level_hidden: vec![256, 128, 64], init_log_std: (0.3f64).ln() }
    }
}

fn sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut v = vec![input];
    v.extend_from_slice(hidden);
    v.push(output);
    v
}

/// Fixed rescaling applied to raw observations before the networks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InputScaling {
    pub nominal_joints: [f64; 4],
    /// Nominal robot weight (N); forces are divided by it.
    pub weight: f64,
}

impl InputScaling {
    pub fn for_model(model: &RobotModel, gravity: f64) -> Self {
        InputScaling { nominal_joints: model.nominal_joints(), weight: model.total_mass() * gravity }
    }

    fn to_vec(self) -> Vec<f64> {
        let mut v = self.nominal_joints.to_vec();
        v.push(self.weight);
        v
    }

    fn from_slice(v: &[f64]) -> Result<Self> {
        if v.len() != 5 || !(v[4] > 0.0) {
            return Err(Error::Data("input scaling vector must hold 4 joints and a positive weight".into()));
        }
        Ok(InputScaling { nominal_joints: [v[0], v[1], v[2], v[3]], weight: v[4] })
    }
}

/// Network inputs for a batch of observations, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ObsBatch {
    pub proprio: Array2<f64>,
    pub privileged: Array2<f64>,
    pub terrain: Array2<f64>,
}

impl ObsBatch {
    pub fn from_observations(scaling: &InputScaling, obs: &[Observation]) -> Self {
        let n = obs.len();
        let mut batch = ObsBatch {
            proprio: Array2::zeros((n, PROPRIO_DIM)),
            privileged: Array2::zeros((n, PRIVILEGED_DIM)),
            terrain: Array2::zeros((n, TERRAIN_DIM)),
        };
        for (i, o) in obs.iter().enumerate() {
            batch.set_row(i, scaling, o);
        }
        batch
    }

    pub fn set_row(&mut self, i: usize, scaling: &InputScaling, o: &Observation) {
        let p = o.proprio.input(&scaling.nominal_joints);
        let q = o.privileged.input(scaling.weight);
        let t = o.terrain.input();
        self.proprio.row_mut(i).iter_mut().zip(p).for_each(|(d, v)| *d = v);
        self.privileged.row_mut(i).iter_mut().zip(q).for_each(|(d, v)| *d = v);
        self.terrain.row_mut(i).iter_mut().zip(t).for_each(|(d, v)| *d = v);
    }

    pub fn len(&self) -> usize {
        self.proprio.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, rows: &[usize]) -> Self {
        ObsBatch {
            proprio: self.proprio.select(Axis(0), rows),
            privileged: self.privileged.select(Axis(0), rows),
            terrain: self.terrain.select(Axis(0), rows),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TeacherOutput {
    pub mean: [f64; ACTION_DIM],
    pub value: f64,
    pub terrain_latent: [f64; TERRAIN_LATENT],
    pub privileged_latent: [f64; PRIVILEGED_LATENT],
}

impl TeacherOutput {
    pub fn latent(&self) -> [f64; LATENT_DIM] {
        let mut v = [0.0; LATENT_DIM];
        v[..TERRAIN_LATENT].copy_from_slice(&self.terrain_latent);
        v[TERRAIN_LATENT..].copy_from_slice(&self.privileged_latent);
        v
    }
}

/// Batched forward result with the tapes needed for the reverse pass.
#[derive(Debug, Clone)]
pub struct TeacherForward {
    /// `B x 5`: action mean columns then value.
    pub output: Array2<f64>,
    /// `B x 24`: terrain latent then privileged latent.
    pub latent: Array2<f64>,
    tapes: [Tape; 3],
}

impl TeacherForward {
    pub fn mean(&self) -> ArrayView2<'_, f64> {
        self.output.slice(s![.., ..ACTION_DIM])
    }

    pub fn values(&self) -> Vec<f64> {
        self.output.column(ACTION_DIM).to_vec()
    }
}

/// Parameter gradients for every part of the teacher.
#[derive(Debug, Clone, PartialEq)]
pub struct TeacherGrads {
    pub terrain_encoder: GradTree,
    pub privileged_encoder: GradTree,
    pub low_level: GradTree,
    pub log_std: Vec<f64>,
}

impl TeacherGrads {
    pub fn norm_sq(&self) -> f64 {
        self.terrain_encoder.norm_sq()
            + self.privileged_encoder.norm_sq()
            + self.low_level.norm_sq()
            + self.log_std.iter().map(|g| g * g).sum::<f64>()
    }

    pub fn scale(&mut self, k: f64) {
        self.terrain_encoder.scale(k);
        self.privileged_encoder.scale(k);
        self.low_level.scale(k);
        self.log_std.iter_mut().for_each(|g| *g *= k);
    }

    pub fn is_finite(&self) -> bool {
        self.terrain_encoder.is_finite()
            && self.privileged_encoder.is_finite()
            && self.low_level.is_finite()
            && self.log_std.iter().all(|g| g.is_finite())
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = self.terrain_encoder.to_flat();
        v.extend(self.privileged_encoder.to_flat());
        v.extend(self.low_level.to_flat());
        v.extend_from_slice(&self.log_std);
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TeacherPolicy {
    pub terrain_encoder: ParamTree,
    pub privileged_encoder: ParamTree,
    pub low_level: ParamTree,
    pub log_std: Vec<f64>,
    pub scaling: InputScaling,
}

impl TeacherPolicy {
    pub fn new<R: Rng + ?Sized>(shape: &PolicyShape, scaling: InputScaling, rng: &mut R) -> Self {
        let g = 2f64.sqrt();
        let terrain_encoder = ParamTree::mlp(
            "teacher.terrain_encoder",
            &sizes(TERRAIN_DIM, &shape.encoder_hidden, TERRAIN_LATENT),
            Activation::Elu,
            g,
            1.0,
            rng,
        );
        let privileged_encoder = ParamTree::mlp(
            "teacher.privileged_encoder",
            &sizes(PRIVILEGED_DIM, &shape.encoder_hidden, PRIVILEGED_LATENT),
            Activation::Elu,
            g,
            1.0,
            rng,
        );
        let low_level = ParamTree::mlp(
            "teacher.low_level",
            &sizes(LOW_LEVEL_INPUT, &shape.low_level_hidden, LOW_LEVEL_OUTPUT),
            Activation::Elu,
            g,
            0.01,
            rng,
        );
        TeacherPolicy {
            terrain_encoder,
            privileged_encoder,
            low_level,
            log_std: vec![shape.init_log_std; ACTION_DIM],
            scaling,
        }
    }

    pub fn from_parts(
        terrain_encoder: ParamTree,
        privileged_encoder: ParamTree,
        low_level: ParamTree,
        log_std: Vec<f64>,
        scaling: InputScaling,
    ) -> Result<Self> {
        let dims = [
            ("terrain encoder", terrain_encoder.in_dim(), TERRAIN_DIM, terrain_encoder.out_dim(), TERRAIN_LATENT),
            (
                "privileged encoder",
                privileged_encoder.in_dim(),
                PRIVILEGED_DIM,
                privileged_encoder.out_dim(),
                PRIVILEGED_LATENT,
            ),
            ("low-level network", low_level.in_dim(), LOW_LEVEL_INPUT, low_level.out_dim(), LOW_LEVEL_OUTPUT),
        ];
        for (name, i, ei, o, eo) in dims {
            if i != ei || o != eo {
                return Err(Error::Shape(format!("{name} maps {i} -> {o}, expected {ei} -> {eo}")));
            }
        }
        if log_std.len() != ACTION_DIM || !log_std.iter().all(|v| v.is_finite()) {
            return Err(Error::Shape(format!("log_std must hold {ACTION_DIM} finite values")));
        }
        Ok(TeacherPolicy { terrain_encoder, privileged_encoder, low_level, log_std, scaling })
    }

    pub fn num_params(&self) -> usize {
        self.terrain_encoder.num_params() + self.privileged_encoder.num_params() + self.low_level.num_params() + ACTION_DIM
    }

    pub fn is_finite(&self) -> bool {
        self.terrain_encoder.is_finite()
            && self.privileged_encoder.is_finite()
            && self.low_level.is_finite()
            && self.log_std.iter().all(|v| v.is_finite())
    }

    /// Single-observation forward pass.
    pub fn forward(&self, obs: &Observation) -> Result<TeacherOutput> {
        let batch = ObsBatch::from_observations(&self.scaling, std::slice::from_ref(obs));
        let (out, latent) = self.predict(&batch)?;
        let mut r = TeacherOutput {
            mean: [0.0; ACTION_DIM],
            value: out[[0, ACTION_DIM]],
            terrain_latent: [0.0; TERRAIN_LATENT],
            privileged_latent: [0.0; PRIVILEGED_LATENT],
        };
        for j in 0..ACTION_DIM {
            r.mean[j] = out[[0, j]];
        }
        for j in 0..TERRAIN_LATENT {
            r.terrain_latent[j] = latent[[0, j]];
        }
        for j in 0..PRIVILEGED_LATENT {
            r.privileged_latent[j] = latent[[0, TERRAIN_LATENT + j]];
        }
        if !r.mean.iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric("teacher action mean is not finite".into()));
        }
        Ok(r)
    }

    /// Tape-free batched pass returning `(B x 5 output, B x 24 latent)`.
    pub fn predict(&self, batch: &ObsBatch) -> Result<(Array2<f64>, Array2<f64>)> {
        let le = predict_batch(&self.terrain_encoder, batch.terrain.view())?;
        let lp = predict_batch(&self.privileged_encoder, batch.privileged.view())?;
        let latent = concatenate![Axis(1), le, lp];
        let x = concatenate![Axis(1), batch.proprio, latent];
        let out = predict_batch(&self.low_level, x.view())?;
        Ok((out, latent))
    }

    pub fn forward_batch(&self, batch: &ObsBatch) -> Result<TeacherForward> {
        let (le, te) = forward_batch(&self.terrain_encoder, batch.terrain.view())?;
        let (lp, tp) = forward_batch(&self.privileged_encoder, batch.privileged.view())?;
        let latent = concatenate![Axis(1), le, lp];
        let x = concatenate![Axis(1), batch.proprio, latent];
        let (output, tl) = forward_batch(&self.low_level, x.view())?;
        Ok(TeacherForward { output, latent, tapes: [te, tp, tl] })
    }

    /// Reverse pass from a `B x 5` output gradient plus a direct log-std gradient.
    pub fn backward(&self, fwd: &TeacherForward, output_grad: ArrayView2<f64>, log_std_grad: Vec<f64>) -> Result<TeacherGrads> {
        let [te, tp, tl] = &fwd.tapes;
        let (low_level, dx) = backward_batch(&self.low_level, tl, output_grad)?;
        let a = PROPRIO_DIM;
        let b = a + TERRAIN_LATENT;
        let (terrain_encoder, _) = backward_batch(&self.terrain_encoder, te, dx.slice(s![.., a..b]))?;
        let (privileged_encoder, _) = backward_batch(&self.privileged_encoder, tp, dx.slice(s![.., b..]))?;
        Ok(TeacherGrads { terrain_encoder, privileged_encoder, low_level, log_std: log_std_grad })
    }

    pub fn to_checkpoint(&self, ckpt: &mut Checkpoint) {
        ckpt.networks.push(("teacher.terrain_encoder".into(), self.terrain_encoder.clone()));
        ckpt.networks.push(("teacher.privileged_encoder".into(), self.privileged_encoder.clone()));
        ckpt.networks.push(("teacher.low_level".into(), self.low_level.clone()));
        ckpt.vectors.push(("teacher.log_std".into(), self.log_std.clone()));
        ckpt.vectors.push(("teacher.input_scaling".into(), self.scaling.to_vec()));
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        TeacherPolicy::from_parts(
            ckpt.network("teacher.terrain_encoder")?.clone(),
            ckpt.network("teacher.privileged_encoder")?.clone(),
            ckpt.network("teacher.low_level")?.clone(),
            ckpt.vector("teacher.log_std")?.to_vec(),
            InputScaling::from_slice(ckpt.vector("teacher.input_scaling")?)?,
        )
    }
}

/// Diagonal Gaussian log-density.
pub fn gaussian_log_prob(action: &[f64], mean: &[f64], log_std: &[f64]) -> f64 {
    action
        .iter()
        .zip(mean)
        .zip(log_std)
        .map(|((a, m), ls)| {
            let z = (a - m) / ls.exp();
            -0.5 * z * z - ls - HALF_LN_TWO_PI
        })
        .sum()
}

pub fn gaussian_entropy(log_std: &[f64]) -> f64 {
    log_std.iter().map(|ls| ls + HALF_LN_TWO_PI + 0.5).sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampledAction {
    /// Unclipped draw; the log-probability refers to this value.
    pub raw: [f64; ACTION_DIM],
    /// Draw clipped to `[-bound, bound]`, as sent to the joints.
    pub action: [f64; ACTION_DIM],
    pub log_prob: f64,
}

pub fn sample_action<R: Rng + ?Sized>(mean: &[f64], log_std: &[f64], bound: f64, rng: &mut R) -> SampledAction {
    let mut raw = [0.0; ACTION_DIM];
    for j in 0..ACTION_DIM {
        let e: f64 = rng.sample(StandardNormal);
        raw[j] = mean[j] + log_std[j].exp() * e;
    }
    let log_prob = gaussian_log_prob(&raw, mean, log_std);
    SampledAction { raw, action: raw.map(|a| a.clamp(-bound, bound)), log_prob }
}

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::history::{ObservationHistory, HISTORY_LEN};
use crate::error::{Error, Result};
use crate::nn::{backward_batch, forward_batch, predict_batch, Activation, Checkpoint, GradTree, Layer, ParamTree, Tape};
use crate::rl::{InputScaling, ProprioObs, TeacherPolicy, ACTION_DIM, LATENT_DIM, PROPRIO_DIM};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudentShape {
    pub history_len: usize,
    pub memory_hidden: Vec<usize>,
}

impl Default for StudentShape {
    fn default() -> Self {
        StudentShape { history_len: HISTORY_LEN, memory_hidden: vec![256, 128] }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudentOutput {
    pub action: [f64; ACTION_DIM],
    pub latent: [f64; LATENT_DIM],
}

#[derive(Debug, Clone)]
pub struct StudentForward {
    /// `B x 4` action means.
    pub action: Array2<f64>,
    /// `B x 24` reconstructed latents.
    pub latent: Array2<f64>,
    tapes: [Tape; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudentGrads {
    pub memory_encoder: GradTree,
    pub low_level: GradTree,
}

/// Memory encoder over the flattened history plus a low-level network with
/// the teacher's layer shapes. The low-level value output is carried along
/// but unused.
#[derive(Debug, Clone, PartialEq)]
pub struct StudentPolicy {
    pub memory_encoder: ParamTree,
    pub low_level: ParamTree,
    pub history_len: usize,
    pub scaling: InputScaling,
}

fn renamed(net: &ParamTree, prefix: &str) -> Result<ParamTree> {
    let layers: Vec<Layer> = net
        .layers()
        .iter()
        .enumerate()
        .map(|(i, l)| Layer { name: format!("{prefix}.{i}"), ..l.clone() })
        .collect();
    ParamTree::new(layers)
}

/// Layer-by-layer shape equality of two networks.
pub fn same_shapes(a: &ParamTree, b: &ParamTree) -> bool {
    a.shapes() == b.shapes()
}

impl StudentPolicy {
    /// Fresh memory encoder; the low-level network starts from the teacher's weights.
    pub fn from_teacher<R: Rng + ?Sized>(teacher: &TeacherPolicy, shape: &StudentShape, rng: &mut R) -> Result<Self> {
        if shape.history_len == 0 {
            return Err(Error::Config("history length must be positive".into()));
        }
        let mut sizes = vec![shape.history_len * PROPRIO_DIM];
        sizes.extend_from_slice(&shape.memory_hidden);
        sizes.push(LATENT_DIM);
        let memory_encoder = ParamTree::mlp("student.memory_encoder", &sizes, Activation::Elu, 2f64.sqrt(), 1.0, rng);
        Ok(StudentPolicy {
            memory_encoder,
            low_level: renamed(&teacher.low_level, "student.low_level")?,
            history_len: shape.history_len,
            scaling: teacher.scaling,
        })
    }

    pub fn from_parts(memory_encoder: ParamTree, low_level: ParamTree, scaling: InputScaling) -> Result<Self> {
        if !memory_encoder.in_dim().is_multiple_of(PROPRIO_DIM) || memory_encoder.out_dim() != LATENT_DIM {
            return Err(Error::Shape(format!(
                "memory encoder maps {} -> {}, expected a multiple of {PROPRIO_DIM} -> {LATENT_DIM}",
                memory_encoder.in_dim(),
                memory_encoder.out_dim()
            )));
        }
        if low_level.in_dim() != PROPRIO_DIM + LATENT_DIM || low_level.out_dim() <= ACTION_DIM {
            return Err(Error::Shape("student low-level network has the wrong input or output size".into()));
        }
        let history_len = memory_encoder.in_dim() / PROPRIO_DIM;
        Ok(StudentPolicy { memory_encoder, low_level, history_len, scaling })
    }

    pub fn new_history(&self) -> ObservationHistory {
        ObservationHistory::new(self.history_len).expect("history length is positive")
    }

    pub fn forward(&self, history: &ObservationHistory, obs: &ProprioObs) -> Result<StudentOutput> {
        if history.capacity() != self.history_len {
            return Err(Error::Shape(format!(
                "history holds {} steps, student expects {}",
                history.capacity(),
                self.history_len
            )));
        }
        let h = history.flatten();
        let p = obs.input(&self.scaling.nominal_joints);
        let (a, l) = self.predict(
            ArrayView2::from_shape((1, h.len()), &h).map_err(|e| Error::Shape(e.to_string()))?,
            ArrayView2::from_shape((1, PROPRIO_DIM), &p).map_err(|e| Error::Shape(e.to_string()))?,
        )?;
        let mut out = StudentOutput { action: [0.0; ACTION_DIM], latent: [0.0; LATENT_DIM] };
        out.action.iter_mut().zip(a.row(0)).for_each(|(d, v)| *d = *v);
        out.latent.iter_mut().zip(l.row(0)).for_each(|(d, v)| *d = *v);
        Ok(out)
    }

    /// Tape-free batched pass returning `(B x 4 actions, B x 24 latents)`.
    pub fn predict(&self, history: ArrayView2<f64>, proprio: ArrayView2<f64>) -> Result<(Array2<f64>, Array2<f64>)> {
        let latent = predict_batch(&self.memory_encoder, history)?;
        let x = concatenate![Axis(1), proprio, latent];
        let out = predict_batch(&self.low_level, x.view())?;
        Ok((out.slice(s![.., ..ACTION_DIM]).to_owned(), latent))
    }

    pub fn forward_batch(&self, history: ArrayView2<f64>, proprio: ArrayView2<f64>) -> Result<StudentForward> {
        let (latent, tm) = forward_batch(&self.memory_encoder, history)?;
        let x = concatenate![Axis(1), proprio, latent];
        let (out, tl) = forward_batch(&self.low_level, x.view())?;
        Ok(StudentForward { action: out.slice(s![.., ..ACTION_DIM]).to_owned(), latent, tapes: [tm, tl] })
    }

    /// Reverse pass given gradients on the actions and directly on the latents.
    pub fn backward(&self, fwd: &StudentForward, action_grad: ArrayView2<f64>, latent_grad: ArrayView2<f64>) -> Result<StudentGrads> {
        let [tm, tl] = &fwd.tapes;
        let n = action_grad.nrows();
        let mut out_grad = Array2::zeros((n, self.low_level.out_dim()));
        out_grad.slice_mut(s![.., ..ACTION_DIM]).assign(&action_grad);
        let (low_level, dx) = backward_batch(&self.low_level, tl, out_grad.view())?;
        let dl = &dx.slice(s![.., PROPRIO_DIM..]) + &latent_grad;
        let (memory_encoder, _) = backward_batch(&self.memory_encoder, tm, dl.view())?;
        Ok(StudentGrads { memory_encoder, low_level })
    }

    pub fn to_checkpoint(&self, ckpt: &mut Checkpoint) {
        ckpt.networks.push(("student.memory_encoder".into(), self.memory_encoder.clone()));
        ckpt.networks.push(("student.low_level".into(), self.low_level.clone()));
        let mut v = self.scaling.nominal_joints.to_vec();
        v.push(self.scaling.weight);
        ckpt.vectors.push(("student.input_scaling".into(), v));
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let v = ckpt.vector("student.input_scaling")?;
        if v.len() != 5 {
            return Err(Error::Data("student input scaling must hold 5 values".into()));
        }
        let scaling = InputScaling { nominal_joints: [v[0], v[1], v[2], v[3]], weight: v[4] };
        StudentPolicy::from_parts(
            ckpt.network("student.memory_encoder")?.clone(),
            ckpt.network("student.low_level")?.clone(),
            scaling,
        )
    }
}

fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len().max(1) as f64
}

/// Imitation plus weighted latent reconstruction, both mean-square.
pub fn distill_loss(
    student_action: &[f64],
    teacher_action: &[f64],
    student_latent: &[f64],
    teacher_latent: &[f64],
    lambda_rec: f64,
) -> f64 {
    mse(student_action, teacher_action) + lambda_rec * mse(student_latent, teacher_latent)
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DistillTerms {
    pub action_mse: f64,
    pub latent_mse: f64,
}

/// Batched loss and its gradient. Rows of `history`, `proprio`,
/// `teacher_action` and `teacher_latent` describe the same samples.
pub fn distill_batch_loss(
    student: &StudentPolicy,
    history: ArrayView2<f64>,
    proprio: ArrayView2<f64>,
    teacher_action: ArrayView2<f64>,
    teacher_latent: ArrayView2<f64>,
    lambda_rec: f64,
) -> Result<(f64, StudentGrads, DistillTerms)> {
    let n = history.nrows();
    if n == 0 {
        return Err(Error::Config("empty distillation batch".into()));
    }
    let fwd = student.forward_batch(history, proprio)?;
    let da = &fwd.action - &teacher_action;
    let dl = &fwd.latent - &teacher_latent;
    let terms = DistillTerms {
        action_mse: da.iter().map(|v| v * v).sum::<f64>() / (n * ACTION_DIM) as f64,
        latent_mse: dl.iter().map(|v| v * v).sum::<f64>() / (n * LATENT_DIM) as f64,
    };
    let loss = terms.action_mse + lambda_rec * terms.latent_mse;
    if !loss.is_finite() {
        return Err(Error::Numeric("distillation loss is not finite".into()));
    }
    let ga = da * (2.0 / (n * ACTION_DIM) as f64);
    let gl = dl * (2.0 * lambda_rec / (n * LATENT_DIM) as f64);
    let grads = student.backward(&fwd, ga.view(), gl.view())?;
    Ok((loss, grads, terms))
}

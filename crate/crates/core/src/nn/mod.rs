//! Small dense networks: forward/backward passes, an Adam optimizer and the
//! checkpoint archive.

mod adam;
mod checkpoint;
mod mlp;

pub use adam::{optimizer_step, AdamConfig, OptimizerState, VectorAdam};
pub use checkpoint::{Checkpoint, FORMAT_VERSION, MAGIC};
pub use mlp::{
    backward, backward_batch, forward, forward_batch, input_gradient_penalty, input_gradients,
    orthogonal, predict_batch, row, Activation, GradTree, Layer, ParamTree, Tape,
};

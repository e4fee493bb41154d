//! Teacher-student distillation onto a proprioceptive-history policy.

mod dagger;
mod history;
mod student;

pub use dagger::{DistillConfig, DistillDataset, DistillLogRow, DistillLogWriter, Distiller, DISTILL_LOG_COLUMNS};
pub use history::{history_window, ObservationHistory, HISTORY_LEN};
pub use student::{
    distill_batch_loss, distill_loss, same_shapes, DistillTerms, StudentForward, StudentGrads, StudentOutput,
    StudentPolicy, StudentShape,
};

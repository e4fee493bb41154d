//! Run configuration, evaluation episodes, metrics and plots.

mod config;
mod eval;
mod plot;

pub use config::{RunConfig, SCHEMA_VERSION};
pub use eval::{
    eval_sweep, evaluate_cell, push_recovered, run_episode, run_push_test, success_rate, tracking_accuracy,
    write_episode_csv, write_push_csv, write_sweep_csv, Controller, EpisodeLog, EpisodeRow, EvalConfig, Policy, Push, PushTestConfig,
    PushTrial, StudentController, SweepRow, TeacherController, EPISODE_COLUMNS, PUSH_COLUMNS, SWEEP_COLUMNS,
};
pub use plot::{emit_plots, line_chart_svg, read_train_log, Series};

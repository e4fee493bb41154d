use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("simulation diverged at t={time:.3}s")]
    Diverged { time: f64 },
    #[error("target out of reach: hip-foot distance {distance:.4} m exceeds {reach:.4} m")]
    Reach { distance: f64, reach: f64 },
    #[error("inverse kinematics failed at frame {frame}: {source}")]
    FrameIk {
        frame: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("optimization failed after {iterations} iterations (dynamics defect {max_defect:.3e}, constraint violation {max_violation:.3e})")]
    OptimizationFailed {
        iterations: usize,
        max_defect: f64,
        max_violation: f64,
    },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Data(_) => 1,
            Error::Io(_) => 3,
            _ => 2,
        }
    }
}

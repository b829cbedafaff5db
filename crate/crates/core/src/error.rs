use crate::linalg::SolveReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("configuration error at line {line}: {key}: {message}")]
    ConfigKey {
        line: usize,
        key: String,
        message: String,
    },

    #[error("linear solve failed ({context}): {report}")]
    Solve {
        context: String,
        report: SolveReport,
    },

    #[error("c-positivity violated at vertex {vertex} (c = {value:e})")]
    CPositivity { vertex: usize, value: f64 },

    #[error("non-positive {quantity} {value:e} at vertex {vertex} ({detail})")]
    NonPositive {
        quantity: &'static str,
        vertex: usize,
        value: f64,
        detail: String,
    },

    #[error("assembly error: {0}")]
    Assembly(String),

    #[error("non-finite value {value} at vertex {vertex}")]
    Evaluation { vertex: usize, value: f64 },

    #[error("element-mean density {value:e} underflows on element {element}")]
    Underflow { element: usize, value: f64 },

    #[error("degenerate denominator: {0}")]
    Degenerate(String),

    #[error("picard iteration did not converge in {iterations} sweeps (last change {change:e})")]
    PicardDiverged { iterations: usize, change: f64 },

    #[error("time step {dt:e} fell below dt_min {dt_min:e} at t = {time}: {cause}")]
    StepUnderflow {
        time: f64,
        dt: f64,
        dt_min: f64,
        cause: Box<Error>,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Failures a time stepper can recover from by retrying with a smaller step.
    pub fn is_step_recoverable(&self) -> bool {
        matches!(
            self,
            Error::CPositivity { .. }
                | Error::PicardDiverged { .. }
                | Error::Solve { .. }
                | Error::NonPositive { .. }
                | Error::Evaluation { .. }
        )
    }

    /// Short machine-parsable category used by the command-line driver.
    pub fn category(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "INVALID_ARGUMENT",
            Error::Config(_) | Error::ConfigKey { .. } => "CONFIG_ERROR",
            Error::Io(_) => "IO_ERROR",
            _ => "SOLVER_ERROR",
        }
    }
}

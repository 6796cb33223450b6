use thiserror::Error;

/// Errors raised by the fractional-calculus primitives, the solver, the
/// hypothesis checks and the steering loop.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("fractional order {0} outside the admissible range")]
    OrderOutOfRange(f64),
    #[error("accuracy loss: {0}")]
    AccuracyLoss(String),
    #[error("quadrature failure: {0}")]
    QuadratureFailure(String),
    #[error("difference stencil underflow at t = {0}")]
    StencilUnderflow(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("route unavailable: {0}")]
    RouteUnavailable(String),
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("index {index} out of range (max {max})")]
    IndexOutOfRange { index: usize, max: usize },
    #[error("time {t} outside impulse window ({lo}, {hi}]")]
    TimeOutsideWindow { t: f64, lo: f64, hi: f64 },
    #[error("empty interval {0}")]
    EmptyInterval(usize),
    #[error("declared constant violated: {0}")]
    ConstantViolated(String),
    #[error("history incomplete: interval {0} depends on unsolved intervals")]
    HistoryIncomplete(usize),
    #[error("no convergence after {iterations} iterations (last error {last_error:.3e}, ratio {ratio:.3})")]
    NonConvergence {
        iterations: usize,
        last_error: f64,
        ratio: f64,
    },
    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),
    #[error("terminal operator is singular: {0}")]
    SingularTerminalOperator(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

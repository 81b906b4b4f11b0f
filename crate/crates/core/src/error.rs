use thiserror::Error;

/// Failures reported by the solvers.
///
/// Configuration problems (shapes, windows, indices) are kept apart from
/// numerical failures so front ends can map them to different exit codes.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("control window mismatch: expected nodes {expected_start}..={expected_end}, got start {got_start} with {got_len} values")]
    ControlWindow { expected_start: usize, expected_end: usize, got_start: usize, got_len: usize },
    #[error("grid index {index} out of range (allowed {min}..={max})")]
    IndexOutOfRange { index: usize, min: usize, max: usize },
    #[error("singular linear system in {0}")]
    Singular(&'static str),
    #[error("backward sweep blew up at node {node}: norm {norm:e} exceeds bound {bound:e}")]
    BlowUp { node: usize, norm: f64, bound: f64 },
    #[error("no P2 checkpoint stored at node {0}; request it when solving the Riccati system")]
    MissingCheckpoint(usize),
}

impl Error {
    /// True for errors caused by the inputs rather than by the numerics.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Dimension(_)
                | Error::Grid(_)
                | Error::ControlWindow { .. }
                | Error::IndexOutOfRange { .. }
                | Error::MissingCheckpoint(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

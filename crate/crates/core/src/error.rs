use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("eigenvalue solver did not converge on a {0}x{0} matrix")]
    EigenNoConvergence(usize),

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("step size {alpha} violates the Perron condition alpha < 1/d_max = {limit}")]
    StepSizeTooLarge { alpha: f64, limit: f64 },

    #[error("graph has no directed spanning tree")]
    NoSpanningTree,

    #[error("invalid topology: {0}")]
    InvalidTopology(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite state at step {t}")]
    NonFinite { t: u64 },

    #[error("non-finite averaged-model right-hand side at tau = {tau}")]
    NonFiniteRhs { tau: f64 },

    #[error("job conservation violated at step {t}: sum of redistributions = {imbalance:e}")]
    Conservation { t: u64, imbalance: f64 },

    #[error("undefined constant: {0}")]
    Undefined(String),

    #[error("scenario has {} error(s):\n  {}", .0.len(), .0.join("\n  "))]
    Config(Vec<String>),

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("run failed for seed {seed}: {source}")]
    Run {
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code: 1 for validation problems, 2 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidGraph(_)
            | Error::StepSizeTooLarge { .. }
            | Error::NoSpanningTree
            | Error::InvalidTopology(_)
            | Error::InvalidArgument(_)
            | Error::Config(_)
            | Error::Parse { .. } => 1,
            _ => 2,
        }
    }
}

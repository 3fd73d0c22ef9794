use thiserror::Error;

use crate::ipddp::IpddpResult;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("every sample has infinite cost ({context})")]
    NoFeasibleSample { context: String },

    #[error("corridor stage {stage} is infeasible: the path point lies inside an obstacle")]
    CorridorInfeasible { stage: usize },

    #[error("corridor stage {stage} has non-positive radius {radius}")]
    InfeasibleCorridor { stage: usize, radius: f64 },

    #[error("IPDDP solve failed: regularization exceeded its cap after {} iterations", .0.iterations)]
    SolveFailed(Box<IpddpResult>),

    #[error("planner failed at outer iteration {iteration}: {source}")]
    PlannerFailed {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("scenario parse error at `{path}`{}: {message}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    Parse {
        path: String,
        line: Option<usize>,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn check_dim(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what,
            expected,
            got,
        })
    }
}

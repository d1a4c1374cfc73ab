use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("spin {0} is not a supported half-integer (1/2 ..= 9/2)")]
    InvalidSpin(f64),
    #[error("{0} must be finite")]
    NonFinite(&'static str),
    #[error("{field} = {value} out of range ({expected})")]
    OutOfRange {
        field: &'static str,
        value: f64,
        expected: &'static str,
    },
    #[error("level index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },
    #[error("selective pulse needs adjacent levels, got ({0}, {1})")]
    NonAdjacentSelective(usize, usize),
    #[error("transition ({0}, {1}) is not a single-quantum transition")]
    NotSingleQuantum(usize, usize),
    #[error("{steps} phase steps alias coherence-order changes up to {max_dp}; need more than {needed}")]
    PhaseAliasing {
        steps: usize,
        max_dp: usize,
        needed: usize,
    },
    #[error("density matrix invariant violated: {0}")]
    Invariant(String),
    #[error(transparent)]
    Fit(#[from] crate::experiments::fit::FitError),
}

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("{qubits} qubits exceeds the configured cap of {cap}")]
    DimensionOverflow { qubits: usize, cap: usize },
    #[error("qubit index {index} out of range for {n_qubits} qubits")]
    QubitOutOfRange { index: usize, n_qubits: usize },
    #[error("witness pair must name two distinct qubits, got ({0}, {0})")]
    SameQubit(usize),
    #[error("matrix is not Hermitian (max deviation {0:e})")]
    NotHermitian(f64),
    #[error("invalid quantum state: {0}")]
    InvalidState(String),
    #[error("state is not physical: eigenvalue {0:e} is negative")]
    NonPhysical(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("shot count must be at least 1")]
    InvalidShots,
    #[error("time {t} outside [0, {t_f}]")]
    TimeOutOfRange { t: f64, t_f: f64 },
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
    #[error("expected {expected} weights, got {got}")]
    WeightCount { expected: usize, got: usize },
    #[error("weight index {index} out of range for {len} weights")]
    WeightIndex { index: usize, len: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("backend failure: {0}")]
    Backend(String),
    #[error("linear system is singular even with damping")]
    Singular,
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("perturbation size must be nonzero")]
    ZeroPerturbation,
    #[error("missing trajectory: {0}")]
    MissingTrajectory(String),
}

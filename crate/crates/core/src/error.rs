use thiserror::Error;

/// Errors raised by the simulator, the learning loop and the optimizers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("qubit index {index} out of range for a {n_qubits}-qubit register")]
    QubitOutOfRange { index: usize, n_qubits: usize },

    #[error("basis index {index} out of range for dimension {dim}")]
    BasisOutOfRange { index: usize, dim: usize },

    #[error("gate is not unitary (deviation {deviation:.3e})")]
    NonUnitary { deviation: f64 },

    #[error("control and target qubit must differ (both {0})")]
    SameQubit(usize),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("state norm deviates from 1 by {deviation:.3e}")]
    Normalization { deviation: f64 },

    #[error("probability {value} outside [0, 1]")]
    Probability { value: f64 },

    #[error("sampled outcome has vanishing probability {0:e}")]
    VanishingOutcome(f64),

    #[error("problem too large for the brute-force oracle: {cells} cells x {dim} outcomes")]
    ScaleGuard { cells: usize, dim: usize },

    #[error("unknown feedback strategy `{0}`")]
    UnknownStrategy(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

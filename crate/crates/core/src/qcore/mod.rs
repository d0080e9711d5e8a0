//! Exact small-dimension quantum state engine.
//!
//! States are density operators on one or two qubits stored as dense complex
//! matrices. Everything is exact linear algebra; at dimension four there is
//! no reason to approximate.

mod basis;
mod rng;
mod state;

pub use basis::{BasisLabel, MeasurementBasis, ProtocolBases};
pub use rng::RngStream;
pub use state::{
    chsh_cell_win_probabilities, chsh_win_probability, chsh_win_probability_with, chsh_wins,
    make_epr, measure, outcome_distribution, outcome_probabilities, partial_trace, werner,
    DensityOperator,
};

use thiserror::Error;

/// Tolerance for algebraic identities (Hermiticity, trace, projector sums).
pub const ALGEBRAIC_TOL: f64 = 1e-12;
/// Floor for the smallest eigenvalue of a valid density operator.
pub const PSD_FLOOR: f64 = -1e-10;
/// Outcome probabilities below this on both branches signal an invalid state.
pub const DEGENERATE_PROB: f64 = 1e-14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QError {
    #[error("expected a {expected}-dimensional state, got dimension {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("unsupported dimension {0}; only one or two qubits are modelled")]
    UnsupportedDimension(usize),
    #[error("matrix is not Hermitian (max deviation {0:e})")]
    NotHermitian(f64),
    #[error("trace is {0}, expected 1")]
    BadTrace(f64),
    #[error("matrix is not positive semidefinite (smallest eigenvalue {0:e})")]
    NotPositive(f64),
    #[error("subsystem index {index} out of range for a {qubits}-qubit state")]
    SubsystemOutOfRange { index: usize, qubits: usize },
    #[error("both outcome probabilities vanish ({0:e}, {1:e}); the state is invalid")]
    DegenerateProbability(f64, f64),
    #[error("basis vectors are not orthonormal (deviation {0:e})")]
    NotOrthonormal(f64),
    #[error("mixing weight {0} outside [0, 1]")]
    BadWeight(f64),
}

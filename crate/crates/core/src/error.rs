//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("zero-probability branch: qubit {qubit} never measures {outcome}")]
    ZeroProbability { qubit: usize, outcome: u8 },

    #[error("state norm {norm:.3e} too small to renormalize")]
    DegenerateNorm { norm: f64 },

    #[error("invalid qubit index {index} for {n_qubits}-qubit object")]
    QubitOutOfRange { index: usize, n_qubits: usize },

    #[error("empty qubit subset not allowed")]
    EmptySubset,

    #[error("circuit width {width} exceeds limit {limit} ({context})")]
    WidthExceeded {
        width: usize,
        limit: usize,
        context: &'static str,
    },

    #[error("family {family} requires at least {min} vector qubits, got {got}")]
    FamilyTooSmall {
        family: &'static str,
        min: usize,
        got: usize,
    },

    #[error("matrix is not unitary (max deviation {dev:.3e})")]
    NotUnitary { dev: f64 },

    #[error("eigenphase {phase:.3e} indistinguishable from 0: system is singular")]
    SingularSystem { phase: f64 },

    #[error("spectrum has no constant bit eliminable by the hybrid reduction")]
    NoConstantBit,

    #[error("phase register too small: need {needed} bits, got {got}")]
    PhaseRegisterTooSmall { needed: usize, got: usize },

    #[error("circuit lacks generator metadata required by {0}")]
    MissingFamilyMeta(&'static str),

    #[error("control qubit {0} overlaps the circuit qubits")]
    ControlOverlap(usize),

    #[error("ancilla success probability {0:.3e} below threshold")]
    AncillaNeverSucceeds(f64),

    #[error("cut crosses {k} CNOTs, above branch cap {cap}")]
    BranchCapExceeded { k: usize, cap: usize },

    #[error("initial state is not a product across the requested cut")]
    NonProductInitial,

    #[error("post-filter probability mass is zero (ancilla never in the kept outcome)")]
    EmptyFilter,

    #[error("all target distributions uniform: XEB denominator vanishes")]
    DegenerateXeb,

    #[error("topology error: {0}")]
    Topology(String),

    #[error("eigensolver failed to converge after {0} sweeps")]
    EigenNoConvergence(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

//! Simulation and benchmarking toolkit for a hybrid HHL linear-system solver.
//!
//! The crate is organised around the lifecycle of one experiment:
//!
//! - [`circuit`] generates the structured unitary families (TP1/TP2/NTP) with
//!   an exactly known dyadic spectrum, and builds controlled powers of them.
//! - [`hhl`] assembles full and hybrid HHL circuits (QPE + ancilla encoding +
//!   inverse QPE) and provides the classical direct-solve oracle.
//! - [`sim`] executes circuits: dense Schrödinger backend, circuit-cutting
//!   Schrödinger–Feynman backend, shot sampling, Monte-Carlo Pauli noise, and
//!   classical-cost estimators.
//! - [`transpile`] maps logical circuits onto device coupling graphs with a
//!   SABRE-style randomized router.
//! - [`metrics`] computes fidelity metrics: XEB, digital-error-model
//!   predictions, state tomography, quantum volume and the cost/fidelity
//!   comparison table.
//! - [`qstate`] is the shared dense linear-algebra substrate (state vectors,
//!   density matrices, probability distributions).

pub mod circuit;
pub mod error;
pub mod hhl;
pub mod linalg;
pub mod metrics;
pub mod qstate;
pub mod sim;
pub mod transpile;

pub use error::{Error, Result};

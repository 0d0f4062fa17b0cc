//! Desk-scale simulator and library for photonic variational quantum
//! eigensolvers.
//!
//! The crate builds qubitized model Hamiltonians, prepares photonic-style
//! ansatz states (wave-plate circuits, interferometer meshes, UCCSD, raw
//! qudits), estimates energies from grouped Pauli or Bell measurements with
//! optional noise and error mitigation, and minimizes them with classical
//! optimizers.

pub mod cli;
pub mod driver;
pub mod linalg;
pub mod hamiltonians;
pub mod linopt;
pub mod measurement;
pub mod noise_mitigation;
pub mod optimizers;
pub mod qstate;

pub use qstate::{OperatorSum, Pauli, PauliString, QuantumState, StateVector};

//! Numerical simulation of reliable teleportation of internal states between
//! trapped ions.
//!
//! The crate is layered bottom-up:
//!
//! * [`linalg`]: dense complex matrices, kets, tensor products, partial trace,
//!   matrix exponential and trace-overlap fidelity.
//! * [`motional`]: Laguerre polynomials, sideband coupling factors, effective
//!   Rabi frequencies and thermal Fock distributions.
//! * [`dynamics`]: closed-form per-Fock-sector two-ion evolution, the full
//!   truncated effective Hamiltonian used as its oracle, the Lamb-Dicke-limit
//!   Hamiltonian and carrier rotations with Debye-Waller scaling.
//! * [`protocol`]: Bell-channel preparation, the one-pulse Bell analyzer,
//!   measurement with feed-forward correction, teleportation fidelity,
//!   entanglement teleportation and entanglement swapping.
//!
//! Frequencies are measured in units of `|Ω_k|`, the magnitude of the
//! dispersive coupling scale of the driven sideband, with `ħ = 1`.

pub mod dynamics;
pub mod error;
pub mod linalg;
pub mod motional;
pub mod protocol;

pub use error::{Error, Result};
pub use linalg::{ComplexMatrix, StateVec, C64};

//! Schrödinger propagation for static and interpolated Hamiltonians, with
//! numerical checks of time-energy uncertainty bounds on the recorded
//! trajectories.
//!
//! The layers, bottom-up:
//!
//! - [`qstate`]: dense state/operator algebra and energy moments.
//! - [`hamiltonian`]: transverse drivers, Ising problems, GUE samples and
//!   interpolation schedules.
//! - [`propagator`]: fixed-step integration and trajectory recording.
//! - [`events`]: first orthogonality and first antipodal-state detection.
//! - [`bounds`]: characteristic times, survival bounds, inequality margins.
//! - [`harness`]: verification campaigns and result aggregation.

pub mod bounds;
pub mod error;
pub mod events;
pub mod hamiltonian;
pub mod harness;
pub mod propagator;
pub mod qstate;

pub use error::{Error, Result};

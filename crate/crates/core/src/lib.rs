//! Simulation and analysis toolkit for polarization qubits transmitted
//! through a long, lossy underwater optical link.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x <= tol)` also rejects NaN

pub mod analysis;
pub mod channel;
pub mod error;
pub mod experiment;
pub(crate) mod linalg;
pub mod photonics;
pub mod qstate;
pub(crate) mod serial;
pub mod tomography;

pub use error::{Error, Result};

//! Quantum state simulation, controlled evolution and training of a pairwise
//! entanglement witness.

pub mod circuit;
pub mod dynamics;
pub mod error;
pub mod linalg;
pub mod model;
pub mod optim;
pub mod qstate;
pub mod seed;
pub mod training;

pub use error::{Error, Result};

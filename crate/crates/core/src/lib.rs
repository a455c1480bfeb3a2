//! Numerical laboratory for entire curves into a product of two elliptic
//! curves: holomorphic discs, their Nevanlinna and Ahlfors current data,
//! peaking functions, step-wise curve synthesis and disc patching.

pub mod error;
pub mod ext;
pub mod holo;
pub mod quad;
pub mod currents;
pub mod torus;
pub mod peaking;
pub mod synth;
pub mod patcher;

pub use error::{Error, Result};

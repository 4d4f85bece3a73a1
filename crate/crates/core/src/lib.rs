//! Spin-network polarization dynamics under repeated projective
//! measurements, and extraction of scalar couplings from the resulting
//! build-up curves.

pub mod approx;
pub mod cli;
pub mod dynamics;
pub mod error;
pub mod hamiltonian;
pub mod inversion;
pub mod io;
pub mod sectors;
pub mod system;

pub use error::{Error, Result};
pub use system::{presets, HamiltonianConvention, SiteLayout, SpinSystem};

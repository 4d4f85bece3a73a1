//! Exact forward dynamics: coherent evolution, the pinching channel and
//! iterated projected evolution.

mod coherent;
mod density;
mod evolve;
mod kernel;
mod population;
mod propagator;

pub use coherent::{evolve_coherent, CoherentTrajectory};
pub use density::pinch;
pub use evolve::{
    evolve_density, evolve_projected, evolve_projected_capped, propagate_populations, PolarizationTrajectory,
    ProjectionSpec, TrajectoryMeta, DEFAULT_CYCLE_CAP,
};
pub use kernel::TransferKernel;
pub use population::{initial_population, InitialSpec, PopulationState};
pub use propagator::{Propagator, SectorBasis, SectorEigen, Spectrum};

use crate::error::Result;
use crate::sectors::SectorDecomposition;
use crate::system::{HamiltonianConvention, SpinSystem};

/// Spectrum of a system under the given convention.
pub fn spectrum(system: &SpinSystem, convention: &HamiltonianConvention) -> Result<Spectrum> {
    Spectrum::new(&SectorDecomposition::from_system(system, convention))
}

/// Kernel of one evolve-and-pinch cycle of length `tau`.
pub fn transfer_kernel(system: &SpinSystem, convention: &HamiltonianConvention, tau: f64) -> Result<TransferKernel> {
    TransferKernel::from_spectrum(&spectrum(system, convention)?, tau)
}

/// Convenience: build the kernel and run `cycles` projections from `initial`.
pub fn simulate_projected(
    system: &SpinSystem,
    convention: &HamiltonianConvention,
    initial: &InitialSpec,
    tau: f64,
    cycles: usize,
    projection: &ProjectionSpec,
) -> Result<PolarizationTrajectory> {
    let kernel = transfer_kernel(system, convention, tau)?;
    evolve_projected(&kernel, &initial_population(system, initial)?, cycles, projection)
}

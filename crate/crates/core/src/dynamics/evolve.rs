use super::density::SectorDensity;
use super::kernel::TransferKernel;
use super::population::{polarizations_of, PopulationState};
use crate::error::{Error, Result};

pub const DEFAULT_CYCLE_CAP: usize = 100_000;

/// Imperfections of the projection step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionSpec {
    fidelity: f64,
    damping: f64,
}

impl ProjectionSpec {
    /// `fidelity` is the fraction of every coherence that survives a
    /// projection (0 = ideal); `damping` is a uniform decay rate (1/s) of
    /// the polarization toward the fully mixed state.
    pub fn new(fidelity: f64, damping: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&fidelity) {
            return Err(Error::InvalidProjection(format!("fidelity {fidelity} outside [0, 1]")));
        }
        if !(damping.is_finite() && damping >= 0.0) {
            return Err(Error::InvalidProjection(format!("damping {damping} must be >= 0")));
        }
        Ok(Self { fidelity, damping })
    }

    pub fn ideal() -> Self {
        Self {
            fidelity: 0.0,
            damping: 0.0,
        }
    }

    pub fn fidelity(&self) -> f64 {
        self.fidelity
    }

    pub fn damping(&self) -> f64 {
        self.damping
    }
}

impl Default for ProjectionSpec {
    fn default() -> Self {
        Self::ideal()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryMeta {
    pub tau: f64,
    pub cycles: usize,
    pub fidelity: f64,
    pub damping: f64,
    pub angular_factor: f64,
}

/// Per-site polarizations sampled at the end of every projection cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarizationTrajectory {
    pub times: Vec<f64>,
    /// `values[m][i]` is `P_i` after `m` cycles.
    pub values: Vec<Vec<f64>>,
    pub meta: TrajectoryMeta,
}

impl PolarizationTrajectory {
    pub fn cycles(&self) -> usize {
        self.values.len() - 1
    }

    pub fn n(&self) -> usize {
        self.values[0].len()
    }

    pub fn site(&self, i: usize) -> Vec<f64> {
        self.values.iter().map(|v| v[i]).collect()
    }

    pub fn last(&self) -> &[f64] {
        self.values.last().expect("trajectory holds at least the initial sample")
    }

    pub fn totals(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.iter().sum()).collect()
    }

    /// Mean polarization of each group at every cycle.
    pub fn group_means(&self, groups: &[Vec<usize>]) -> Vec<Vec<f64>> {
        self.values
            .iter()
            .map(|v| groups.iter().map(|g| g.iter().map(|&i| v[i]).sum::<f64>() / g.len() as f64).collect())
            .collect()
    }
}

fn check_cycles(cycles: usize, cap: usize) -> Result<()> {
    if cycles > cap {
        Err(Error::CycleCap { requested: cycles, cap })
    } else {
        Ok(())
    }
}

/// Iterates evolve-then-project `cycles` times. Ideal projections use the
/// population kernel; leaky ones cycle the density matrix.
pub fn evolve_projected(
    kernel: &TransferKernel,
    initial: &PopulationState,
    cycles: usize,
    projection: &ProjectionSpec,
) -> Result<PolarizationTrajectory> {
    evolve_projected_capped(kernel, initial, cycles, projection, DEFAULT_CYCLE_CAP)
}

pub fn evolve_projected_capped(
    kernel: &TransferKernel,
    initial: &PopulationState,
    cycles: usize,
    projection: &ProjectionSpec,
    cap: usize,
) -> Result<PolarizationTrajectory> {
    check_cycles(cycles, cap)?;
    check_state(kernel, initial)?;
    if projection.fidelity() > 0.0 {
        return evolve_density(kernel, initial, cycles, projection);
    }
    let n = kernel.n();
    let dim = kernel.basis().dim();
    let factor = (-projection.damping() * kernel.tau()).exp();
    let mixed = 1.0 / dim as f64;
    let mut pops = initial.populations().to_vec();
    let mut next = vec![0.0; dim];
    let mut values = Vec::with_capacity(cycles + 1);
    values.push(initial.polarizations());
    for _ in 0..cycles {
        kernel.apply_into(&pops, &mut next);
        std::mem::swap(&mut pops, &mut next);
        if factor != 1.0 {
            for p in pops.iter_mut() {
                *p = mixed + factor * (*p - mixed);
            }
        }
        values.push(polarizations_of(n, &pops));
    }
    Ok(trajectory(kernel, cycles, projection, values))
}

/// Density-matrix cycling regardless of fidelity; the reference path for
/// the population kernel.
pub fn evolve_density(
    kernel: &TransferKernel,
    initial: &PopulationState,
    cycles: usize,
    projection: &ProjectionSpec,
) -> Result<PolarizationTrajectory> {
    check_cycles(cycles, DEFAULT_CYCLE_CAP)?;
    check_state(kernel, initial)?;
    let n = kernel.n();
    let dim = kernel.basis().dim();
    let factor = (-projection.damping() * kernel.tau()).exp();
    let mut rho = SectorDensity::from_populations(kernel, initial.populations());
    let mut values = Vec::with_capacity(cycles + 1);
    values.push(initial.polarizations());
    for _ in 0..cycles {
        rho.cycle(kernel, projection.fidelity());
        if factor != 1.0 {
            rho.damp(factor, dim);
        }
        values.push(polarizations_of(n, &rho.populations(kernel)));
    }
    Ok(trajectory(kernel, cycles, projection, values))
}

/// Populations after `cycles` ideal projections (no damping).
pub fn propagate_populations(kernel: &TransferKernel, initial: &PopulationState, cycles: usize) -> Result<PopulationState> {
    check_state(kernel, initial)?;
    let mut pops = initial.populations().to_vec();
    let mut next = vec![0.0; pops.len()];
    for _ in 0..cycles {
        kernel.apply_into(&pops, &mut next);
        std::mem::swap(&mut pops, &mut next);
    }
    Ok(PopulationState::from_raw(kernel.n(), pops))
}

fn check_state(kernel: &TransferKernel, initial: &PopulationState) -> Result<()> {
    if initial.n() != kernel.n() {
        return Err(Error::InvalidSystem(format!(
            "initial state has {} spins, kernel has {}",
            initial.n(),
            kernel.n()
        )));
    }
    Ok(())
}

fn trajectory(
    kernel: &TransferKernel,
    cycles: usize,
    projection: &ProjectionSpec,
    values: Vec<Vec<f64>>,
) -> PolarizationTrajectory {
    let tau = kernel.tau();
    PolarizationTrajectory {
        times: (0..=cycles).map(|m| m as f64 * tau).collect(),
        values,
        meta: TrajectoryMeta {
            tau,
            cycles,
            fidelity: projection.fidelity(),
            damping: projection.damping(),
            angular_factor: kernel.angular_factor(),
        },
    }
}

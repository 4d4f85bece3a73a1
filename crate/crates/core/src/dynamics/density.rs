//! Density-matrix side of a projection cycle.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::kernel::TransferKernel;
use crate::error::{Error, Result};

const HERMITIAN_TOLERANCE: f64 = 1e-9;

/// Multiplies every off-diagonal element by `fidelity` (0 is the ideal
/// pinching channel, 1 leaves the state untouched).
pub fn pinch(rho: &DMatrix<Complex64>, fidelity: f64) -> Result<DMatrix<Complex64>> {
    if !(0.0..=1.0).contains(&fidelity) {
        return Err(Error::InvalidProjection(format!("fidelity {fidelity} outside [0, 1]")));
    }
    if !rho.is_square() {
        return Err(Error::InvalidSystem("density matrix is not square".into()));
    }
    let deviation = (rho - rho.adjoint()).iter().fold(0.0f64, |m, z| m.max(z.norm()));
    if deviation > HERMITIAN_TOLERANCE {
        return Err(Error::NonHermitian(deviation));
    }
    let mut out = rho.clone();
    pinch_in_place(&mut out, fidelity);
    Ok(out)
}

pub(crate) fn pinch_in_place(rho: &mut DMatrix<Complex64>, fidelity: f64) {
    let dim = rho.nrows();
    for c in 0..dim {
        for r in 0..dim {
            if r != c {
                rho[(r, c)] *= fidelity;
            }
        }
    }
}

/// Block-diagonal density matrix, one block per Mz sector.
///
/// A state that starts diagonal never develops coherences between
/// sectors, since U preserves total Mz; cycling the blocks is exact.
#[derive(Debug, Clone)]
pub(crate) struct SectorDensity {
    blocks: Vec<DMatrix<Complex64>>,
}

impl SectorDensity {
    pub fn from_populations(kernel: &TransferKernel, populations: &[f64]) -> Self {
        let blocks = kernel
            .basis()
            .states
            .iter()
            .map(|states| {
                DMatrix::from_fn(states.len(), states.len(), |r, c| {
                    if r == c {
                        Complex64::new(populations[states[r]], 0.0)
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                })
            })
            .collect();
        Self { blocks }
    }

    /// rho -> pinch(U rho U^dagger, fidelity)
    pub fn cycle(&mut self, kernel: &TransferKernel, fidelity: f64) {
        for (rho, u) in self.blocks.iter_mut().zip(kernel.propagator().blocks()) {
            let mut next = u * &*rho * u.adjoint();
            pinch_in_place(&mut next, fidelity);
            *rho = next;
        }
    }

    /// rho -> 1/d + factor (rho - 1/d)
    pub fn damp(&mut self, factor: f64, dim: usize) {
        let mixed = 1.0 / dim as f64;
        for rho in &mut self.blocks {
            for c in 0..rho.ncols() {
                for r in 0..rho.nrows() {
                    if r == c {
                        rho[(r, c)] = Complex64::new(mixed, 0.0) + (rho[(r, c)] - mixed) * factor;
                    } else {
                        rho[(r, c)] *= factor;
                    }
                }
            }
        }
    }

    pub fn populations(&self, kernel: &TransferKernel) -> Vec<f64> {
        let mut out = vec![0.0; kernel.basis().dim()];
        for (states, rho) in kernel.basis().states.iter().zip(&self.blocks) {
            for (r, &a) in states.iter().enumerate() {
                out[a] = rho[(r, r)].re;
            }
        }
        out
    }
}

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::propagator::Spectrum;
use crate::error::{Error, Result};
use crate::hamiltonian::{check_dense, operator_on, Axis};
use crate::sectors::SectorDecomposition;
use crate::system::{HamiltonianConvention, SpinSystem};

/// Free evolution without projections, sampled on an arbitrary grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CoherentTrajectory {
    pub times: Vec<f64>,
    pub observables: Vec<(usize, Axis)>,
    /// `values[t][k]`: expectation of observable `k` at `times[t]`,
    /// normalized by `Tr(I_init^2)`.
    pub values: Vec<Vec<f64>>,
}

impl CoherentTrajectory {
    pub fn series(&self, k: usize) -> Vec<f64> {
        self.values.iter().map(|v| v[k]).collect()
    }
}

/// Starts from a deviation density matrix proportional to one single-spin
/// operator and tracks `Tr(O U rho0 U^dagger) / Tr(rho0^2)`.
pub fn evolve_coherent(
    system: &SpinSystem,
    convention: &HamiltonianConvention,
    initial: (usize, Axis),
    times: &[f64],
    observables: &[(usize, Axis)],
) -> Result<CoherentTrajectory> {
    if times.is_empty() {
        return Err(Error::EmptyTimeGrid);
    }
    if let Some(t) = times.iter().find(|t| !t.is_finite()) {
        return Err(Error::InvalidTime(format!("time {t}")));
    }
    let n = system.n();
    check_dense(n)?;
    let spectrum = Spectrum::new(&SectorDecomposition::from_system(system, convention))?;
    let (energies, v) = spectrum.full_eigenbasis();
    let vc = v.map(|x| Complex64::new(x, 0.0));
    let to_eigen = |op: &DMatrix<Complex64>| vc.transpose() * op * &vc;

    let rho0 = operator_on(n, initial.0, initial.1)?;
    let norm = (&rho0 * &rho0).trace().re;
    let rho_e = to_eigen(&rho0);
    let dim = energies.len();

    // weights[k][l] = O~_lk rho~_kl; <O(t)> = sum_kl w_kl exp(-i (E_k - E_l) t)
    let weights = observables
        .iter()
        .map(|&(site, axis)| {
            let o_e = to_eigen(&operator_on(n, site, axis)?);
            Ok(DMatrix::from_fn(dim, dim, |k, l| o_e[(l, k)] * rho_e[(k, l)]))
        })
        .collect::<Result<Vec<_>>>()?;

    let values = times
        .iter()
        .map(|&t| {
            let phase: Vec<Complex64> = energies.iter().map(|&e| Complex64::from_polar(1.0, -e * t)).collect();
            weights
                .iter()
                .map(|w| {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for k in 0..dim {
                        let mut row = Complex64::new(0.0, 0.0);
                        for l in 0..dim {
                            row += w[(k, l)] * phase[l].conj();
                        }
                        acc += row * phase[k];
                    }
                    acc.re / norm
                })
                .collect()
        })
        .collect();

    Ok(CoherentTrajectory {
        times: times.to_vec(),
        observables: observables.to_vec(),
        values,
    })
}

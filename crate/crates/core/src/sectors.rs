//! Block decomposition of H over total-Mz sectors.
//!
//! The isotropic Hamiltonian conserves `sum_i I_iz`, so grouping basis
//! states by the number of flipped spins block-diagonalizes it exactly.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::hamiltonian::add_exchange;
use crate::system::{HamiltonianConvention, SpinSystem};

/// One total-Mz sector: the basis states with `excitations` spins down.
#[derive(Debug, Clone)]
pub struct Sector {
    pub excitations: usize,
    pub states: Vec<usize>,
    /// Real symmetric block of H in rad/s, rows ordered as `states`.
    pub block: DMatrix<f64>,
}

impl Sector {
    /// Total Mz in units of 1/2.
    pub fn mz_half_units(&self, n: usize) -> i64 {
        n as i64 - 2 * self.excitations as i64
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }
}

#[derive(Debug, Clone)]
pub struct SectorDecomposition {
    n: usize,
    angular_factor: f64,
    sectors: Vec<Sector>,
    /// `(sector, row)` for every global basis index.
    position: Vec<(usize, usize)>,
}

fn sector_states(n: usize) -> (Vec<Vec<usize>>, Vec<(usize, usize)>) {
    let dim = 1usize << n;
    let mut states = vec![Vec::new(); n + 1];
    let mut position = vec![(0, 0); dim];
    for a in 0..dim {
        let k = a.count_ones() as usize;
        position[a] = (k, states[k].len());
        states[k].push(a);
    }
    (states, position)
}

impl SectorDecomposition {
    /// Builds the blocks directly from the couplings without ever forming
    /// the full matrix.
    pub fn from_system(system: &SpinSystem, convention: &HamiltonianConvention) -> Self {
        let n = system.n();
        let (states, position) = sector_states(n);
        let f = convention.angular_factor();
        let pairs = system.coupled_pairs();
        let sectors = states
            .into_iter()
            .enumerate()
            .map(|(k, states)| {
                let mut block = DMatrix::zeros(states.len(), states.len());
                for &(i, j) in &pairs {
                    add_exchange(&mut block, &states, |a| position[a].1, i, j, f * system.coupling(i, j));
                }
                Sector {
                    excitations: k,
                    states,
                    block,
                }
            })
            .collect();
        Self {
            n,
            angular_factor: f,
            sectors,
            position,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn angular_factor(&self) -> f64 {
        self.angular_factor
    }

    pub fn sectors(&self) -> &[Sector] {
        &self.sectors
    }

    pub fn dim(&self) -> usize {
        1 << self.n
    }

    pub fn position(&self, state: usize) -> (usize, usize) {
        self.position[state]
    }

    /// Places the blocks back into a full 2^n x 2^n matrix.
    pub fn reassemble(&self) -> DMatrix<f64> {
        let dim = self.dim();
        let mut h = DMatrix::zeros(dim, dim);
        for s in &self.sectors {
            for (r, &a) in s.states.iter().enumerate() {
                for (c, &b) in s.states.iter().enumerate() {
                    h[(a, b)] = s.block[(r, c)];
                }
            }
        }
        h
    }
}

/// Splits a full Hamiltonian into its Mz blocks. Any nonzero entry between
/// different sectors is reported as an error.
pub fn sector_decompose(system: &SpinSystem, h: &DMatrix<f64>) -> Result<SectorDecomposition> {
    sector_decompose_with(system, h, &HamiltonianConvention::default())
}

pub fn sector_decompose_with(
    system: &SpinSystem,
    h: &DMatrix<f64>,
    convention: &HamiltonianConvention,
) -> Result<SectorDecomposition> {
    let n = system.n();
    let dim = 1usize << n;
    if h.nrows() != dim || h.ncols() != dim {
        return Err(Error::InvalidSystem(format!(
            "hamiltonian is {}x{}, expected {dim}x{dim}",
            h.nrows(),
            h.ncols()
        )));
    }
    let (states, position) = sector_states(n);
    for a in 0..dim {
        for b in 0..dim {
            if position[a].0 != position[b].0 && h[(a, b)] != 0.0 {
                return Err(Error::SectorLeak {
                    row: a,
                    col: b,
                    value: h[(a, b)],
                });
            }
        }
    }
    let sectors = states
        .into_iter()
        .enumerate()
        .map(|(k, states)| {
            let block = DMatrix::from_fn(states.len(), states.len(), |r, c| h[(states[r], states[c])]);
            Sector {
                excitations: k,
                states,
                block,
            }
        })
        .collect();
    Ok(SectorDecomposition {
        n,
        angular_factor: convention.angular_factor(),
        sectors,
        position,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::build_hamiltonian;
    use crate::system::presets;

    #[test]
    fn five_spin_sector_sizes() {
        let d = SectorDecomposition::from_system(&presets::pyridine(), &HamiltonianConvention::default());
        let sizes: Vec<usize> = d.sectors().iter().map(Sector::dim).collect();
        assert_eq!(sizes, vec![1, 5, 10, 10, 5, 1]);
        let mz: Vec<i64> = d.sectors().iter().map(|s| s.mz_half_units(5)).collect();
        assert_eq!(mz, vec![5, 3, 1, -1, -3, -5]);
    }

    #[test]
    fn two_spin_zero_sector() {
        let d = SectorDecomposition::from_system(&presets::ab(), &HamiltonianConvention::default());
        // |alpha beta> = 0b10 (spin 1 down), |beta alpha> = 0b01
        assert_eq!(d.sectors()[1].states, vec![0b01, 0b10]);
        assert_eq!(d.sectors()[1].dim(), 2);
    }

    #[test]
    fn direct_blocks_match_full_matrix() {
        let s = presets::pyridine();
        let conv = HamiltonianConvention::default();
        let h = build_hamiltonian(&s, &conv).unwrap();
        let direct = SectorDecomposition::from_system(&s, &conv);
        assert_eq!(direct.reassemble(), h);
        let split = sector_decompose(&s, &h).unwrap();
        for (a, b) in split.sectors().iter().zip(direct.sectors()) {
            assert_eq!(a.block, b.block);
        }
    }

    #[test]
    fn corrupted_hamiltonian_rejected() {
        let s = presets::ab();
        let mut h = build_hamiltonian(&s, &HamiltonianConvention::default()).unwrap();
        h[(0, 1)] = 1e-300;
        assert!(matches!(sector_decompose(&s, &h), Err(Error::SectorLeak { row: 0, col: 1, .. })));
    }
}

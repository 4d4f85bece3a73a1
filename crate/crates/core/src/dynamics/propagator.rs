use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::sectors::SectorDecomposition;

/// Eigendecomposition of one Mz block, `H_s = V diag(values) V^T`.
#[derive(Debug, Clone)]
pub struct SectorEigen {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

/// Basis states per sector, shared between spectra, propagators and kernels.
#[derive(Debug, Clone)]
pub struct SectorBasis {
    pub n: usize,
    pub states: Vec<Vec<usize>>,
}

impl SectorBasis {
    pub fn dim(&self) -> usize {
        1 << self.n
    }
}

/// Per-sector eigendecomposition of H. Computed once and reused for any
/// evolution time.
#[derive(Debug, Clone)]
pub struct Spectrum {
    basis: Arc<SectorBasis>,
    angular_factor: f64,
    sectors: Vec<SectorEigen>,
}

impl Spectrum {
    pub fn new(decomposition: &SectorDecomposition) -> Result<Self> {
        let sectors = decomposition
            .sectors()
            .par_iter()
            .map(|s| {
                let dim = s.dim();
                if s.block.iter().any(|x| !x.is_finite()) {
                    return Err(Error::Eigen {
                        excitations: s.excitations,
                    });
                }
                SymmetricEigen::try_new(s.block.clone(), f64::EPSILON, 1000 * dim.max(1))
                    .map(|e| SectorEigen {
                        values: e.eigenvalues,
                        vectors: e.eigenvectors,
                    })
                    .ok_or(Error::Eigen {
                        excitations: s.excitations,
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        let basis = SectorBasis {
            n: decomposition.n(),
            states: decomposition.sectors().iter().map(|s| s.states.clone()).collect(),
        };
        Ok(Self {
            basis: Arc::new(basis),
            angular_factor: decomposition.angular_factor(),
            sectors,
        })
    }

    pub fn n(&self) -> usize {
        self.basis.n
    }

    pub fn basis(&self) -> &Arc<SectorBasis> {
        &self.basis
    }

    pub fn angular_factor(&self) -> f64 {
        self.angular_factor
    }

    pub fn sectors(&self) -> &[SectorEigen] {
        &self.sectors
    }

    /// Block-diagonal `U = exp(-i H tau)`. Negative `tau` gives the
    /// time-reversed propagator.
    pub fn propagator(&self, tau: f64) -> Result<Propagator> {
        if !tau.is_finite() {
            return Err(Error::InvalidTime(format!("tau = {tau}")));
        }
        let blocks = self
            .sectors
            .par_iter()
            .map(|e| {
                if tau == 0.0 {
                    let d = e.values.len();
                    return DMatrix::<Complex64>::identity(d, d);
                }
                let cos = e.values.map(|w| (w * tau).cos());
                let sin = e.values.map(|w| -(w * tau).sin());
                let re = scale_columns(&e.vectors, &cos) * e.vectors.transpose();
                let im = scale_columns(&e.vectors, &sin) * e.vectors.transpose();
                DMatrix::from_fn(re.nrows(), re.ncols(), |r, c| Complex64::new(re[(r, c)], im[(r, c)]))
            })
            .collect();
        Ok(Propagator {
            basis: Arc::clone(&self.basis),
            angular_factor: self.angular_factor,
            tau,
            blocks,
        })
    }

    /// Full eigenvector matrix (columns ordered sector by sector) and the
    /// matching eigenvalues.
    pub fn full_eigenbasis(&self) -> (DVector<f64>, DMatrix<f64>) {
        let dim = self.basis.dim();
        let mut values = DVector::zeros(dim);
        let mut vectors = DMatrix::zeros(dim, dim);
        let mut col = 0;
        for (states, e) in self.basis.states.iter().zip(&self.sectors) {
            for k in 0..states.len() {
                values[col + k] = e.values[k];
                for (r, &a) in states.iter().enumerate() {
                    vectors[(a, col + k)] = e.vectors[(r, k)];
                }
            }
            col += states.len();
        }
        (values, vectors)
    }
}

fn scale_columns(m: &DMatrix<f64>, factors: &DVector<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for (mut col, f) in out.column_iter_mut().zip(factors.iter()) {
        col *= *f;
    }
    out
}

/// Per-sector unitary blocks of `exp(-i H tau)`.
#[derive(Debug, Clone)]
pub struct Propagator {
    basis: Arc<SectorBasis>,
    angular_factor: f64,
    tau: f64,
    blocks: Vec<DMatrix<Complex64>>,
}

impl Propagator {
    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn basis(&self) -> &Arc<SectorBasis> {
        &self.basis
    }

    pub fn angular_factor(&self) -> f64 {
        self.angular_factor
    }

    pub fn blocks(&self) -> &[DMatrix<Complex64>] {
        &self.blocks
    }

    /// Largest `|U U^dagger - 1|` entry over all blocks.
    pub fn unitarity_error(&self) -> f64 {
        self.blocks
            .iter()
            .map(|u| {
                let d = u * u.adjoint() - DMatrix::identity(u.nrows(), u.ncols());
                d.iter().fold(0.0f64, |m, z| m.max(z.norm()))
            })
            .fold(0.0, f64::max)
    }

    /// Embeds the blocks into the full 2^n x 2^n matrix.
    pub fn to_full(&self) -> DMatrix<Complex64> {
        let dim = self.basis.dim();
        let mut u = DMatrix::zeros(dim, dim);
        for (states, block) in self.basis.states.iter().zip(&self.blocks) {
            for (r, &a) in states.iter().enumerate() {
                for (c, &b) in states.iter().enumerate() {
                    u[(a, b)] = block[(r, c)];
                }
            }
        }
        u
    }
}

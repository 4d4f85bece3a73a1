use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::propagator::{Propagator, SectorBasis, Spectrum};
use crate::error::{Error, Result};

/// Population map of one evolve-then-pinch cycle, `T_ab = |U_ab|^2`,
/// stored per Mz sector.
///
/// Keeps the propagator it was built from so that leaky projections can
/// fall back to density-matrix cycling.
#[derive(Debug, Clone)]
pub struct TransferKernel {
    propagator: Propagator,
    blocks: Vec<DMatrix<f64>>,
}

impl TransferKernel {
    pub fn from_propagator(propagator: Propagator) -> Result<Self> {
        if propagator.tau() < 0.0 {
            return Err(Error::InvalidTime(format!(
                "cycle time must be non-negative, got {}",
                propagator.tau()
            )));
        }
        let blocks = propagator
            .blocks()
            .par_iter()
            .map(|u| u.map(|z| z.norm_sqr()))
            .collect();
        Ok(Self { propagator, blocks })
    }

    pub fn from_spectrum(spectrum: &Spectrum, tau: f64) -> Result<Self> {
        if tau < 0.0 {
            return Err(Error::InvalidTime(format!("cycle time must be non-negative, got {tau}")));
        }
        Self::from_propagator(spectrum.propagator(tau)?)
    }

    pub fn tau(&self) -> f64 {
        self.propagator.tau()
    }

    pub fn n(&self) -> usize {
        self.basis().n
    }

    pub fn angular_factor(&self) -> f64 {
        self.propagator.angular_factor()
    }

    pub fn basis(&self) -> &Arc<SectorBasis> {
        self.propagator.basis()
    }

    pub fn propagator(&self) -> &Propagator {
        &self.propagator
    }

    pub fn blocks(&self) -> &[DMatrix<f64>] {
        &self.blocks
    }

    /// Largest deviation of any row or column sum from 1.
    pub fn stochasticity_error(&self) -> f64 {
        self.blocks
            .iter()
            .flat_map(|b| {
                let rows = b.column_sum().map(|s| (s - 1.0).abs()).amax();
                let cols = b.row_sum().map(|s| (s - 1.0).abs()).amax();
                [rows, cols]
            })
            .fold(0.0, f64::max)
    }

    /// `out = T * populations`.
    pub fn apply_into(&self, populations: &[f64], out: &mut [f64]) {
        let mut buf = Vec::new();
        for (states, block) in self.basis().states.iter().zip(&self.blocks) {
            buf.clear();
            buf.extend(states.iter().map(|&a| populations[a]));
            let x = DVector::from_column_slice(&buf);
            let y = block * x;
            for (&a, v) in states.iter().zip(y.iter()) {
                out[a] = *v;
            }
        }
    }

    pub fn apply(&self, populations: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; populations.len()];
        self.apply_into(populations, &mut out);
        out
    }

    /// Full 2^n x 2^n kernel.
    pub fn to_full(&self) -> DMatrix<f64> {
        let dim = self.basis().dim();
        let mut t = DMatrix::zeros(dim, dim);
        for (states, block) in self.basis().states.iter().zip(&self.blocks) {
            for (r, &a) in states.iter().enumerate() {
                for (c, &b) in states.iter().enumerate() {
                    t[(a, b)] = block[(r, c)];
                }
            }
        }
        t
    }
}

//! Closed-form and small-tau models of projected transfer.
//!
//! Under `H = f J I_1 . I_2` the flip-flop frequency is `f J`, so one
//! evolve-and-pinch cycle moves `(1 - cos(f J tau))/2` of the polarization.
//! Expanding for small `f J tau` gives the per-cycle coupling
//! `p_ij = (f J_ij tau / 2)^2`, i.e. `(pi J tau)^2` for `f = 2 pi`.

use nalgebra::DMatrix;

use crate::dynamics::{PopulationState, TransferKernel};
use crate::error::{Error, Result};
use crate::system::{HamiltonianConvention, SpinSystem};

/// Above this `max |J| tau` the small-tau model is flagged as marginal.
pub const SMALL_TAU_WARN: f64 = 0.2;
/// Above this `max |J| tau` the small-tau model is refused.
pub const SMALL_TAU_REFUSE: f64 = 0.5;

/// `(stay, transfer)` fractions of one projected two-spin cycle.
pub fn two_spin_transfer(j_hz: f64, tau: f64, convention: &HamiltonianConvention) -> (f64, f64) {
    let c = (convention.angular_factor() * j_hz * tau).cos();
    ((1.0 + c) / 2.0, (1.0 - c) / 2.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Valid,
    /// Between the warning and refusal thresholds.
    Marginal,
}

/// Per-cycle site-level polarization transfer matrix.
#[derive(Debug, Clone)]
pub struct SmallTauModel {
    pub matrix: DMatrix<f64>,
    pub tau: f64,
    pub max_jtau: f64,
    pub regime: Regime,
}

impl SmallTauModel {
    /// Site polarizations after `cycles` applications.
    pub fn propagate(&self, initial: &[f64], cycles: usize) -> Vec<f64> {
        let mut p = nalgebra::DVector::from_column_slice(initial);
        for _ in 0..cycles {
            p = &self.matrix * p;
        }
        p.iter().copied().collect()
    }
}

pub fn small_tau_kernel(system: &SpinSystem, tau: f64, convention: &HamiltonianConvention) -> Result<SmallTauModel> {
    if !(tau.is_finite() && tau >= 0.0) {
        return Err(Error::InvalidTime(format!("tau = {tau}")));
    }
    let max_jtau = system.max_abs_coupling() * tau;
    if max_jtau > SMALL_TAU_REFUSE {
        return Err(Error::OutsideSmallTau {
            jtau: max_jtau,
            limit: SMALL_TAU_REFUSE,
        });
    }
    let c = convention.small_tau_constant() * tau;
    let n = system.n();
    let mut matrix = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else {
            (c * system.coupling(i, j)).powi(2)
        }
    });
    for i in 0..n {
        matrix[(i, i)] = 1.0 - matrix.row(i).sum();
    }
    Ok(SmallTauModel {
        matrix,
        tau,
        max_jtau,
        regime: if max_jtau > SMALL_TAU_WARN {
            Regime::Marginal
        } else {
            Regime::Valid
        },
    })
}

/// Column `i` holds the site polarizations after one exact cycle starting
/// from unit polarization on site `i` alone.
pub fn exact_site_kernel(kernel: &TransferKernel) -> Result<DMatrix<f64>> {
    let n = kernel.n();
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut p = vec![0.0; n];
        p[i] = 1.0;
        let state = PopulationState::from_polarizations(&p)?;
        let next = PopulationState::new(kernel.apply(state.populations()))?;
        for (r, v) in next.polarizations().into_iter().enumerate() {
            out[(r, i)] = v;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumPrediction {
    /// Common asymptote `sum_i P_i(0) / n`.
    pub asymptote: f64,
    pub sites: Vec<f64>,
    /// Mean asymptotic polarization per equivalence group.
    pub groups: Vec<f64>,
}

pub fn equilibrium_prediction(initial: &[f64], groups: &[Vec<usize>]) -> EquilibriumPrediction {
    let n = initial.len();
    let asymptote = if n == 0 { 0.0 } else { initial.iter().sum::<f64>() / n as f64 };
    EquilibriumPrediction {
        asymptote,
        sites: vec![asymptote; n],
        groups: vec![asymptote; groups.len()],
    }
}

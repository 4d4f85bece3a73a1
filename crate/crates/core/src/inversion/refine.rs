//! Damped least-squares refinement of couplings against the exact
//! projected forward model.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::dataset::BuildUpDataset;
use super::estimate::{expand_pairs, CouplingEstimate, Diagnostics, Method, PairEstimate};
use crate::dynamics::{evolve_projected, PopulationState, ProjectionSpec, Spectrum, TransferKernel};
use crate::error::{Error, Result};
use crate::sectors::SectorDecomposition;
use crate::system::SpinSystem;

/// Residual RMS treated as an exact fit.
const ROUNDOFF_RMS: f64 = 1e-13;

#[derive(Debug, Clone)]
pub struct RefineOptions {
    pub max_iterations: usize,
    /// Stop when an accepted step lowers the cost by less than this fraction.
    pub cost_tolerance: f64,
    pub step_tolerance: f64,
    pub fit_damping: bool,
    /// Starting damping rate (1/s) when the initial estimate carries none.
    pub initial_damping: f64,
    /// Couplings inside equivalence groups, held fixed (zero when absent).
    pub intra_group: Option<DMatrix<f64>>,
}

impl Default for RefineOptions {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            cost_tolerance: 1e-12,
            step_tolerance: 1e-10,
            fit_damping: false,
            initial_damping: 0.0,
            intra_group: None,
        }
    }
}

/// Forward model of a dataset for a coupling matrix and damping rate.
/// Returns predicted channels `[experiment][cycle][channel]`.
pub(crate) fn forward(dataset: &BuildUpDataset, couplings: &DMatrix<f64>, damping: f64) -> Result<Vec<Vec<Vec<f64>>>> {
    let layout = dataset.layout();
    let system = SpinSystem::from_matrix(layout.clone(), couplings.clone())?;
    let spectrum = Spectrum::new(&SectorDecomposition::from_system(&system, dataset.convention()))?;
    let projection = ProjectionSpec::new(0.0, damping)?;
    let mut kernels: Vec<TransferKernel> = Vec::new();
    dataset
        .experiments()
        .iter()
        .map(|e| {
            let kernel = match kernels.iter().position(|k| k.tau() == e.tau) {
                Some(i) => &kernels[i],
                None => {
                    kernels.push(TransferKernel::from_spectrum(&spectrum, e.tau)?);
                    kernels.last().unwrap()
                }
            };
            let init = PopulationState::from_polarizations(&e.initial)?;
            let traj = evolve_projected(kernel, &init, e.cycles(), &projection)?;
            Ok(traj.values.iter().map(|v| e.channels_of(layout, v)).collect())
        })
        .collect()
}

pub(crate) fn residual_vector(dataset: &BuildUpDataset, predicted: &[Vec<Vec<f64>>]) -> Vec<f64> {
    let mut out = Vec::new();
    for (e, pred) in dataset.experiments().iter().zip(predicted) {
        for (obs, p) in e.signals.rows().iter().zip(pred) {
            out.extend(obs.iter().zip(p).map(|(o, q)| q - o));
        }
    }
    out
}

struct Problem<'a> {
    dataset: &'a BuildUpDataset,
    pairs: Vec<(usize, usize)>,
    fit_damping: bool,
    fixed_damping: f64,
    intra: Option<&'a DMatrix<f64>>,
    /// Largest identifiable coupling, `1 / (2 tau_max)`.
    upper: f64,
}

impl Problem<'_> {
    /// Coupling parameters enter as `J^2`, which keeps the sensitivity
    /// finite at `J = 0`.
    fn split(&self, theta: &[f64]) -> (DMatrix<f64>, f64) {
        let k = self.pairs.len();
        let values: Vec<_> = self.pairs.iter().copied().zip(theta[..k].iter().map(|s| s.sqrt())).collect();
        let couplings = expand_pairs(self.dataset.layout(), &values, self.intra);
        let damping = if self.fit_damping { theta[k] } else { self.fixed_damping };
        (couplings, damping)
    }

    fn clamp(&self, i: usize, v: f64) -> f64 {
        if i < self.pairs.len() {
            v.clamp(0.0, self.upper * self.upper)
        } else {
            v.max(0.0)
        }
    }

    fn residuals(&self, theta: &[f64]) -> Result<DVector<f64>> {
        let (couplings, damping) = self.split(theta);
        let predicted = forward(self.dataset, &couplings, damping)?;
        Ok(DVector::from_vec(residual_vector(self.dataset, &predicted)))
    }

    /// Finite-difference Jacobian; central differences except next to the
    /// non-negativity bound.
    fn jacobian(&self, theta: &[f64], r0: &DVector<f64>) -> Result<DMatrix<f64>> {
        let columns = (0..theta.len())
            .into_par_iter()
            .map(|j| {
                let h = 1e-6 * theta[j].abs().max(1.0);
                let mut up = theta.to_vec();
                up[j] += h;
                let ru = self.residuals(&up)?;
                if theta[j] >= h && (j >= self.pairs.len() || theta[j] + h <= self.upper * self.upper) {
                    let mut down = theta.to_vec();
                    down[j] -= h;
                    let rd = self.residuals(&down)?;
                    Ok((ru - rd) / (2.0 * h))
                } else {
                    Ok((ru - r0) / h)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(DMatrix::from_columns(&columns))
    }
}

/// Minimizes the squared misfit between every observed channel and the
/// exact forward simulation over the group-pair couplings (and optionally
/// the damping rate). Each group-pair parameter sets all of its member-pair
/// couplings. Couplings are confined to `[0, 1 / (2 tau_max)]`; beyond
/// that the projected data alias.
///
/// Reaching the iteration cap is not an error: the best point found is
/// returned with `diagnostics.converged == false`.
pub fn refine_fit(dataset: &BuildUpDataset, initial: &CouplingEstimate, options: &RefineOptions) -> Result<CouplingEstimate> {
    if initial.layout != *dataset.layout() {
        return Err(Error::InvalidDataset("estimate and dataset use different site layouts".into()));
    }
    if initial.pairs.is_empty() {
        return Err(Error::InvalidDataset("initial estimate has no pairs".into()));
    }
    let problem = Problem {
        dataset,
        pairs: initial.pairs.iter().map(|p| p.groups).collect(),
        fit_damping: options.fit_damping,
        fixed_damping: initial.damping.map_or(options.initial_damping, |d| d.0),
        intra: options.intra_group.as_ref(),
        upper: 0.5 / dataset.experiments().iter().map(|e| e.tau).fold(0.0, f64::max),
    };
    let mut theta: Vec<f64> = initial.pairs.iter().map(|p| p.value.abs().min(problem.upper).powi(2)).collect();
    if options.fit_damping {
        theta.push(initial.damping.map_or(options.initial_damping, |d| d.0).max(0.0));
    }
    let p = theta.len();

    let mut r = problem.residuals(&theta)?;
    let mut cost = r.norm_squared();
    let mut mu = 1e-3;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < options.max_iterations {
        iterations += 1;
        if cost <= ROUNDOFF_RMS * ROUNDOFF_RMS * r.len() as f64 {
            converged = true;
            break;
        }
        let jac = problem.jacobian(&theta, &r)?;
        let jtj = jac.transpose() * &jac;
        let grad = jac.transpose() * &r;
        let mut accepted = false;
        for _ in 0..30 {
            let mut damped = jtj.clone();
            for i in 0..p {
                damped[(i, i)] += mu * jtj[(i, i)].max(1e-12);
            }
            let Some(step) = damped.cholesky().map(|c| c.solve(&(-&grad))) else {
                mu *= 10.0;
                continue;
            };
            let trial: Vec<f64> = theta
                .iter()
                .zip(step.iter())
                .enumerate()
                .map(|(i, (t, s))| problem.clamp(i, t + s))
                .collect();
            let rt = problem.residuals(&trial)?;
            let trial_cost = rt.norm_squared();
            if trial_cost < cost {
                let moved = trial.iter().zip(&theta).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                let size = theta.iter().map(|t| t * t).sum::<f64>().sqrt();
                let gain = (cost - trial_cost) / cost;
                theta = trial;
                r = rt;
                cost = trial_cost;
                mu = (mu / 3.0).max(1e-12);
                accepted = true;
                if gain < options.cost_tolerance || moved < options.step_tolerance * (size + options.step_tolerance) {
                    converged = true;
                }
                break;
            }
            mu *= 4.0;
        }
        if !accepted {
            // no downhill step at any damping: stationary to working precision
            converged = true;
        }
        if converged {
            break;
        }
    }

    let jac = problem.jacobian(&theta, &r)?;
    let n_obs = r.len();
    let s2 = if n_obs > p { cost / (n_obs - p) as f64 } else { 0.0 };
    let cov = (jac.transpose() * &jac)
        .try_inverse()
        .unwrap_or_else(|| DMatrix::from_element(p, p, f64::INFINITY));
    let se = |i: usize| (s2 * cov[(i, i)]).max(0.0).sqrt();

    let k = problem.pairs.len();
    let mut at_bound = Vec::new();
    let pairs = initial
        .pairs
        .iter()
        .enumerate()
        .map(|(i, pe)| {
            if theta[i] == 0.0 || theta[i] == problem.upper * problem.upper {
                at_bound.push(pe.label.clone());
            }
            let value = theta[i].sqrt();
            let std_error = if value > 0.0 { se(i) / (2.0 * value) } else { se(i).sqrt() };
            PairEstimate {
                groups: pe.groups,
                label: pe.label.clone(),
                value,
                std_error,
            }
        })
        .collect();
    let damping = if options.fit_damping {
        if theta[k] == 0.0 {
            at_bound.push("damping".into());
        }
        Some((theta[k], se(k)))
    } else {
        initial.damping
    };

    Ok(CouplingEstimate {
        method: Method::LeastSquares,
        layout: initial.layout.clone(),
        pairs,
        damping,
        diagnostics: Diagnostics {
            residual_norm: cost.sqrt(),
            cycles_used: dataset.total_cycles(),
            iterations,
            converged,
            at_bound,
            self_decay_mismatch: None,
        },
    })
}

//! Coupling extraction from projected build-up curves.

mod bootstrap;
mod dataset;
mod estimate;
mod refine;
mod shorttau;

pub use bootstrap::{bootstrap_uncertainty, BootstrapOptions, UncertaintyReport, MIN_REPLICATES};
pub use dataset::{BuildUpDataset, Experiment, Signals};
pub use estimate::{CouplingEstimate, Diagnostics, Method, PairEstimate};
pub use refine::{refine_fit, RefineOptions};
pub use shorttau::{
    estimate_couplings_shorttau, estimate_from_rates, shorttau_slopes, ExperimentRates, GroupRate, ShortTauOptions,
};

use crate::dynamics::{simulate_projected, InitialSpec, ProjectionSpec};
use crate::error::Result;
use crate::system::{HamiltonianConvention, SpinSystem};

/// Simulates one selective preparation per entry of `preparations` and
/// packages the trajectories as a dataset. Handy for closed-loop checks.
pub fn simulate_dataset(
    system: &SpinSystem,
    convention: &HamiltonianConvention,
    preparations: &[InitialSpec],
    tau: f64,
    cycles: usize,
    projection: &ProjectionSpec,
) -> Result<BuildUpDataset> {
    let experiments = preparations
        .iter()
        .enumerate()
        .map(|(k, spec)| {
            let traj = simulate_projected(system, convention, spec, tau, cycles, projection)?;
            let prepared = match spec {
                InitialSpec::Excite(s) | InitialSpec::Deplete(s) => s.clone(),
                InitialSpec::Custom(_) => Vec::new(),
            };
            let name = match spec {
                InitialSpec::Excite(s) => format!("excite-{}", join_labels(system, s)),
                InitialSpec::Deplete(s) => format!("deplete-{}", join_labels(system, s)),
                InitialSpec::Custom(_) => format!("custom-{k}"),
            };
            Ok(Experiment::from_trajectory(name, spec.polarizations(system.n())?, prepared, &traj))
        })
        .collect::<Result<Vec<_>>>()?;
    BuildUpDataset::new(system.layout().clone(), *convention, experiments)
}

fn join_labels(system: &SpinSystem, sites: &[usize]) -> String {
    sites.iter().map(|&i| system.labels()[i].as_str()).collect::<Vec<_>>().join("+")
}

/// One excitation experiment per equivalence group.
pub fn excite_each_group(system: &SpinSystem) -> Vec<InitialSpec> {
    system.groups().iter().map(|g| InitialSpec::Excite(g.clone())).collect()
}

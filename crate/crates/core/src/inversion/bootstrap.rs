//! Residual-bootstrap standard errors for coupling estimates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::dataset::{BuildUpDataset, Experiment, Signals};
use super::estimate::{CouplingEstimate, Method};
use super::refine::{forward, refine_fit, RefineOptions};
use super::shorttau::{estimate_couplings_shorttau, shorttau_slopes, ShortTauOptions};
use crate::error::{Error, Result};

pub const MIN_REPLICATES: usize = 10;
const MIN_RESIDUALS: usize = 3;

#[derive(Debug, Clone)]
pub struct BootstrapOptions {
    pub replicates: usize,
    pub seed: u64,
    pub short_tau: ShortTauOptions,
    pub refine: RefineOptions,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        Self {
            replicates: 100,
            seed: 0,
            short_tau: ShortTauOptions::default(),
            refine: RefineOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyReport {
    pub method: Method,
    pub replicates: usize,
    pub seed: u64,
    /// `(pair label, estimate, bootstrap standard error)`.
    pub pairs: Vec<(String, f64, f64)>,
    pub damping: Option<f64>,
    /// Replicates whose re-estimation failed and were left out.
    pub failed: usize,
}

fn resample(rng: &mut ChaCha8Rng, pool: &[f64]) -> f64 {
    pool[rng.random_range(0..pool.len())]
}

/// Synthetic datasets for the short-tau method: fitted early-window curves
/// plus residuals resampled within each group channel.
fn short_tau_replicates(
    dataset: &BuildUpDataset,
    options: &BootstrapOptions,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<BuildUpDataset>> {
    let layout = dataset.layout();
    let rates = shorttau_slopes(dataset, &options.short_tau)?;
    if let Some(r) = rates.iter().find(|r| r.window < MIN_RESIDUALS) {
        return Err(Error::Bootstrap(format!("experiment '{}' has too few cycles to resample", r.name)));
    }
    let sizes: Vec<f64> = layout.groups().iter().map(|g| g.len() as f64).collect();
    Ok((0..options.replicates)
        .map(|_| {
            let experiments = dataset
                .experiments()
                .iter()
                .zip(&rates)
                .map(|(e, r)| {
                    let mut rows = Vec::with_capacity(r.window + 1);
                    rows.push(r.group_initial.clone());
                    for m in 0..r.window {
                        rows.push(
                            r.groups
                                .iter()
                                .enumerate()
                                .map(|(g, gr)| {
                                    let sum = r.group_initial[g] * sizes[g] + gr.fitted[m] + resample(rng, &gr.residuals);
                                    sum / sizes[g]
                                })
                                .collect(),
                        );
                    }
                    Experiment {
                        signals: Signals::Groups(rows),
                        noise: None,
                        ..e.clone()
                    }
                })
                .collect();
            dataset.with_experiments(experiments)
        })
        .collect())
}

/// Synthetic datasets for the least-squares method: forward model at the
/// estimate plus residuals resampled within each experiment.
fn least_squares_replicates(
    dataset: &BuildUpDataset,
    estimate: &CouplingEstimate,
    options: &BootstrapOptions,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<BuildUpDataset>> {
    let couplings = estimate.site_couplings(options.refine.intra_group.as_ref());
    let damping = estimate.damping.map_or(0.0, |d| d.0);
    let model = forward(dataset, &couplings, damping)?;
    let pools: Vec<Vec<f64>> = dataset
        .experiments()
        .iter()
        .zip(&model)
        .map(|(e, pred)| {
            e.signals.rows()[1..]
                .iter()
                .zip(&pred[1..])
                .flat_map(|(o, p)| o.iter().zip(p).map(|(a, b)| a - b))
                .collect()
        })
        .collect();
    if let Some((e, _)) = dataset.experiments().iter().zip(&pools).find(|(_, p)| p.len() < MIN_RESIDUALS) {
        return Err(Error::Bootstrap(format!("experiment '{}' has too few cycles to resample", e.name)));
    }
    Ok((0..options.replicates)
        .map(|_| {
            let experiments = dataset
                .experiments()
                .iter()
                .zip(&model)
                .zip(&pools)
                .map(|((e, pred), pool)| {
                    let rows = pred
                        .iter()
                        .enumerate()
                        .map(|(m, p)| {
                            if m == 0 {
                                e.signals.rows()[0].clone()
                            } else {
                                p.iter().map(|v| v + resample(rng, pool)).collect()
                            }
                        })
                        .collect();
                    let signals = match e.signals {
                        Signals::Sites(_) => Signals::Sites(rows),
                        Signals::Groups(_) => Signals::Groups(rows),
                    };
                    Experiment { signals, ..e.clone() }
                })
                .collect();
            dataset.with_experiments(experiments)
        })
        .collect())
}

fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Re-runs the estimator that produced `estimate` on resampled data.
/// Deterministic for a fixed seed regardless of thread count.
pub fn bootstrap_uncertainty(
    dataset: &BuildUpDataset,
    estimate: &CouplingEstimate,
    options: &BootstrapOptions,
) -> Result<UncertaintyReport> {
    if options.replicates < MIN_REPLICATES {
        return Err(Error::Bootstrap(format!(
            "{} replicates requested, need at least {MIN_REPLICATES}",
            options.replicates
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let synthetic = match estimate.method {
        Method::ShortTauRatio => short_tau_replicates(dataset, options, &mut rng)?,
        Method::LeastSquares => least_squares_replicates(dataset, estimate, options, &mut rng)?,
    };

    let results: Vec<Option<CouplingEstimate>> = synthetic
        .par_iter()
        .map(|d| match estimate.method {
            Method::ShortTauRatio => estimate_couplings_shorttau(d, &options.short_tau).ok(),
            Method::LeastSquares => refine_fit(d, estimate, &options.refine).ok(),
        })
        .collect();
    let ok: Vec<&CouplingEstimate> = results.iter().flatten().collect();
    let failed = results.len() - ok.len();
    if ok.len() < MIN_REPLICATES {
        return Err(Error::Bootstrap(format!(
            "only {} of {} replicates could be re-estimated",
            ok.len(),
            results.len()
        )));
    }

    let pairs = estimate
        .pairs
        .iter()
        .map(|pe| {
            let samples: Vec<f64> = ok
                .iter()
                .filter_map(|e| e.pairs.iter().find(|p| p.groups == pe.groups).map(|p| p.value))
                .collect();
            (pe.label.clone(), pe.value, std_dev(&samples))
        })
        .collect();
    let damping = estimate.damping.map(|_| {
        let samples: Vec<f64> = ok.iter().filter_map(|e| e.damping.map(|d| d.0)).collect();
        std_dev(&samples)
    });

    Ok(UncertaintyReport {
        method: estimate.method,
        replicates: options.replicates,
        seed: options.seed,
        pairs,
        damping,
        failed,
    })
}

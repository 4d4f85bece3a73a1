//! Coupling extraction from the initial slopes of build-up curves.
//!
//! In the small-tau regime one cycle changes the summed polarization of
//! group `B` by `kappa * sum_A (pi_A - pi_B) S_AB`, where `pi_A` is the
//! prepared polarization of group `A`, `S_AB` the sum of `J_ij^2` over
//! member pairs and `kappa = (f tau / 2)^2`. The initial slopes therefore
//! give a linear system in the `S_AB`; the effective group coupling is
//! `sqrt(S_AB / (|A| |B|))`, the RMS of the member couplings.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::dataset::{BuildUpDataset, Experiment};
use super::estimate::{pair_label, CouplingEstimate, Diagnostics, Method, PairEstimate};
use crate::approx::SMALL_TAU_REFUSE;
use crate::error::{Error, Result};
use crate::system::SiteLayout;

#[derive(Debug, Clone)]
pub struct ShortTauOptions {
    /// The early window ends at the first cycle where any group has moved
    /// this fraction of the way to its asymptote.
    pub window_fraction: f64,
    pub min_window: usize,
    pub max_window: Option<usize>,
    /// Degree of the polynomial `r m + q m^2 + ...` fitted to each
    /// build-up; the linear coefficient is the rate. Degree 2 absorbs the
    /// leading relayed contribution.
    pub poly_degree: usize,
    /// Backsteps larger than this many noise standard deviations count as
    /// non-monotone.
    pub monotone_sigmas: f64,
    pub regime_limit: f64,
}

impl Default for ShortTauOptions {
    fn default() -> Self {
        Self {
            window_fraction: 0.25,
            min_window: 3,
            max_window: None,
            poly_degree: 2,
            monotone_sigmas: 5.0,
            regime_limit: SMALL_TAU_REFUSE,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GroupRate {
    /// Per-cycle slope of the group's summed polarization.
    pub rate: f64,
    pub std_error: f64,
    /// `-rate / (|A| pi_A)` for groups that start polarized.
    pub self_decay: Option<f64>,
    /// Fitted change from the prepared value, cycles `1..=window`.
    pub fitted: Vec<f64>,
    pub residuals: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ExperimentRates {
    pub name: String,
    pub tau: f64,
    pub window: usize,
    /// Prepared polarization per site of each group.
    pub group_initial: Vec<f64>,
    /// Whether the group holds prepared (excited or depleted) sites.
    pub prepared: Vec<bool>,
    pub groups: Vec<GroupRate>,
}

fn group_initial(layout: &SiteLayout, e: &Experiment) -> Result<Vec<f64>> {
    layout
        .groups()
        .iter()
        .enumerate()
        .map(|(g, members)| {
            let p = e.initial[members[0]];
            if members.iter().any(|&i| (e.initial[i] - p).abs() > 1e-12) {
                return Err(Error::InvalidDataset(format!(
                    "experiment '{}': prepared polarization differs within group {}",
                    e.name,
                    layout.group_name(g)
                )));
            }
            Ok(p)
        })
        .collect()
}

/// Least-squares fit of `y(m) = sum_k c_k (m/w)^k`, `k = 1..=degree`,
/// over `m = 1..=w`. Returns the per-cycle slope, its variance factor
/// `[(X^T X)^-1]_00 / w^2`, and the fitted values.
fn fit_polynomial(y: &[f64], degree: usize) -> Result<(f64, f64, Vec<f64>)> {
    let w = y.len();
    let x = DMatrix::from_fn(w, degree, |r, c| ((r + 1) as f64 / w as f64).powi(c as i32 + 1));
    let xtx = x.transpose() * &x;
    let inv = xtx
        .try_inverse()
        .ok_or_else(|| Error::Numerical("singular build-up fit".into()))?;
    let coef = &inv * (x.transpose() * DVector::from_column_slice(y));
    let fitted = (&x * &coef).iter().copied().collect();
    let scale = w as f64;
    Ok((coef[0] / scale, inv[(0, 0)] / (scale * scale), fitted))
}

/// Fits initial build-up and self-decay rates for every experiment.
pub fn shorttau_slopes(dataset: &BuildUpDataset, options: &ShortTauOptions) -> Result<Vec<ExperimentRates>> {
    let layout = dataset.layout();
    let n = layout.n() as f64;
    dataset
        .experiments()
        .iter()
        .map(|e| {
            let sums = e.group_sums(layout);
            let pi = group_initial(layout, e)?;
            let sizes: Vec<f64> = layout.groups().iter().map(|g| g.len() as f64).collect();
            let g0: Vec<f64> = pi.iter().zip(&sizes).map(|(p, s)| p * s).collect();
            let eq = e.initial.iter().sum::<f64>() / n;
            let span: Vec<f64> = g0.iter().zip(&sizes).map(|(g, s)| eq * s - g).collect();

            let limit = options.max_window.unwrap_or(usize::MAX).min(e.cycles());
            let mut window = limit;
            for m in 1..=limit {
                let moved = sums[m].iter().zip(&g0).zip(&span).any(|((v, g), d)| {
                    d.abs() > 1e-12 && (v - g).abs() >= options.window_fraction * d.abs()
                });
                if moved {
                    window = m - 1;
                    break;
                }
            }
            let required = options.min_window.max(options.poly_degree + 1);
            if window < required {
                return Err(Error::WindowTooShort {
                    experiment: e.name.clone(),
                    cycles: window,
                    required,
                });
            }

            let prepared_groups: Vec<bool> = layout
                .groups()
                .iter()
                .map(|g| g.iter().any(|i| e.prepared.contains(i)))
                .collect();

            let groups = (0..layout.groups().len())
                .map(|g| {
                    let y: Vec<f64> = (1..=window).map(|m| sums[m][g] - g0[g]).collect();
                    let (rate, var_factor, fitted) = fit_polynomial(&y, options.poly_degree)?;
                    let residuals: Vec<f64> = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
                    let dof = (window - options.poly_degree).max(1) as f64;
                    let rms = (residuals.iter().map(|r| r * r).sum::<f64>() / dof).sqrt();
                    let sigma = match e.noise {
                        Some(s) => match e.signals {
                            super::Signals::Sites(_) => s * sizes[g].sqrt(),
                            super::Signals::Groups(_) => s * sizes[g],
                        },
                        None => rms,
                    };

                    if span[g].abs() > 1e-12 {
                        let dir = span[g].signum();
                        let tol = options.monotone_sigmas * std::f64::consts::SQRT_2 * sigma + 1e-9;
                        let mut prev = g0[g];
                        for m in 1..=window {
                            let back = (prev - sums[m][g]) * dir;
                            if back > tol {
                                return Err(Error::NonMonotone {
                                    experiment: e.name.clone(),
                                    channel: layout.group_name(g),
                                    backstep: back,
                                    tolerance: tol,
                                });
                            }
                            prev = sums[m][g];
                        }
                    }

                    let self_decay = (pi[g] != 0.0).then(|| -rate / g0[g]);
                    Ok(GroupRate {
                        rate,
                        std_error: sigma * var_factor.sqrt(),
                        self_decay,
                        fitted,
                        residuals,
                    })
                })
                .collect::<Result<Vec<_>>>()?;

            Ok(ExperimentRates {
                name: e.name.clone(),
                tau: e.tau,
                window,
                group_initial: pi,
                prepared: prepared_groups,
                groups,
            })
        })
        .collect()
}

struct Row {
    coefficients: Vec<f64>,
    rate: f64,
    std_error: f64,
}

fn unordered_pairs(g: usize) -> Vec<(usize, usize)> {
    (0..g).flat_map(|a| (a + 1..g).map(move |b| (a, b))).collect()
}

fn build_rows(rates: &[ExperimentRates], pairs: &[(usize, usize)], kappa_factor: f64) -> (Vec<Row>, Vec<Row>) {
    let mut cross = Vec::new();
    let mut selfs = Vec::new();
    for e in rates {
        let kappa = (kappa_factor * e.tau).powi(2);
        let any_prepared = e.prepared.iter().any(|&p| p);
        for (b, rate) in e.groups.iter().enumerate() {
            let coefficients = pairs
                .iter()
                .map(|&(x, y)| {
                    if x == b {
                        kappa * (e.group_initial[y] - e.group_initial[b])
                    } else if y == b {
                        kappa * (e.group_initial[x] - e.group_initial[b])
                    } else {
                        0.0
                    }
                })
                .collect();
            let row = Row {
                coefficients,
                rate: rate.rate,
                std_error: rate.std_error,
            };
            if any_prepared && e.prepared[b] {
                selfs.push(row);
            } else {
                cross.push(row);
            }
        }
    }
    (cross, selfs)
}

/// Pairs whose unit vector is not in the row space of the design.
fn unidentifiable(rows: &[Row], k: usize) -> Vec<usize> {
    let mut ata = DMatrix::<f64>::zeros(k, k);
    for row in rows {
        let scale = row.coefficients.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        if scale == 0.0 {
            continue;
        }
        let v = DVector::from_iterator(k, row.coefficients.iter().map(|c| c / scale));
        ata += &v * v.transpose();
    }
    let eig = SymmetricEigen::new(ata);
    let top = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(*v));
    let mut out = Vec::new();
    for j in 0..k {
        let hit = (0..k).any(|c| eig.eigenvalues[c] <= 1e-10 * top.max(1e-300) && eig.eigenvectors[(j, c)].abs() > 1e-6);
        if hit {
            out.push(j);
        }
    }
    out
}

/// Effective group-pair couplings from short-tau build-up rates.
pub fn estimate_couplings_shorttau(dataset: &BuildUpDataset, options: &ShortTauOptions) -> Result<CouplingEstimate> {
    let rates = shorttau_slopes(dataset, options)?;
    estimate_from_rates(dataset, &rates, options)
}

pub fn estimate_from_rates(
    dataset: &BuildUpDataset,
    rates: &[ExperimentRates],
    options: &ShortTauOptions,
) -> Result<CouplingEstimate> {
    let layout = dataset.layout();
    let groups = layout.groups();
    let pairs = unordered_pairs(groups.len());
    let k = pairs.len();
    if k == 0 {
        return Err(Error::InvalidDataset("a single group has no couplings to estimate".into()));
    }
    let kappa_factor = dataset.convention().small_tau_constant();
    let (cross, selfs) = build_rows(rates, &pairs, kappa_factor);

    let missing = unidentifiable(&cross, k);
    if !missing.is_empty() {
        return Err(Error::Underdetermined {
            pairs: missing.iter().map(|&j| pair_label(layout, pairs[j].0, pairs[j].1)).collect(),
        });
    }

    // inverse-variance weighted least squares
    let scale = cross.iter().fold(0.0f64, |m, r| m.max(r.rate.abs()));
    let floor = (1e-9 * scale).max(1e-150);
    let mut normal = DMatrix::<f64>::zeros(k, k);
    let mut rhs = DVector::<f64>::zeros(k);
    for row in &cross {
        let w = 1.0 / (row.std_error * row.std_error + floor * floor);
        let a = DVector::from_column_slice(&row.coefficients);
        normal += &a * a.transpose() * w;
        rhs += &a * (w * row.rate);
    }
    let cov = normal
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("normal equations not positive definite".into()))?
        .inverse();
    let sums = &cov * rhs;

    let residual_norm = cross
        .iter()
        .map(|r| {
            let pred: f64 = r.coefficients.iter().zip(sums.iter()).map(|(c, s)| c * s).sum();
            (pred - r.rate).powi(2)
        })
        .sum::<f64>()
        .sqrt();

    let self_decay_mismatch = selfs
        .iter()
        .filter_map(|r| {
            let pred: f64 = r.coefficients.iter().zip(sums.iter()).map(|(c, s)| c * s).sum();
            (pred.abs() > 0.0).then(|| (r.rate - pred).abs() / pred.abs())
        })
        .reduce(f64::max);

    let tau_max = rates.iter().map(|r| r.tau).fold(0.0, f64::max);
    let mut out = Vec::with_capacity(k);
    for (j, &(a, b)) in pairs.iter().enumerate() {
        let members = (groups[a].len() * groups[b].len()) as f64;
        let s = sums[j];
        let sd = cov[(j, j)].max(0.0).sqrt();
        let value = (s.max(0.0) / members).sqrt();
        let std_error = if value > 0.0 {
            sd / (2.0 * (s * members).sqrt())
        } else {
            (sd / members).sqrt()
        };
        let label = pair_label(layout, a, b);
        if value * tau_max > options.regime_limit {
            return Err(Error::RegimeViolation {
                pair: label,
                jtau: value * tau_max,
                limit: options.regime_limit,
            });
        }
        out.push(PairEstimate {
            groups: (a, b),
            label,
            value,
            std_error,
        });
    }

    Ok(CouplingEstimate {
        method: Method::ShortTauRatio,
        layout: layout.clone(),
        pairs: out,
        damping: None,
        diagnostics: Diagnostics {
            residual_norm,
            cycles_used: rates.iter().map(|r| r.window).sum(),
            iterations: 0,
            converged: true,
            at_bound: Vec::new(),
            self_decay_mismatch,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_fit_recovers_slope() {
        let y: Vec<f64> = (1..=50).map(|m| 3e-4 * m as f64 - 2e-7 * (m * m) as f64).collect();
        let (rate, _, fitted) = fit_polynomial(&y, 2).unwrap();
        assert!((rate - 3e-4).abs() < 1e-15);
        assert!(fitted.iter().zip(&y).all(|(a, b)| (a - b).abs() < 1e-15));
        let (lin, _, _) = fit_polynomial(&y, 1).unwrap();
        assert!(lin < 3e-4);
    }

    #[test]
    fn rank_detection() {
        let row = |c: Vec<f64>| Row {
            coefficients: c,
            rate: 0.0,
            std_error: 0.0,
        };
        assert_eq!(unidentifiable(&[row(vec![1.0, 0.0, 0.0]), row(vec![0.0, 1.0, 0.0])], 3), vec![2]);
        assert_eq!(unidentifiable(&[row(vec![1.0, 1.0, 0.0]), row(vec![0.0, 0.0, 1.0])], 3), vec![0, 1]);
        assert!(unidentifiable(&[row(vec![1.0, 1.0]), row(vec![1.0, -1.0])], 2).is_empty());
    }
}

//! Brute-force reference implementations and random inputs shared by the
//! integration tests.
#![allow(dead_code)]

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spinzeno::{SiteLayout, SpinSystem};

pub type CMat = DMatrix<Complex64>;

pub const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Spin-1/2 operator on one site, Kronecker-embedded so that site `i` is
/// bit `i` of the basis index (site 0 is the last factor).
pub fn spin_op(n: usize, site: usize, axis: char) -> CMat {
    let single = match axis {
        'x' => CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.5, 0.0), c(0.5, 0.0), c(0.0, 0.0)]),
        'y' => CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, -0.5), c(0.0, 0.5), c(0.0, 0.0)]),
        'z' => CMat::from_row_slice(2, 2, &[c(0.5, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-0.5, 0.0)]),
        _ => panic!("axis {axis}"),
    };
    let eye = CMat::identity(2, 2);
    let mut out = CMat::identity(1, 1);
    for k in (0..n).rev() {
        out = out.kronecker(if k == site { &single } else { &eye });
    }
    out
}

pub fn hamiltonian(j: &DMatrix<f64>, factor: f64) -> CMat {
    let n = j.nrows();
    let dim = 1 << n;
    let mut h = CMat::zeros(dim, dim);
    for a in 0..n {
        for b in a + 1..n {
            if j[(a, b)] == 0.0 {
                continue;
            }
            for axis in ['x', 'y', 'z'] {
                h += spin_op(n, a, axis) * spin_op(n, b, axis) * c(factor * j[(a, b)], 0.0);
            }
        }
    }
    h
}

pub fn propagator(j: &DMatrix<f64>, factor: f64, tau: f64) -> CMat {
    (hamiltonian(j, factor) * c(0.0, -tau)).exp()
}

/// Density matrix of the product state with per-site polarizations.
pub fn product_state(pols: &[f64]) -> CMat {
    let mut rho = CMat::identity(1, 1);
    for &p in pols.iter().rev() {
        let site = CMat::from_row_slice(2, 2, &[c((1.0 + p) / 2.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c((1.0 - p) / 2.0, 0.0)]);
        rho = rho.kronecker(&site);
    }
    rho
}

/// `2 <I_iz>` for every site.
pub fn polarizations(rho: &CMat, n: usize) -> Vec<f64> {
    (0..n).map(|i| 2.0 * (rho * spin_op(n, i, 'z')).trace().re).collect()
}

/// Evolve, scale coherences by `fidelity`, damp toward the identity;
/// repeated `cycles` times on the full density matrix.
pub fn oracle_projected(
    j: &DMatrix<f64>,
    factor: f64,
    pols: &[f64],
    tau: f64,
    cycles: usize,
    fidelity: f64,
    damping: f64,
) -> Vec<Vec<f64>> {
    let n = pols.len();
    let dim = 1 << n;
    let u = propagator(j, factor, tau);
    let ud = u.adjoint();
    let decay = (-damping * tau).exp();
    let mixed = CMat::identity(dim, dim) * c(1.0 / dim as f64, 0.0);
    let mut rho = product_state(pols);
    let mut out = vec![polarizations(&rho, n)];
    for _ in 0..cycles {
        rho = &u * &rho * &ud;
        for r in 0..dim {
            for col in 0..dim {
                if r != col {
                    rho[(r, col)] *= fidelity;
                }
            }
        }
        rho = &mixed + (&rho - &mixed) * c(decay, 0.0);
        out.push(polarizations(&rho, n));
    }
    out
}

/// Coherent expectation `Tr(O U rho0 U^dag) / Tr(rho0^2)`.
pub fn oracle_coherent(j: &DMatrix<f64>, factor: f64, start: (usize, char), obs: (usize, char), t: f64) -> f64 {
    let n = j.nrows();
    let rho0 = spin_op(n, start.0, start.1);
    let u = propagator(j, factor, t);
    let rho = &u * &rho0 * u.adjoint();
    (spin_op(n, obs.0, obs.1) * rho).trace().re / (&rho0 * &rho0).trace().re
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Complete graph, J uniform in `[lo, hi]` Hz, each site its own group.
pub fn random_complete(rng: &mut impl Rng, n: usize, lo: f64, hi: f64) -> SpinSystem {
    let mut j = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in a + 1..n {
            let v = rng.random_range(lo..=hi);
            j[(a, b)] = v;
            j[(b, a)] = v;
        }
    }
    from_matrix(j)
}

/// Random spanning tree plus each remaining edge with probability 1/2.
pub fn random_connected(rng: &mut impl Rng, n: usize, lo: f64, hi: f64) -> SpinSystem {
    let mut j = DMatrix::zeros(n, n);
    for b in 1..n {
        let a = rng.random_range(0..b);
        let v = rng.random_range(lo..=hi);
        j[(a, b)] = v;
        j[(b, a)] = v;
    }
    for a in 0..n {
        for b in a + 1..n {
            if j[(a, b)] == 0.0 && rng.random_bool(0.5) {
                let v = rng.random_range(lo..=hi);
                j[(a, b)] = v;
                j[(b, a)] = v;
            }
        }
    }
    from_matrix(j)
}

pub fn from_matrix(j: DMatrix<f64>) -> SpinSystem {
    let n = j.nrows();
    let labels: Vec<String> = (0..n).map(|i| format!("S{i}")).collect();
    let layout = SiteLayout::from_indices(labels, (0..n).map(|i| vec![i]).collect()).unwrap();
    SpinSystem::from_matrix(layout, j).unwrap()
}

pub fn max_abs_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max)
}

pub fn two_spin_closed_form(j: f64, tau: f64) -> f64 {
    (1.0 - (TWO_PI * j * tau).cos()) / 2.0
}

/// Number of strict interior local extrema of a sampled series.
pub fn count_extrema(xs: &[f64]) -> usize {
    xs.windows(3)
        .filter(|w| (w[1] - w[0]) * (w[2] - w[1]) < 0.0)
        .count()
}

/// RMS of member couplings for every unordered group pair `(a < b)`.
pub fn group_rms(system: &SpinSystem) -> Vec<f64> {
    let groups = system.groups();
    let j = system.couplings();
    let mut out = Vec::new();
    for a in 0..groups.len() {
        for b in a + 1..groups.len() {
            let mut s = 0.0;
            for &i in &groups[a] {
                for &k in &groups[b] {
                    s += j[(i, k)] * j[(i, k)];
                }
            }
            out.push((s / (groups[a].len() * groups[b].len()) as f64).sqrt());
        }
    }
    out
}

/// Adds independent Gaussian noise to every channel after the initial row.
pub fn add_noise(
    dataset: &spinzeno::inversion::BuildUpDataset,
    sigma: f64,
    rng: &mut impl Rng,
) -> spinzeno::inversion::BuildUpDataset {
    use rand_distr::{Distribution, Normal};
    use spinzeno::inversion::{BuildUpDataset, Experiment, Signals};
    let normal = Normal::new(0.0, sigma).unwrap();
    let experiments = dataset
        .experiments()
        .iter()
        .map(|e| {
            let rows: Vec<Vec<f64>> = e
                .signals
                .rows()
                .iter()
                .enumerate()
                .map(|(m, r)| {
                    if m == 0 {
                        r.clone()
                    } else {
                        r.iter().map(|v| v + normal.sample(rng)).collect()
                    }
                })
                .collect();
            let signals = match e.signals {
                Signals::Sites(_) => Signals::Sites(rows),
                Signals::Groups(_) => Signals::Groups(rows),
            };
            Experiment {
                signals,
                noise: Some(sigma),
                ..e.clone()
            }
        })
        .collect();
    BuildUpDataset::new(dataset.layout().clone(), *dataset.convention(), experiments).unwrap()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

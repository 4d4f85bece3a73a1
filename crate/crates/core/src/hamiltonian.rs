//! Product-basis operators and the isotropic exchange Hamiltonian.
//!
//! Basis state `a` has bit `i` equal to the state of spin `i`: 0 is
//! m = +1/2 (alpha), 1 is m = -1/2 (beta).

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::system::{HamiltonianConvention, SpinSystem};

/// Largest system for which full 2^n x 2^n matrices are built.
pub const DENSE_LIMIT: usize = 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl FromStr for Axis {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "x" | "X" => Ok(Axis::X),
            "y" | "Y" => Ok(Axis::Y),
            "z" | "Z" => Ok(Axis::Z),
            other => Err(format!("unknown axis '{other}' (expected x, y or z)")),
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        })
    }
}

/// +1/2 if spin `site` is up in basis state `state`, -1/2 otherwise.
#[inline]
pub fn mz(state: usize, site: usize) -> f64 {
    if state >> site & 1 == 0 {
        0.5
    } else {
        -0.5
    }
}

pub(crate) fn check_dense(n: usize) -> Result<()> {
    if n > DENSE_LIMIT {
        Err(Error::TooManySpins {
            n,
            limit: DENSE_LIMIT,
        })
    } else {
        Ok(())
    }
}

/// `I_{site,axis}` embedded in the full product space.
pub fn single_spin_operator(
    system: &SpinSystem,
    site: usize,
    axis: Axis,
) -> Result<DMatrix<Complex64>> {
    operator_on(system.n(), site, axis)
}

pub(crate) fn operator_on(n: usize, site: usize, axis: Axis) -> Result<DMatrix<Complex64>> {
    if site >= n {
        return Err(Error::SiteOutOfRange { site, n });
    }
    check_dense(n)?;
    let dim = 1usize << n;
    let mask = 1usize << site;
    let mut op = DMatrix::zeros(dim, dim);
    for a in 0..dim {
        match axis {
            Axis::Z => op[(a, a)] = Complex64::new(mz(a, site), 0.0),
            Axis::X => op[(a, a ^ mask)] = Complex64::new(0.5, 0.0),
            // <alpha|I_y|beta> = -i/2
            Axis::Y => {
                let sign = if a & mask == 0 { -0.5 } else { 0.5 };
                op[(a, a ^ mask)] = Complex64::new(0.0, sign);
            }
        }
    }
    Ok(op)
}

/// Diagonal of `sum_i I_iz`.
pub fn total_mz_diagonal(n: usize) -> Vec<f64> {
    (0..1usize << n)
        .map(|a| (0..n).map(|i| mz(a, i)).sum())
        .collect()
}

/// Adds `scale * I_i . I_j` into `h` restricted to `states`; `position`
/// maps a global basis index to its row in `h`. Shared by the full and the
/// per-sector builders so both produce bit-identical entries.
pub(crate) fn add_exchange<F>(
    h: &mut DMatrix<f64>,
    states: &[usize],
    position: F,
    i: usize,
    j: usize,
    scale: f64,
) where
    F: Fn(usize) -> usize,
{
    let mask = (1usize << i) | (1usize << j);
    for (row, &a) in states.iter().enumerate() {
        let same = (a >> i & 1) == (a >> j & 1);
        if same {
            h[(row, row)] += 0.25 * scale;
        } else {
            h[(row, row)] -= 0.25 * scale;
            // flip-flop term (I+ I- + I- I+)/2
            h[(row, position(a ^ mask))] += 0.5 * scale;
        }
    }
}

/// `H = f * sum_{i<j} J_ij I_i . I_j` in rad/s, real symmetric.
pub fn build_hamiltonian(
    system: &SpinSystem,
    convention: &HamiltonianConvention,
) -> Result<DMatrix<f64>> {
    let n = system.n();
    check_dense(n)?;
    let dim = 1usize << n;
    let states: Vec<usize> = (0..dim).collect();
    let mut h = DMatrix::zeros(dim, dim);
    let f = convention.angular_factor();
    for (i, j) in system.coupled_pairs() {
        add_exchange(&mut h, &states, |a| a, i, j, f * system.coupling(i, j));
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::presets;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn single_spin_z() {
        let s = SpinSystem::build(&["A"], &[], None).unwrap();
        let z = single_spin_operator(&s, 0, Axis::Z).unwrap();
        assert_eq!(z, DMatrix::from_row_slice(2, 2, &[c(0.5, 0.), c(0., 0.), c(0., 0.), c(-0.5, 0.)]));
        let y = single_spin_operator(&s, 0, Axis::Y).unwrap();
        assert_eq!(y[(0, 1)], c(0., -0.5));
        assert_eq!(y[(1, 0)], c(0., 0.5));
    }

    #[test]
    fn x_on_site_zero_of_two() {
        let s = SpinSystem::build(&["A", "B"], &[], None).unwrap();
        let x = single_spin_operator(&s, 0, Axis::X).unwrap();
        for a in 0..4 {
            for b in 0..4 {
                let expected = if a ^ b == 1 { 0.5 } else { 0.0 };
                assert_eq!(x[(a, b)], c(expected, 0.0));
            }
        }
    }

    #[test]
    fn operators_square_to_quarter() {
        let s = presets::pyridine();
        for site in [0, 3] {
            for axis in [Axis::X, Axis::Y, Axis::Z] {
                let op = single_spin_operator(&s, site, axis).unwrap();
                assert!((&op - op.adjoint()).norm() == 0.0);
                let sq = &op * &op;
                let eig = nalgebra::SymmetricEigen::new(sq.map(|z| z.re));
                assert!(sq.map(|z| z.im).norm() == 0.0);
                for v in eig.eigenvalues.iter() {
                    assert!((v - 0.25).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn site_out_of_range() {
        let s = presets::ab();
        assert!(matches!(
            single_spin_operator(&s, 2, Axis::X),
            Err(Error::SiteOutOfRange { site: 2, n: 2 })
        ));
    }

    #[test]
    fn singlet_triplet_spectrum() {
        let s = SpinSystem::build(&["A", "B"], &[("A", "B", 1.0)], None).unwrap();
        let h = build_hamiltonian(&s, &HamiltonianConvention::default()).unwrap();
        let mut ev: Vec<f64> = nalgebra::SymmetricEigen::new(h).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        let expected = [-3.0 * 2.0 * PI / 4.0, 2.0 * PI / 4.0, 2.0 * PI / 4.0, 2.0 * PI / 4.0];
        for (a, b) in ev.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn uncoupled_is_zero() {
        let s = SpinSystem::build(&["A", "B", "C"], &[], None).unwrap();
        let h = build_hamiltonian(&s, &HamiltonianConvention::default()).unwrap();
        assert_eq!(h.norm(), 0.0);
    }

    #[test]
    fn pyridine_commutes_with_total_mz() {
        let s = presets::pyridine();
        let h = build_hamiltonian(&s, &HamiltonianConvention::default()).unwrap();
        let mz = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(total_mz_diagonal(5)));
        let comm = &h * &mz - &mz * &h;
        assert_eq!(comm.amax(), 0.0);
        assert_eq!(h, h.transpose());
        assert!(h.trace().abs() < 1e-12);
    }

    #[test]
    fn matches_kronecker_construction() {
        // I_i . I_j assembled from the complex single-spin operators
        let s = SpinSystem::build(&["A", "B", "C"], &[("A", "B", 3.0), ("B", "C", -1.5)], None).unwrap();
        let conv = HamiltonianConvention::default();
        let h = build_hamiltonian(&s, &conv).unwrap();
        let mut reference = DMatrix::<Complex64>::zeros(8, 8);
        for (i, j) in s.coupled_pairs() {
            for axis in [Axis::X, Axis::Y, Axis::Z] {
                let a = single_spin_operator(&s, i, axis).unwrap();
                let b = single_spin_operator(&s, j, axis).unwrap();
                reference += (a * b) * c(conv.angular_factor() * s.coupling(i, j), 0.0);
            }
        }
        assert!((reference - h.map(|x| c(x, 0.0))).norm() < 1e-12);
    }
}

//! Spin-system description: site labels, equivalence groups and the
//! symmetric scalar-coupling matrix (Hz).

use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Hard upper bound on the number of spins accepted anywhere.
pub const MAX_SPINS: usize = 16;

/// Multiplier turning tabulated couplings (Hz) into the angular couplings
/// (rad/s) used in the Hamiltonian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HamiltonianConvention {
    angular_factor: f64,
}

impl HamiltonianConvention {
    pub fn new(angular_factor: f64) -> Result<Self> {
        if !(angular_factor.is_finite() && angular_factor > 0.0) {
            return Err(Error::InvalidConvention(format!(
                "angular factor must be positive and finite, got {angular_factor}"
            )));
        }
        Ok(Self { angular_factor })
    }

    pub fn angular_factor(&self) -> f64 {
        self.angular_factor
    }

    /// Coefficient `c` such that one projected cycle moves `(c*J*tau)^2` of
    /// polarization between two weakly coupled spins.
    pub fn small_tau_constant(&self) -> f64 {
        self.angular_factor / 2.0
    }
}

impl Default for HamiltonianConvention {
    fn default() -> Self {
        Self {
            angular_factor: 2.0 * PI,
        }
    }
}

/// Site labels plus the partition into chemically equivalent groups.
///
/// Groups only matter for reporting and for group-level coupling
/// extraction; the dynamics never look at them.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteLayout {
    labels: Vec<String>,
    groups: Vec<Vec<usize>>,
    group_of: Vec<usize>,
}

impl SiteLayout {
    /// `groups = None` puts every site in its own group.
    pub fn new<S: AsRef<str>>(labels: &[S], groups: Option<&[Vec<S>]>) -> Result<Self> {
        let labels: Vec<String> = labels.iter().map(|s| s.as_ref().to_string()).collect();
        if labels.is_empty() {
            return Err(Error::InvalidSystem("at least one site is required".into()));
        }
        if labels.len() > MAX_SPINS {
            return Err(Error::TooManySpins {
                n: labels.len(),
                limit: MAX_SPINS,
            });
        }
        let mut index = HashMap::new();
        for (i, l) in labels.iter().enumerate() {
            if l.is_empty() {
                return Err(Error::InvalidSystem(format!("site {i} has an empty label")));
            }
            if index.insert(l.as_str(), i).is_some() {
                return Err(Error::InvalidSystem(format!("duplicate label '{l}'")));
            }
        }
        let groups: Vec<Vec<usize>> = match groups {
            None => (0..labels.len()).map(|i| vec![i]).collect(),
            Some(gs) => gs
                .iter()
                .map(|g| {
                    g.iter()
                        .map(|l| {
                            index.get(l.as_ref()).copied().ok_or_else(|| {
                                Error::InvalidSystem(format!(
                                    "unknown label '{}' in equivalence group",
                                    l.as_ref()
                                ))
                            })
                        })
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<_>>()?,
        };
        Self::from_indices(labels, groups)
    }

    pub fn from_indices(labels: Vec<String>, groups: Vec<Vec<usize>>) -> Result<Self> {
        let n = labels.len();
        let mut group_of = vec![usize::MAX; n];
        for (g, members) in groups.iter().enumerate() {
            if members.is_empty() {
                return Err(Error::InvalidSystem(format!("equivalence group {g} is empty")));
            }
            for &site in members {
                if site >= n {
                    return Err(Error::SiteOutOfRange { site, n });
                }
                if group_of[site] != usize::MAX {
                    return Err(Error::InvalidSystem(format!(
                        "site '{}' appears in more than one equivalence group",
                        labels[site]
                    )));
                }
                group_of[site] = g;
            }
        }
        if let Some(site) = group_of.iter().position(|&g| g == usize::MAX) {
            return Err(Error::InvalidSystem(format!(
                "site '{}' is not in any equivalence group",
                labels[site]
            )));
        }
        Ok(Self {
            labels,
            groups,
            group_of,
        })
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn group_of(&self, site: usize) -> usize {
        self.group_of[site]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Member labels joined with `+`, e.g. `1+1'`.
    pub fn group_name(&self, group: usize) -> String {
        self.groups[group]
            .iter()
            .map(|&i| self.labels[i].as_str())
            .collect::<Vec<_>>()
            .join("+")
    }

    pub fn resolve(&self, labels: &[impl AsRef<str>]) -> Result<Vec<usize>> {
        labels
            .iter()
            .map(|l| {
                self.index_of(l.as_ref())
                    .ok_or_else(|| Error::InvalidSystem(format!("unknown label '{}'", l.as_ref())))
            })
            .collect()
    }
}

/// N spin-1/2 sites with isotropic scalar couplings.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinSystem {
    layout: SiteLayout,
    couplings: DMatrix<f64>,
}

impl SpinSystem {
    /// Builds a system from `(site_a, site_b, J_Hz)` triplets. Unlisted pairs
    /// are uncoupled; repeating a pair is allowed only with the same value.
    pub fn build<S: AsRef<str>>(
        labels: &[S],
        couplings: &[(S, S, f64)],
        groups: Option<&[Vec<S>]>,
    ) -> Result<Self> {
        let layout = SiteLayout::new(labels, groups)?;
        let n = layout.n();
        let mut matrix = DMatrix::zeros(n, n);
        let mut seen = vec![false; n * n];
        for (a, b, j) in couplings {
            let (a, b) = (a.as_ref(), b.as_ref());
            let i = layout
                .index_of(a)
                .ok_or_else(|| Error::InvalidSystem(format!("unknown label '{a}'")))?;
            let k = layout
                .index_of(b)
                .ok_or_else(|| Error::InvalidSystem(format!("unknown label '{b}'")))?;
            if i == k {
                return Err(Error::InvalidSystem(format!("self-coupling entry for '{a}'")));
            }
            if !j.is_finite() {
                return Err(Error::InvalidSystem(format!("non-finite coupling {a}-{b}")));
            }
            if seen[i * n + k] && matrix[(i, k)] != *j {
                return Err(Error::InvalidSystem(format!(
                    "conflicting couplings for {a}-{b}: {} and {j}",
                    matrix[(i, k)]
                )));
            }
            seen[i * n + k] = true;
            seen[k * n + i] = true;
            matrix[(i, k)] = *j;
            matrix[(k, i)] = *j;
        }
        Ok(Self {
            layout,
            couplings: matrix,
        })
    }

    /// Takes a full coupling matrix; it must be exactly symmetric with a zero diagonal.
    pub fn from_matrix(layout: SiteLayout, couplings: DMatrix<f64>) -> Result<Self> {
        let n = layout.n();
        if couplings.nrows() != n || couplings.ncols() != n {
            return Err(Error::InvalidSystem(format!(
                "coupling matrix is {}x{}, expected {n}x{n}",
                couplings.nrows(),
                couplings.ncols()
            )));
        }
        for i in 0..n {
            if couplings[(i, i)] != 0.0 {
                return Err(Error::InvalidSystem(format!(
                    "nonzero self-coupling at '{}'",
                    layout.labels()[i]
                )));
            }
            for k in 0..i {
                let j = couplings[(i, k)];
                if !j.is_finite() || j != couplings[(k, i)] {
                    return Err(Error::InvalidSystem(format!(
                        "coupling {}-{} is not symmetric/finite",
                        layout.labels()[i],
                        layout.labels()[k]
                    )));
                }
            }
        }
        Ok(Self { layout, couplings })
    }

    pub fn n(&self) -> usize {
        self.layout.n()
    }

    pub fn layout(&self) -> &SiteLayout {
        &self.layout
    }

    pub fn labels(&self) -> &[String] {
        self.layout.labels()
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        self.layout.groups()
    }

    pub fn couplings(&self) -> &DMatrix<f64> {
        &self.couplings
    }

    pub fn coupling(&self, i: usize, j: usize) -> f64 {
        self.couplings[(i, j)]
    }

    pub fn max_abs_coupling(&self) -> f64 {
        self.couplings.iter().fold(0.0f64, |m, j| m.max(j.abs()))
    }

    /// Same layout, new coupling matrix.
    pub fn with_couplings(&self, couplings: DMatrix<f64>) -> Result<Self> {
        Self::from_matrix(self.layout.clone(), couplings)
    }

    pub fn set_coupling(&mut self, i: usize, j: usize, value: f64) -> Result<()> {
        let n = self.n();
        if i >= n || j >= n {
            return Err(Error::SiteOutOfRange { site: i.max(j), n });
        }
        if i == j {
            return Err(Error::InvalidSystem("self-coupling entry".into()));
        }
        if !value.is_finite() {
            return Err(Error::InvalidSystem("non-finite coupling".into()));
        }
        self.couplings[(i, j)] = value;
        self.couplings[(j, i)] = value;
        Ok(())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            layout: self.layout.clone(),
            couplings: &self.couplings * factor,
        }
    }

    /// Site pairs `(i, j)`, `i < j`, with nonzero coupling.
    pub fn coupled_pairs(&self) -> Vec<(usize, usize)> {
        let n = self.n();
        (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter(|&(i, j)| self.couplings[(i, j)] != 0.0)
            .collect()
    }

    /// Whether the graph of nonzero couplings is connected.
    pub fn is_connected(&self) -> bool {
        let n = self.n();
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                if !seen[j] && self.couplings[(i, j)] != 0.0 {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

pub mod presets {
    //! Built-in spin systems.

    use super::*;

    pub const NAMES: [&str; 2] = ["pyridine", "ab"];

    /// Pyridine ring protons: ortho (1, 1'), meta (2, 2') and para (3).
    /// Literature couplings in Hz; `j11` and `j22` are the couplings inside
    /// the two equivalent pairs, which are not tabulated.
    pub fn pyridine_with(j11: f64, j22: f64) -> Result<SpinSystem> {
        let labels = ["1", "1'", "2", "2'", "3"];
        let mut couplings = vec![
            ("1", "2", 4.86),
            ("1'", "2'", 4.86),
            ("1", "2'", 0.98),
            ("1'", "2", 0.98),
            ("1", "3", 1.85),
            ("1'", "3", 1.85),
            ("2", "3", 7.66),
            ("2'", "3", 7.66),
        ];
        if j11 != 0.0 {
            couplings.push(("1", "1'", j11));
        }
        if j22 != 0.0 {
            couplings.push(("2", "2'", j22));
        }
        let groups = vec![vec!["1", "1'"], vec!["2", "2'"], vec!["3"]];
        SpinSystem::build(&labels, &couplings, Some(&groups))
    }

    pub fn pyridine() -> SpinSystem {
        pyridine_with(0.0, 0.0).expect("preset is valid")
    }

    /// Two spins A, B with J = 10 Hz.
    pub fn ab() -> SpinSystem {
        SpinSystem::build(&["A", "B"], &[("A", "B", 10.0)], None).expect("preset is valid")
    }

    pub fn by_name(name: &str) -> Option<SpinSystem> {
        match name {
            "pyridine" => Some(pyridine()),
            "ab" => Some(ab()),
            _ => None,
        }
    }

    pub fn describe(name: &str) -> Option<&'static str> {
        match name {
            "pyridine" => Some("pyridine ring protons, 5 spins, groups {1,1'} {2,2'} {3}"),
            "ab" => Some("two spins A-B, J = 10 Hz"),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_site_matrix() {
        let s = SpinSystem::build(&["A", "B"], &[("A", "B", 10.0)], None).unwrap();
        assert_eq!(s.couplings(), &DMatrix::from_row_slice(2, 2, &[0.0, 10.0, 10.0, 0.0]));
        assert_eq!(s.groups(), &[vec![0], vec![1]]);
    }

    #[test]
    fn conflicting_pair_rejected() {
        let err = SpinSystem::build(&["A", "B"], &[("A", "B", 1.0), ("B", "A", 2.0)], None);
        assert!(matches!(err, Err(Error::InvalidSystem(_))));
        // consistent repetition is fine
        SpinSystem::build(&["A", "B"], &[("A", "B", 1.0), ("B", "A", 1.0)], None).unwrap();
    }

    #[test]
    fn unknown_label_and_self_coupling_rejected() {
        assert!(SpinSystem::build(&["A", "B"], &[("A", "C", 1.0)], None).is_err());
        assert!(SpinSystem::build(&["A", "B"], &[("A", "A", 1.0)], None).is_err());
    }

    #[test]
    fn group_partition_checked() {
        let missing = vec![vec!["A"]];
        assert!(SpinSystem::build(&["A", "B"], &[], Some(&missing)).is_err());
        let twice = vec![vec!["A", "B"], vec!["B"]];
        assert!(SpinSystem::build(&["A", "B"], &[], Some(&twice)).is_err());
    }

    #[test]
    fn too_many_spins() {
        let labels: Vec<String> = (0..17).map(|i| format!("s{i}")).collect();
        assert!(matches!(
            SiteLayout::new(&labels, None),
            Err(Error::TooManySpins { n: 17, .. })
        ));
    }

    #[test]
    fn pyridine_preset() {
        let p = presets::pyridine();
        assert_eq!(p.n(), 5);
        let l = |s: &str| p.layout().index_of(s).unwrap();
        assert_eq!(p.coupling(l("1"), l("2")), 4.86);
        assert_eq!(p.coupling(l("2'"), l("1'")), 4.86);
        assert_eq!(p.coupling(l("1"), l("2'")), 0.98);
        assert_eq!(p.coupling(l("1'"), l("3")), 1.85);
        assert_eq!(p.coupling(l("2'"), l("3")), 7.66);
        assert_eq!(p.coupling(l("1"), l("1'")), 0.0);
        assert_eq!(p.couplings(), &p.couplings().transpose());
        assert!(p.is_connected());
        assert_eq!(p.layout().group_name(0), "1+1'");
    }

    #[test]
    fn convention_validation() {
        assert!(HamiltonianConvention::new(0.0).is_err());
        assert!(HamiltonianConvention::new(f64::NAN).is_err());
        assert_eq!(HamiltonianConvention::default().angular_factor(), 2.0 * PI);
    }
}

use std::fmt;

use nalgebra::DMatrix;

use crate::system::SiteLayout;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    ShortTauRatio,
    LeastSquares,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::ShortTauRatio => "short_tau_ratio",
            Method::LeastSquares => "least_squares",
        })
    }
}

/// Effective coupling between two equivalence groups: the RMS of the
/// member-pair couplings. With singleton groups this is just `|J_ij|`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairEstimate {
    pub groups: (usize, usize),
    pub label: String,
    pub value: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    pub residual_norm: f64,
    pub cycles_used: usize,
    pub iterations: usize,
    pub converged: bool,
    /// Parameters that ended on the non-negativity bound.
    pub at_bound: Vec<String>,
    /// Largest relative mismatch between observed self-decay rates and the
    /// rates implied by the cross build-up estimate.
    pub self_decay_mismatch: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingEstimate {
    pub method: Method,
    pub layout: SiteLayout,
    pub pairs: Vec<PairEstimate>,
    /// Fitted damping rate (1/s) and its standard error.
    pub damping: Option<(f64, f64)>,
    pub diagnostics: Diagnostics,
}

impl CouplingEstimate {
    pub fn pair(&self, a: usize, b: usize) -> Option<&PairEstimate> {
        let key = (a.min(b), a.max(b));
        self.pairs.iter().find(|p| p.groups == key)
    }

    /// Looks a pair up by any member label of each group.
    pub fn value_by_labels(&self, a: &str, b: &str) -> Option<f64> {
        let ga = self.layout.group_of(self.layout.index_of(a)?);
        let gb = self.layout.group_of(self.layout.index_of(b)?);
        self.pair(ga, gb).map(|p| p.value)
    }

    pub fn values(&self) -> Vec<f64> {
        self.pairs.iter().map(|p| p.value).collect()
    }

    /// Site-level coupling matrix with every member pair of a group pair set
    /// to the group-level value; pairs inside a group are taken from `base`
    /// (zero when absent).
    pub fn site_couplings(&self, base: Option<&DMatrix<f64>>) -> DMatrix<f64> {
        expand_pairs(&self.layout, &self.pairs.iter().map(|p| (p.groups, p.value)).collect::<Vec<_>>(), base)
    }

    /// True when the estimate comes with caveats the caller should see.
    pub fn has_warnings(&self) -> bool {
        !self.diagnostics.converged || !self.diagnostics.at_bound.is_empty()
    }
}

pub(crate) fn pair_label(layout: &SiteLayout, a: usize, b: usize) -> String {
    format!("{}~{}", layout.group_name(a), layout.group_name(b))
}

pub(crate) fn expand_pairs(
    layout: &SiteLayout,
    values: &[((usize, usize), f64)],
    base: Option<&DMatrix<f64>>,
) -> DMatrix<f64> {
    let n = layout.n();
    let mut m = match base {
        Some(b) => {
            let mut m = DMatrix::zeros(n, n);
            for g in layout.groups() {
                for &i in g {
                    for &j in g {
                        if i != j {
                            m[(i, j)] = b[(i, j)];
                        }
                    }
                }
            }
            m
        }
        None => DMatrix::zeros(n, n),
    };
    let groups = layout.groups();
    for &((a, b), v) in values {
        for &i in &groups[a] {
            for &j in &groups[b] {
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
    }
    m
}

use crate::dynamics::PolarizationTrajectory;
use crate::error::{Error, Result};
use crate::system::{HamiltonianConvention, SiteLayout};

/// Observed channels of one experiment, indexed `[cycle][channel]`.
#[derive(Debug, Clone, PartialEq)]
pub enum Signals {
    /// One channel per site.
    Sites(Vec<Vec<f64>>),
    /// One channel per equivalence group, holding the mean member polarization.
    Groups(Vec<Vec<f64>>),
}

impl Signals {
    pub fn rows(&self) -> &[Vec<f64>] {
        match self {
            Signals::Sites(r) | Signals::Groups(r) => r,
        }
    }
}

/// One build-up experiment: a preparation followed by `cycles` projections.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub name: String,
    /// Prepared per-site polarizations.
    pub initial: Vec<f64>,
    /// Sites that were selectively excited or depleted; their groups'
    /// signals are treated as self-decay rather than cross build-up.
    pub prepared: Vec<usize>,
    pub tau: f64,
    pub signals: Signals,
    /// Standard deviation of additive noise per channel, when known.
    pub noise: Option<f64>,
}

impl Experiment {
    pub fn from_trajectory(
        name: impl Into<String>,
        initial: Vec<f64>,
        prepared: Vec<usize>,
        trajectory: &PolarizationTrajectory,
    ) -> Self {
        Self {
            name: name.into(),
            initial,
            prepared,
            tau: trajectory.meta.tau,
            signals: Signals::Sites(trajectory.values.clone()),
            noise: None,
        }
    }

    pub fn cycles(&self) -> usize {
        self.signals.rows().len().saturating_sub(1)
    }

    /// Summed polarization of each group at every cycle.
    pub fn group_sums(&self, layout: &SiteLayout) -> Vec<Vec<f64>> {
        let groups = layout.groups();
        match &self.signals {
            Signals::Sites(rows) => rows
                .iter()
                .map(|v| groups.iter().map(|g| g.iter().map(|&i| v[i]).sum()).collect())
                .collect(),
            Signals::Groups(rows) => rows
                .iter()
                .map(|v| v.iter().zip(groups).map(|(x, g)| x * g.len() as f64).collect())
                .collect(),
        }
    }

    /// Channel values at cycle `m` in the same form as the stored signals,
    /// computed from site polarizations.
    pub(crate) fn channels_of(&self, layout: &SiteLayout, sites: &[f64]) -> Vec<f64> {
        match self.signals {
            Signals::Sites(_) => sites.to_vec(),
            Signals::Groups(_) => layout
                .groups()
                .iter()
                .map(|g| g.iter().map(|&i| sites[i]).sum::<f64>() / g.len() as f64)
                .collect(),
        }
    }
}

/// A set of experiments on one site/label universe.
#[derive(Debug, Clone, PartialEq)]
pub struct BuildUpDataset {
    layout: SiteLayout,
    convention: HamiltonianConvention,
    experiments: Vec<Experiment>,
}

impl BuildUpDataset {
    pub fn new(layout: SiteLayout, convention: HamiltonianConvention, experiments: Vec<Experiment>) -> Result<Self> {
        if experiments.is_empty() {
            return Err(Error::InvalidDataset("no experiments".into()));
        }
        let n = layout.n();
        for e in &experiments {
            let bad = |msg: String| Err(Error::InvalidDataset(format!("experiment '{}': {msg}", e.name)));
            if !(e.tau.is_finite() && e.tau > 0.0) {
                return bad(format!("tau must be positive, got {}", e.tau));
            }
            if e.cycles() < 2 {
                return bad(format!("needs at least 2 cycles, has {}", e.cycles()));
            }
            if e.initial.len() != n {
                return bad(format!("initial vector has {} entries for {n} sites", e.initial.len()));
            }
            if e.initial.iter().any(|p| !(p.is_finite() && p.abs() <= 1.0)) {
                return bad("initial polarizations must lie in [-1, 1]".into());
            }
            if let Some(&s) = e.prepared.iter().find(|&&s| s >= n) {
                return bad(format!("prepared site {s} out of range"));
            }
            let width = match e.signals {
                Signals::Sites(_) => n,
                Signals::Groups(_) => layout.groups().len(),
            };
            if let Some(row) = e.signals.rows().iter().find(|r| r.len() != width) {
                return bad(format!("row has {} channels, expected {width}", row.len()));
            }
            if e.signals.rows().iter().flatten().any(|v| !v.is_finite()) {
                return bad("non-finite signal value".into());
            }
            if let Some(s) = e.noise {
                if !(s.is_finite() && s >= 0.0) {
                    return bad(format!("invalid noise level {s}"));
                }
            }
        }
        Ok(Self {
            layout,
            convention,
            experiments,
        })
    }

    pub fn layout(&self) -> &SiteLayout {
        &self.layout
    }

    pub fn convention(&self) -> &HamiltonianConvention {
        &self.convention
    }

    pub fn experiments(&self) -> &[Experiment] {
        &self.experiments
    }

    pub fn total_cycles(&self) -> usize {
        self.experiments.iter().map(Experiment::cycles).sum()
    }

    pub(crate) fn with_experiments(&self, experiments: Vec<Experiment>) -> Self {
        Self {
            layout: self.layout.clone(),
            convention: self.convention,
            experiments,
        }
    }
}

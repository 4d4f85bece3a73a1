use crate::error::{Error, Result};
use crate::system::SpinSystem;

const SUM_TOLERANCE: f64 = 1e-12;
const NEGATIVE_TOLERANCE: f64 = 1e-14;

/// Diagonal of a density matrix in the product basis.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationState {
    n: usize,
    populations: Vec<f64>,
}

impl PopulationState {
    /// Validates normalization; entries down to -1e-14 are clamped to zero.
    pub fn new(populations: Vec<f64>) -> Result<Self> {
        let dim = populations.len();
        if dim == 0 || !dim.is_power_of_two() {
            return Err(Error::InvalidSystem(format!(
                "population vector length {dim} is not a power of two"
            )));
        }
        let n = dim.trailing_zeros() as usize;
        let mut populations = populations;
        for p in populations.iter_mut() {
            if !p.is_finite() || *p < -NEGATIVE_TOLERANCE {
                return Err(Error::InvalidSystem(format!("invalid population {p}")));
            }
            if *p < 0.0 {
                *p = 0.0;
            }
        }
        let total: f64 = populations.iter().sum();
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidSystem(format!("populations sum to {total}, expected 1")));
        }
        Ok(Self { n, populations })
    }

    /// Product state with per-site polarizations `P_i`:
    /// populations = prod_i (1 +/- P_i)/2.
    pub fn from_polarizations(polarizations: &[f64]) -> Result<Self> {
        for (site, &value) in polarizations.iter().enumerate() {
            if !(value.is_finite() && value.abs() <= 1.0) {
                return Err(Error::InvalidPolarization { site, value });
            }
        }
        let n = polarizations.len();
        let populations = (0..1usize << n)
            .map(|a| {
                polarizations
                    .iter()
                    .enumerate()
                    .map(|(i, p)| if a >> i & 1 == 0 { (1.0 + p) / 2.0 } else { (1.0 - p) / 2.0 })
                    .product()
            })
            .collect();
        Ok(Self { n, populations })
    }

    pub(crate) fn from_raw(n: usize, populations: Vec<f64>) -> Self {
        Self { n, populations }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn populations(&self) -> &[f64] {
        &self.populations
    }

    /// `P_i = 2 <I_iz>` for every site.
    pub fn polarizations(&self) -> Vec<f64> {
        polarizations_of(self.n, &self.populations)
    }
}

pub(crate) fn polarizations_of(n: usize, populations: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for (a, p) in populations.iter().enumerate() {
        for (i, o) in out.iter_mut().enumerate() {
            if a >> i & 1 == 0 {
                *o += p;
            } else {
                *o -= p;
            }
        }
    }
    out
}

/// How the sites are polarized before mixing.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialSpec {
    /// Listed sites fully polarized, all others zero.
    Excite(Vec<usize>),
    /// Listed sites depolarized, all others fully polarized.
    Deplete(Vec<usize>),
    Custom(Vec<f64>),
}

impl InitialSpec {
    pub fn excite_labels(system: &SpinSystem, labels: &[impl AsRef<str>]) -> Result<Self> {
        Ok(Self::Excite(system.layout().resolve(labels)?))
    }

    pub fn deplete_labels(system: &SpinSystem, labels: &[impl AsRef<str>]) -> Result<Self> {
        Ok(Self::Deplete(system.layout().resolve(labels)?))
    }

    pub fn polarizations(&self, n: usize) -> Result<Vec<f64>> {
        let check = |sites: &[usize]| {
            sites
                .iter()
                .find(|&&s| s >= n)
                .map_or(Ok(()), |&site| Err(Error::SiteOutOfRange { site, n }))
        };
        match self {
            InitialSpec::Excite(sites) => {
                check(sites)?;
                Ok((0..n).map(|i| if sites.contains(&i) { 1.0 } else { 0.0 }).collect())
            }
            InitialSpec::Deplete(sites) => {
                check(sites)?;
                Ok((0..n).map(|i| if sites.contains(&i) { 0.0 } else { 1.0 }).collect())
            }
            InitialSpec::Custom(p) => {
                if p.len() != n {
                    return Err(Error::InvalidSystem(format!(
                        "custom polarization vector has {} entries for {n} sites",
                        p.len()
                    )));
                }
                if let Some((site, &value)) = p.iter().enumerate().find(|(_, v)| !(v.is_finite() && v.abs() <= 1.0)) {
                    return Err(Error::InvalidPolarization { site, value });
                }
                Ok(p.clone())
            }
        }
    }
}

pub fn initial_population(system: &SpinSystem, spec: &InitialSpec) -> Result<PopulationState> {
    PopulationState::from_polarizations(&spec.polarizations(system.n())?)
}

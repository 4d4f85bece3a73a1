use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid spin system: {0}")]
    InvalidSystem(String),

    #[error("site {site} out of range for a {n}-spin system")]
    SiteOutOfRange { site: usize, n: usize },

    #[error("{n} spins exceeds the limit of {limit} for this operation")]
    TooManySpins { n: usize, limit: usize },

    #[error("invalid convention: {0}")]
    InvalidConvention(String),

    /// An entry of H couples two total-Mz sectors.
    #[error("hamiltonian entry ({row}, {col}) = {value:e} couples different Mz sectors")]
    SectorLeak { row: usize, col: usize, value: f64 },

    #[error("eigendecomposition failed for the Mz sector with {excitations} flipped spins")]
    Eigen { excitations: usize },

    #[error("density matrix is not hermitian (max deviation {0:e})")]
    NonHermitian(f64),

    #[error("invalid time: {0}")]
    InvalidTime(String),

    #[error("invalid polarization {value} at site {site}: must lie in [-1, 1]")]
    InvalidPolarization { site: usize, value: f64 },

    #[error("invalid projection settings: {0}")]
    InvalidProjection(String),

    #[error("{requested} cycles exceeds the cap of {cap}")]
    CycleCap { requested: usize, cap: usize },

    #[error("empty time grid")]
    EmptyTimeGrid,

    #[error("small-tau model refused: max |J|*tau = {jtau:.3} exceeds {limit}")]
    OutsideSmallTau { jtau: f64, limit: f64 },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("experiment '{experiment}': early window has {cycles} cycles, need at least {required}")]
    WindowTooShort {
        experiment: String,
        cycles: usize,
        required: usize,
    },

    #[error("experiment '{experiment}': early build-up of '{channel}' is non-monotone ({backstep:e} > tolerance {tolerance:e})")]
    NonMonotone {
        experiment: String,
        channel: String,
        backstep: f64,
        tolerance: f64,
    },

    #[error("couplings not identifiable from the given experiments: {}", .pairs.join(", "))]
    Underdetermined { pairs: Vec<String> },

    #[error("estimated |J|*tau = {jtau:.3} for {pair} is outside the short-tau regime (limit {limit}); use a smaller tau")]
    RegimeViolation { pair: String, jtau: f64, limit: f64 },

    #[error("bootstrap: {0}")]
    Bootstrap(String),

    #[error("linear algebra failure: {0}")]
    Numerical(String),

    #[error("{field}: {message}")]
    Config { field: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: String, message: String },

    #[error("{path}: labels differ from the system ({diff})")]
    LabelMismatch { path: String, diff: String },
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    /// True for failures caused by bad input rather than by the numerics.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::SectorLeak { .. }
                | Error::Eigen { .. }
                | Error::NonHermitian(_)
                | Error::WindowTooShort { .. }
                | Error::NonMonotone { .. }
                | Error::Underdetermined { .. }
                | Error::RegimeViolation { .. }
                | Error::Bootstrap(_)
                | Error::Numerical(_)
        )
    }
}

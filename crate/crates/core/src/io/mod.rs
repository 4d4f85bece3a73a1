//! File formats: spin-system and scenario configs, trajectory CSVs with
//! metadata sidecars, fit manifests and estimate reports.
//!
//! All structured-text files are TOML and carry a `schema` tag; loaders
//! refuse unknown tags and unknown keys.

mod manifest;
mod report;
mod scenario;
mod system_file;
mod trajectory;

pub use manifest::{load_manifest, BootstrapSection, FitManifest, ManifestExperiment, RefineSection, MANIFEST_SCHEMA};
pub use report::{estimate_csv, estimate_report, matrix_csv, uncertainty_csv};
pub use scenario::{InitialSection, Mode, OperatorSection, ScenarioConfig, TimeGrid, SCENARIO_SCHEMA};
pub use system_file::{load_system, parse_system, resolve_system, system_to_toml, SYSTEM_SCHEMA};
pub use trajectory::{
    coherent_csv, read_trajectory, sidecar_path, trajectory_csv, trajectory_sidecar, write_file, LoadedTrajectory,
    TrajectorySidecar, TRAJECTORY_SCHEMA,
};

use std::path::Path;

use crate::error::{Error, Result};

pub(crate) fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

pub(crate) fn parse_toml<T: serde::de::DeserializeOwned>(text: &str, origin: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| Error::Format {
        path: origin.to_string(),
        message: e.to_string().trim_end().to_string(),
    })
}

pub(crate) fn check_schema(found: &str, expected: &str, origin: &str) -> Result<()> {
    if found != expected {
        return Err(Error::Format {
            path: origin.to_string(),
            message: format!("unsupported schema '{found}', expected '{expected}'"),
        });
    }
    Ok(())
}

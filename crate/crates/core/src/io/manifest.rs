use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::{check_schema, parse_toml, read_text, read_trajectory, resolve_system};
use crate::error::{Error, Result};
use crate::inversion::{BuildUpDataset, Experiment, Signals};
use crate::system::{HamiltonianConvention, SpinSystem};

pub const MANIFEST_SCHEMA: &str = "spinzeno-manifest/1";

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestFile {
    schema: String,
    system: String,
    #[serde(default)]
    experiment: Vec<ManifestExperiment>,
    #[serde(default)]
    refine: Option<RefineSection>,
    #[serde(default)]
    bootstrap: Option<BootstrapSection>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestExperiment {
    pub file: PathBuf,
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub excite: Option<Vec<String>>,
    #[serde(default)]
    pub deplete: Option<Vec<String>>,
    #[serde(default)]
    pub polarizations: Option<Vec<f64>>,
    pub tau_s: f64,
    /// Use only the first `cycles` projections of the file.
    #[serde(default)]
    pub cycles: Option<usize>,
    /// Per-site noise standard deviation, when known.
    #[serde(default)]
    pub noise: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefineSection {
    #[serde(default = "yes")]
    pub enabled: bool,
    #[serde(default)]
    pub fit_damping: bool,
    #[serde(default)]
    pub max_iterations: Option<usize>,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapSection {
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
}

/// A parsed fit manifest with its trajectories loaded.
///
/// ```toml
/// schema = "spinzeno-manifest/1"
/// system = "pyridine"            # preset name or system file
///
/// [[experiment]]
/// file = "excite-1.csv"
/// excite = ["1", "1'"]
/// tau_s = 0.001
///
/// [refine]                       # optional
/// fit_damping = false
///
/// [bootstrap]                    # optional
/// replicates = 200
/// seed = 7
/// ```
#[derive(Debug, Clone)]
pub struct FitManifest {
    pub path: PathBuf,
    pub system_ref: String,
    pub system: SpinSystem,
    pub convention: HamiltonianConvention,
    pub experiments: Vec<ManifestExperiment>,
    pub dataset: BuildUpDataset,
    pub refine: Option<RefineSection>,
    pub bootstrap: Option<BootstrapSection>,
}

fn label_diff(expected: &[String], found: &[String]) -> String {
    let missing: Vec<&str> = expected.iter().filter(|l| !found.contains(l)).map(|s| s.as_str()).collect();
    let extra: Vec<&str> = found.iter().filter(|l| !expected.contains(l)).map(|s| s.as_str()).collect();
    let mut parts = Vec::new();
    if !missing.is_empty() {
        parts.push(format!("missing [{}]", missing.join(", ")));
    }
    if !extra.is_empty() {
        parts.push(format!("unexpected [{}]", extra.join(", ")));
    }
    if parts.is_empty() {
        parts.push(format!("order [{}] vs expected [{}]", found.join(", "), expected.join(", ")));
    }
    parts.join("; ")
}

pub fn load_manifest(path: &Path) -> Result<FitManifest> {
    let origin = path.display().to_string();
    let file: ManifestFile = parse_toml(&read_text(path)?, &origin)?;
    check_schema(&file.schema, MANIFEST_SCHEMA, &origin)?;
    if file.experiment.is_empty() {
        return Err(Error::config("experiment", "manifest lists no experiments"));
    }
    let base = path.parent().unwrap_or(Path::new("."));
    let (system, convention) = resolve_system(&file.system, Some(base))?;
    let n = system.n();

    let mut experiments = Vec::with_capacity(file.experiment.len());
    for (k, spec) in file.experiment.iter().enumerate() {
        let field = |f: &str| format!("experiment[{k}].{f}");
        let csv_path = base.join(&spec.file);
        let loaded = read_trajectory(&csv_path)?;
        if loaded.kind != "projected" {
            return Err(Error::config(field("file"), format!("'{}' is a {} trajectory, need projected", spec.file.display(), loaded.kind)));
        }
        if loaded.labels != system.labels() {
            return Err(Error::LabelMismatch {
                path: csv_path.display().to_string(),
                diff: label_diff(system.labels(), &loaded.labels),
            });
        }
        if loaded.angular_factor != convention.angular_factor() {
            return Err(Error::config(
                field("file"),
                format!(
                    "angular factor {} differs from the system's {}",
                    loaded.angular_factor,
                    convention.angular_factor()
                ),
            ));
        }
        if !(spec.tau_s.is_finite() && spec.tau_s > 0.0) {
            return Err(Error::config(field("tau_s"), "must be positive"));
        }
        if let Some(t) = loaded.sidecar.as_ref().and_then(|s| s.tau_s) {
            if (t - spec.tau_s).abs() > 1e-12 * t.abs() {
                return Err(Error::config(field("tau_s"), format!("{} disagrees with the file's sidecar ({t})", spec.tau_s)));
            }
        }

        let given = [spec.excite.is_some(), spec.deplete.is_some(), spec.polarizations.is_some()];
        if given.iter().filter(|&&g| g).count() > 1 {
            return Err(Error::config(field("excite"), "give only one of excite, deplete, polarizations"));
        }
        let (initial, prepared) = if let Some(l) = &spec.excite {
            let s = system.layout().resolve(l).map_err(|e| Error::config(field("excite"), e.to_string()))?;
            ((0..n).map(|i| if s.contains(&i) { 1.0 } else { 0.0 }).collect(), s)
        } else if let Some(l) = &spec.deplete {
            let s = system.layout().resolve(l).map_err(|e| Error::config(field("deplete"), e.to_string()))?;
            ((0..n).map(|i| if s.contains(&i) { 0.0 } else { 1.0 }).collect(), s)
        } else if let Some(p) = &spec.polarizations {
            if p.len() != n {
                return Err(Error::config(field("polarizations"), format!("{} values for {n} sites", p.len())));
            }
            (p.clone(), Vec::new())
        } else if let Some(p) = loaded.sidecar.as_ref().and_then(|s| s.initial.clone()) {
            (p, Vec::new())
        } else {
            return Err(Error::config(field("excite"), "no initial state given and no sidecar to take it from"));
        };

        let mut rows = loaded.values;
        if let Some(c) = spec.cycles {
            if c + 1 > rows.len() {
                return Err(Error::config(field("cycles"), format!("{c} cycles requested, file has {}", rows.len().saturating_sub(1))));
            }
            rows.truncate(c + 1);
        }
        if let Some(noise) = spec.noise {
            if !(noise.is_finite() && noise >= 0.0) {
                return Err(Error::config(field("noise"), "must be non-negative"));
            }
        }
        let noise = spec.noise.or_else(|| loaded.sidecar.as_ref().and_then(|s| s.noise));
        let name = spec.name.clone().unwrap_or_else(|| spec.file.display().to_string());
        experiments.push(Experiment {
            name,
            initial,
            prepared,
            tau: spec.tau_s,
            signals: Signals::Sites(rows),
            noise,
        });
    }

    let dataset = BuildUpDataset::new(system.layout().clone(), convention, experiments)?;
    Ok(FitManifest {
        path: path.to_path_buf(),
        system_ref: file.system,
        system,
        convention,
        experiments: file.experiment,
        dataset,
        refine: file.refine,
        bootstrap: file.bootstrap,
    })
}

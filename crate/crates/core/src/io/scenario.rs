use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::system_file::CouplingEntry;
use super::{check_schema, parse_toml, read_text, resolve_system};
use crate::dynamics::{InitialSpec, ProjectionSpec};
use crate::error::{Error, Result};
use crate::hamiltonian::Axis;
use crate::system::{HamiltonianConvention, SpinSystem};

pub const SCENARIO_SCHEMA: &str = "spinzeno-scenario/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Projected,
    Coherent,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    #[serde(default)]
    pub excite: Option<Vec<String>>,
    #[serde(default)]
    pub deplete: Option<Vec<String>>,
    #[serde(default)]
    pub polarizations: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorSection {
    pub site: String,
    pub axis: String,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid {
    #[serde(default)]
    pub start_s: f64,
    pub stop_s: f64,
    pub points: usize,
}

impl TimeGrid {
    pub fn times(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.start_s];
        }
        let step = (self.stop_s - self.start_s) / (self.points - 1) as f64;
        (0..self.points).map(|k| self.start_s + k as f64 * step).collect()
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    schema: String,
    system: String,
    #[serde(default)]
    coupling: Vec<CouplingEntry>,
    mode: Mode,
    #[serde(default)]
    initial: Option<InitialSection>,
    #[serde(default)]
    operator: Option<OperatorSection>,
    #[serde(default)]
    observables: Option<Vec<String>>,
    #[serde(default)]
    tau_s: Option<f64>,
    #[serde(default)]
    cycles: Option<usize>,
    #[serde(default)]
    times: Option<TimeGrid>,
    #[serde(default)]
    fidelity: Option<f64>,
    #[serde(default)]
    damping_per_s: Option<f64>,
    #[serde(default)]
    noise: Option<f64>,
    #[serde(default)]
    output_dir: Option<PathBuf>,
    #[serde(default)]
    name: Option<String>,
    #[serde(default)]
    seed: Option<u64>,
}

/// A validated simulation scenario.
///
/// ```toml
/// schema = "spinzeno-scenario/1"
/// system = "pyridine"
/// mode = "projected"
/// tau_s = 0.0317
/// cycles = 40
/// fidelity = 0.0          # optional
/// damping_per_s = 0.0     # optional
/// noise = 0.01            # optional Gaussian noise per sample
/// seed = 7                # optional noise seed
/// name = "optimal"        # optional output stem
///
/// [initial]
/// excite = ["2", "2'"]
///
/// [[coupling]]            # optional overrides
/// a = "1"
/// b = "1'"
/// j_hz = 0.5
/// ```
///
/// Coherent runs use `operator = { site = "2", axis = "x" }`,
/// `times = { stop_s = 0.15, points = 301 }` and optionally
/// `observables = ["1:x", "3:x"]` in place of the projected fields.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub system_ref: String,
    pub system: SpinSystem,
    pub convention: HamiltonianConvention,
    pub mode: Mode,
    pub initial: Option<InitialSpec>,
    pub operator: Option<(usize, Axis)>,
    pub observables: Vec<(usize, Axis)>,
    pub tau: Option<f64>,
    pub cycles: Option<usize>,
    pub times: Option<TimeGrid>,
    pub projection: ProjectionSpec,
    /// Standard deviation of Gaussian noise added to every sample after the
    /// first.
    pub noise: Option<f64>,
    pub output_dir: Option<PathBuf>,
    pub name: String,
    pub seed: u64,
}

fn forbid<T>(value: &Option<T>, field: &str, mode: &str) -> Result<()> {
    match value {
        Some(_) => Err(Error::config(field, format!("not used in {mode} mode"))),
        None => Ok(()),
    }
}

fn require<T: Clone>(value: &Option<T>, field: &str, mode: &str) -> Result<T> {
    value
        .clone()
        .ok_or_else(|| Error::config(field, format!("required in {mode} mode")))
}

fn parse_site_axis(system: &SpinSystem, text: &str, field: &str) -> Result<(usize, Axis)> {
    let (label, axis) = text
        .rsplit_once(':')
        .ok_or_else(|| Error::config(field, format!("'{text}' should look like <label>:<x|y|z>")))?;
    site_axis(system, label, axis, field)
}

fn site_axis(system: &SpinSystem, label: &str, axis: &str, field: &str) -> Result<(usize, Axis)> {
    let site = system
        .layout()
        .index_of(label)
        .ok_or_else(|| Error::config(field, format!("unknown site label '{label}'")))?;
    let axis = axis.parse::<Axis>().map_err(|e| Error::config(field, e.to_string()))?;
    Ok((site, axis))
}

impl ScenarioConfig {
    pub fn parse(text: &str, origin: &str, base: Option<&Path>) -> Result<Self> {
        let file: ScenarioFile = parse_toml(text, origin)?;
        check_schema(&file.schema, SCENARIO_SCHEMA, origin)?;
        let (mut system, convention) =
            resolve_system(&file.system, base).map_err(|e| match e {
                Error::Config { .. } => e,
                other => Error::config("system", other.to_string()),
            })?;
        for (k, c) in file.coupling.iter().enumerate() {
            let field = format!("coupling[{k}]");
            let i = system.layout().index_of(&c.a).ok_or_else(|| Error::config(&field, format!("unknown label '{}'", c.a)))?;
            let j = system.layout().index_of(&c.b).ok_or_else(|| Error::config(&field, format!("unknown label '{}'", c.b)))?;
            system.set_coupling(i, j, c.j_hz).map_err(|e| Error::config(&field, e.to_string()))?;
        }

        let mut cfg = ScenarioConfig {
            system_ref: file.system.clone(),
            system,
            convention,
            mode: file.mode,
            initial: None,
            operator: None,
            observables: Vec::new(),
            tau: None,
            cycles: None,
            times: None,
            projection: ProjectionSpec::ideal(),
            noise: None,
            output_dir: file.output_dir.map(|d| match base {
                Some(b) if d.is_relative() => b.join(d),
                _ => d,
            }),
            name: file.name.clone().unwrap_or_else(|| "trajectory".into()),
            seed: file.seed.unwrap_or(0),
        };
        if cfg.name.is_empty() || cfg.name.contains(['/', '\\']) {
            return Err(Error::config("name", "must be a plain, non-empty file stem"));
        }

        match file.mode {
            Mode::Projected => {
                forbid(&file.operator, "operator", "projected")?;
                forbid(&file.times, "times", "projected")?;
                forbid(&file.observables, "observables", "projected")?;
                let tau = require(&file.tau_s, "tau_s", "projected")?;
                if !(tau.is_finite() && tau >= 0.0) {
                    return Err(Error::config("tau_s", "must be finite and non-negative"));
                }
                cfg.tau = Some(tau);
                cfg.cycles = Some(require(&file.cycles, "cycles", "projected")?);
                let init = require(&file.initial, "initial", "projected")?;
                cfg.initial = Some(initial_spec(&cfg.system, &init)?);
                cfg.projection = ProjectionSpec::new(file.fidelity.unwrap_or(0.0), file.damping_per_s.unwrap_or(0.0))
                    .map_err(|e| Error::config("fidelity/damping_per_s", e.to_string()))?;
                if let Some(s) = file.noise {
                    if !(s.is_finite() && s >= 0.0) {
                        return Err(Error::config("noise", "must be finite and non-negative"));
                    }
                }
                cfg.noise = file.noise;
            }
            Mode::Coherent => {
                forbid(&file.initial, "initial", "coherent")?;
                forbid(&file.tau_s, "tau_s", "coherent")?;
                forbid(&file.cycles, "cycles", "coherent")?;
                forbid(&file.fidelity, "fidelity", "coherent")?;
                forbid(&file.damping_per_s, "damping_per_s", "coherent")?;
                forbid(&file.noise, "noise", "coherent")?;
                forbid(&file.seed, "seed", "coherent")?;
                let op = require(&file.operator, "operator", "coherent")?;
                let (site, axis) = site_axis(&cfg.system, &op.site, &op.axis, "operator")?;
                cfg.operator = Some((site, axis));
                let grid = require(&file.times, "times", "coherent")?;
                if grid.points == 0 {
                    return Err(Error::config("times.points", "must be at least 1"));
                }
                if !(grid.start_s.is_finite() && grid.stop_s.is_finite()) || grid.stop_s < grid.start_s {
                    return Err(Error::config("times", "need finite start_s <= stop_s"));
                }
                cfg.times = Some(grid);
                cfg.observables = match &file.observables {
                    Some(list) => list
                        .iter()
                        .enumerate()
                        .map(|(k, s)| parse_site_axis(&cfg.system, s, &format!("observables[{k}]")))
                        .collect::<Result<_>>()?,
                    None => (0..cfg.system.n()).map(|i| (i, axis)).collect(),
                };
                if cfg.observables.is_empty() {
                    return Err(Error::config("observables", "empty list"));
                }
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read_text(path)?, &path.display().to_string(), path.parent())
    }
}

fn initial_spec(system: &SpinSystem, init: &InitialSection) -> Result<InitialSpec> {
    let spec = match (&init.excite, &init.deplete, &init.polarizations) {
        (Some(l), None, None) => {
            InitialSpec::excite_labels(system, l).map_err(|e| Error::config("initial.excite", e.to_string()))?
        }
        (None, Some(l), None) => {
            InitialSpec::deplete_labels(system, l).map_err(|e| Error::config("initial.deplete", e.to_string()))?
        }
        (None, None, Some(p)) => InitialSpec::Custom(p.clone()),
        _ => return Err(Error::config("initial", "give exactly one of excite, deplete, polarizations")),
    };
    spec.polarizations(system.n())
        .map_err(|e| Error::config("initial", e.to_string()))?;
    Ok(spec)
}

use std::fmt::Write as _;
use std::path::Path;

use serde::Deserialize;

use super::{check_schema, parse_toml, read_text};
use crate::error::{Error, Result};
use crate::system::{presets, HamiltonianConvention, SpinSystem};

pub const SYSTEM_SCHEMA: &str = "spinzeno-system/1";

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemFile {
    schema: String,
    #[serde(default)]
    angular_factor: Option<f64>,
    labels: Vec<String>,
    #[serde(default)]
    groups: Option<Vec<Vec<String>>>,
    #[serde(default)]
    coupling: Vec<CouplingEntry>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct CouplingEntry {
    pub a: String,
    pub b: String,
    pub j_hz: f64,
}

/// Parses a spin-system file.
///
/// ```toml
/// schema = "spinzeno-system/1"
/// angular_factor = 6.283185307179586   # optional, default 2*pi
/// labels = ["A", "B", "C"]
/// groups = [["A", "B"], ["C"]]         # optional, default one group per site
///
/// [[coupling]]
/// a = "A"
/// b = "C"
/// j_hz = 7.5
/// ```
pub fn parse_system(text: &str, origin: &str) -> Result<(SpinSystem, HamiltonianConvention)> {
    let file: SystemFile = parse_toml(text, origin)?;
    check_schema(&file.schema, SYSTEM_SCHEMA, origin)?;
    let convention = match file.angular_factor {
        Some(f) => HamiltonianConvention::new(f)?,
        None => HamiltonianConvention::default(),
    };
    let labels: Vec<&str> = file.labels.iter().map(String::as_str).collect();
    let groups: Option<Vec<Vec<&str>>> = file
        .groups
        .as_ref()
        .map(|gs| gs.iter().map(|g| g.iter().map(String::as_str).collect()).collect());
    let couplings: Vec<(&str, &str, f64)> =
        file.coupling.iter().map(|c| (c.a.as_str(), c.b.as_str(), c.j_hz)).collect();
    let system = SpinSystem::build(&labels, &couplings, groups.as_deref())?;
    Ok((system, convention))
}

pub fn load_system(path: &Path) -> Result<(SpinSystem, HamiltonianConvention)> {
    parse_system(&read_text(path)?, &path.display().to_string())
}

/// A preset name, or a path to a system file (relative paths are taken
/// from `base`).
pub fn resolve_system(reference: &str, base: Option<&Path>) -> Result<(SpinSystem, HamiltonianConvention)> {
    if let Some(system) = presets::by_name(reference) {
        return Ok((system, HamiltonianConvention::default()));
    }
    let path = match base {
        Some(b) => b.join(reference),
        None => reference.into(),
    };
    if !path.exists() {
        return Err(Error::config(
            "system",
            format!("'{reference}' is neither a preset ({}) nor an existing file", presets::NAMES.join(", ")),
        ));
    }
    load_system(&path)
}

fn quote(s: &str) -> String {
    toml::Value::String(s.to_string()).to_string()
}

pub fn system_to_toml(system: &SpinSystem, convention: &HamiltonianConvention) -> String {
    let labels = system.labels();
    let mut out = String::new();
    let list = |items: &mut dyn Iterator<Item = &String>| items.map(|s| quote(s)).collect::<Vec<_>>().join(", ");
    writeln!(out, "schema = {}", quote(SYSTEM_SCHEMA)).unwrap();
    writeln!(out, "angular_factor = {:?}", convention.angular_factor()).unwrap();
    writeln!(out, "labels = [{}]", list(&mut labels.iter())).unwrap();
    let groups: Vec<String> = system
        .groups()
        .iter()
        .map(|g| format!("[{}]", list(&mut g.iter().map(|&i| &labels[i]))))
        .collect();
    writeln!(out, "groups = [{}]", groups.join(", ")).unwrap();
    for (i, j) in system.coupled_pairs() {
        writeln!(out, "\n[[coupling]]\na = {}\nb = {}\nj_hz = {:?}", quote(&labels[i]), quote(&labels[j]), system.coupling(i, j))
            .unwrap();
    }
    out
}

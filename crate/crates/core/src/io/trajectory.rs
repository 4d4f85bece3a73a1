use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{check_schema, parse_toml, read_text};
use crate::dynamics::{CoherentTrajectory, PolarizationTrajectory};
use crate::error::{Error, Result};
use crate::system::SiteLayout;

pub const TRAJECTORY_SCHEMA: &str = "spinzeno-trajectory/1";
const GROUP_PREFIX: &str = "group:";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectorySidecar {
    pub schema: String,
    pub kind: String,
    pub angular_factor: f64,
    pub labels: Vec<String>,
    pub groups: Vec<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cycles: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fidelity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub damping_per_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_operator: Option<String>,
}

/// `run.csv` -> `run.meta.toml`.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("meta.toml")
}

fn group_labels(layout: &SiteLayout) -> Vec<Vec<String>> {
    layout
        .groups()
        .iter()
        .map(|g| g.iter().map(|&i| layout.labels()[i].clone()).collect())
        .collect()
}

fn write_csv(comment: &str, header: Vec<String>, rows: impl Iterator<Item = Vec<f64>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header).expect("in-memory write");
    for row in rows {
        w.write_record(row.iter().map(|v| format!("{v:?}"))).expect("in-memory write");
    }
    let body = String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 output");
    format!("# {comment}\n{body}")
}

/// CSV text of a projected trajectory: `time_s`, one column per site, then
/// one `group:<name>` column per equivalence group holding the group mean.
pub fn trajectory_csv(traj: &PolarizationTrajectory, layout: &SiteLayout) -> String {
    let mut header = vec!["time_s".to_string()];
    header.extend(layout.labels().iter().cloned());
    header.extend((0..layout.groups().len()).map(|g| format!("{GROUP_PREFIX}{}", layout.group_name(g))));
    let rows = traj.times.iter().zip(&traj.values).map(|(t, v)| {
        let mut row = vec![*t];
        row.extend(v);
        row.extend(layout.groups().iter().map(|g| g.iter().map(|&i| v[i]).sum::<f64>() / g.len() as f64));
        row
    });
    let comment = format!(
        "{TRAJECTORY_SCHEMA} kind=projected angular_factor={}",
        traj.meta.angular_factor
    );
    write_csv(&comment, header, rows)
}

pub fn trajectory_sidecar(traj: &PolarizationTrajectory, layout: &SiteLayout) -> TrajectorySidecar {
    TrajectorySidecar {
        schema: TRAJECTORY_SCHEMA.into(),
        kind: "projected".into(),
        angular_factor: traj.meta.angular_factor,
        labels: layout.labels().to_vec(),
        groups: group_labels(layout),
        tau_s: Some(traj.meta.tau),
        cycles: Some(traj.meta.cycles),
        fidelity: Some(traj.meta.fidelity),
        damping_per_s: Some(traj.meta.damping),
        noise: None,
        seed: None,
        initial: traj.values.first().cloned(),
        initial_operator: None,
    }
}

/// CSV text of a coherent run, one `<label>:<axis>` column per observable,
/// with its sidecar.
pub fn coherent_csv(
    traj: &CoherentTrajectory,
    layout: &SiteLayout,
    angular_factor: f64,
    initial_operator: &str,
) -> (String, TrajectorySidecar) {
    let mut header = vec!["time_s".to_string()];
    header.extend(traj.observables.iter().map(|(s, a)| format!("{}:{a}", layout.labels()[*s])));
    let rows = traj.times.iter().zip(&traj.values).map(|(t, v)| {
        let mut row = vec![*t];
        row.extend(v);
        row
    });
    let comment = format!("{TRAJECTORY_SCHEMA} kind=coherent angular_factor={angular_factor}");
    let sidecar = TrajectorySidecar {
        schema: TRAJECTORY_SCHEMA.into(),
        kind: "coherent".into(),
        angular_factor,
        labels: layout.labels().to_vec(),
        groups: group_labels(layout),
        tau_s: None,
        cycles: None,
        fidelity: None,
        damping_per_s: None,
        noise: None,
        seed: None,
        initial: None,
        initial_operator: Some(initial_operator.into()),
    };
    (write_csv(&comment, header, rows), sidecar)
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.display().to_string(),
            source,
        })?;
    }
    std::fs::write(path, contents).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

impl TrajectorySidecar {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("sidecar serializes")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedTrajectory {
    pub kind: String,
    pub angular_factor: f64,
    /// Site columns in file order.
    pub labels: Vec<String>,
    pub times: Vec<f64>,
    /// `[row][site]`.
    pub values: Vec<Vec<f64>>,
    pub sidecar: Option<TrajectorySidecar>,
}

fn format_error(path: &Path, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.display().to_string(),
        message: message.into(),
    }
}

/// Reads a trajectory CSV and, when present, its sidecar. Group columns are
/// skipped; they are derived data.
pub fn read_trajectory(path: &Path) -> Result<LoadedTrajectory> {
    let text = read_text(path)?;
    let first = text.lines().next().unwrap_or("");
    let tag = first
        .strip_prefix('#')
        .ok_or_else(|| format_error(path, "missing '# spinzeno-trajectory/...' header comment"))?;
    let mut fields = tag.split_whitespace();
    let origin = path.display().to_string();
    check_schema(fields.next().unwrap_or(""), TRAJECTORY_SCHEMA, &origin)?;
    let mut kind = None;
    let mut angular_factor = None;
    for f in fields {
        match f.split_once('=') {
            Some(("kind", v)) => kind = Some(v.to_string()),
            Some(("angular_factor", v)) => {
                angular_factor = Some(v.parse::<f64>().map_err(|_| format_error(path, format!("bad angular_factor '{v}'")))?)
            }
            _ => return Err(format_error(path, format!("unknown header field '{f}'"))),
        }
    }
    let kind = kind.ok_or_else(|| format_error(path, "header comment lacks kind="))?;
    let angular_factor = angular_factor.ok_or_else(|| format_error(path, "header comment lacks angular_factor="))?;

    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| format_error(path, e.to_string()))?.clone();
    if header.get(0) != Some("time_s") {
        return Err(format_error(path, "first column must be time_s"));
    }
    let site_cols: Vec<usize> = (1..header.len()).filter(|&c| !header[c].starts_with(GROUP_PREFIX)).collect();
    let labels: Vec<String> = site_cols.iter().map(|&c| header[c].to_string()).collect();

    let mut times = Vec::new();
    let mut values = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| format_error(path, e.to_string()))?;
        let parse = |c: usize| -> Result<f64> {
            record
                .get(c)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .ok_or_else(|| format_error(path, format!("data row {}: column {} is not a finite number", line + 1, &header[c])))
        };
        times.push(parse(0)?);
        values.push(site_cols.iter().map(|&c| parse(c)).collect::<Result<Vec<_>>>()?);
    }

    let side = sidecar_path(path);
    let sidecar = if side.exists() {
        let s: TrajectorySidecar = parse_toml(&read_text(&side)?, &side.display().to_string())?;
        check_schema(&s.schema, TRAJECTORY_SCHEMA, &side.display().to_string())?;
        if s.kind != kind || s.angular_factor != angular_factor || (kind == "projected" && s.labels != labels) {
            return Err(format_error(&side, "sidecar disagrees with its CSV (kind, angular_factor or labels)"));
        }
        Some(s)
    } else {
        None
    };

    Ok(LoadedTrajectory {
        kind,
        angular_factor,
        labels,
        times,
        values,
        sidecar,
    })
}

use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::inversion::{CouplingEstimate, UncertaintyReport};

pub const ESTIMATE_SCHEMA: &str = "spinzeno-estimate/1";
pub const MATRIX_SCHEMA: &str = "spinzeno-matrix/1";

fn csv_text(comment: &str, header: &[&str], rows: Vec<Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    let body = String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 output");
    format!("# {comment}\n{body}")
}

/// Human-readable summary of an estimate.
pub fn estimate_report(estimate: &CouplingEstimate, uncertainty: Option<&UncertaintyReport>, angular_factor: f64) -> String {
    let d = &estimate.diagnostics;
    let mut out = String::new();
    writeln!(out, "schema: {ESTIMATE_SCHEMA}").unwrap();
    writeln!(out, "angular_factor: {angular_factor}").unwrap();
    writeln!(out, "method: {}", estimate.method).unwrap();
    writeln!(out).unwrap();
    writeln!(out, "{:<16} {:>12} {:>12}{}", "pair", "|J| (Hz)", "std err", if uncertainty.is_some() { "    bootstrap" } else { "" }).unwrap();
    for (k, p) in estimate.pairs.iter().enumerate() {
        write!(out, "{:<16} {:>12.4} {:>12.4}", p.label, p.value, p.std_error).unwrap();
        if let Some(u) = uncertainty {
            write!(out, " {:>12.4}", u.pairs[k].2).unwrap();
        }
        writeln!(out).unwrap();
    }
    if let Some((l, se)) = estimate.damping {
        writeln!(out, "{:<16} {:>12.4} {:>12.4}", "damping (1/s)", l, se).unwrap();
    }
    writeln!(out).unwrap();
    writeln!(out, "residual norm: {:e}", d.residual_norm).unwrap();
    writeln!(out, "cycles used: {}", d.cycles_used).unwrap();
    if estimate.method == crate::inversion::Method::LeastSquares {
        writeln!(out, "iterations: {} (converged: {})", d.iterations, d.converged).unwrap();
    }
    if !d.at_bound.is_empty() {
        writeln!(out, "at a parameter bound: {}", d.at_bound.join(", ")).unwrap();
    }
    if let Some(m) = d.self_decay_mismatch {
        writeln!(out, "self-decay consistency: max relative mismatch {:.3}", m).unwrap();
    }
    if let Some(u) = uncertainty {
        writeln!(out, "bootstrap: {} replicates, seed {}, {} failed", u.replicates, u.seed, u.failed).unwrap();
    }
    out
}

/// `pair,value_hz,std_error_hz,method` rows.
pub fn estimate_csv(estimate: &CouplingEstimate, angular_factor: f64) -> String {
    let mut rows: Vec<Vec<String>> = estimate
        .pairs
        .iter()
        .map(|p| vec![p.label.clone(), format!("{:?}", p.value), format!("{:?}", p.std_error), estimate.method.to_string()])
        .collect();
    if let Some((l, se)) = estimate.damping {
        rows.push(vec!["damping_per_s".into(), format!("{l:?}"), format!("{se:?}"), estimate.method.to_string()]);
    }
    csv_text(
        &format!("{ESTIMATE_SCHEMA} angular_factor={angular_factor}"),
        &["pair", "value_hz", "std_error_hz", "method"],
        rows,
    )
}

pub fn uncertainty_csv(report: &UncertaintyReport, angular_factor: f64) -> String {
    let rows = report
        .pairs
        .iter()
        .map(|(label, value, sd)| vec![label.clone(), format!("{value:?}"), format!("{sd:?}")])
        .collect();
    csv_text(
        &format!(
            "{ESTIMATE_SCHEMA} kind=bootstrap angular_factor={angular_factor} replicates={} seed={}",
            report.replicates, report.seed
        ),
        &["pair", "value_hz", "bootstrap_std_hz"],
        rows,
    )
}

/// Square matrix with site labels on both axes.
pub fn matrix_csv(labels: &[String], matrix: &DMatrix<f64>, kind: &str, angular_factor: f64) -> String {
    let mut header = vec![""];
    header.extend(labels.iter().map(|s| s.as_str()));
    let rows = labels
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let mut r = vec![l.clone()];
            r.extend((0..labels.len()).map(|j| format!("{:?}", matrix[(i, j)])));
            r
        })
        .collect();
    csv_text(&format!("{MATRIX_SCHEMA} kind={kind} angular_factor={angular_factor}"), &header, rows)
}

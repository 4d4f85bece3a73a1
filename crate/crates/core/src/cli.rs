//! Command-line front end. `run` is what the binary calls; it takes the
//! output streams as arguments so commands can be driven in-process.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::approx::{equilibrium_prediction, exact_site_kernel, small_tau_kernel};
use crate::dynamics::{evolve_coherent, evolve_projected, initial_population, spectrum, InitialSpec, TransferKernel};
use crate::error::{Error, Result};
use crate::inversion::{
    bootstrap_uncertainty, estimate_couplings_shorttau, refine_fit, BootstrapOptions, CouplingEstimate, RefineOptions,
    ShortTauOptions, UncertaintyReport,
};
use crate::io::{
    coherent_csv, estimate_csv, estimate_report, load_manifest, matrix_csv, resolve_system, sidecar_path, trajectory_csv,
    trajectory_sidecar, uncertainty_csv, write_file, Mode, ScenarioConfig,
};
use crate::system::{presets, SpinSystem};

/// Default output directory when neither the command line nor the config
/// names one.
pub const OUTPUT_DIR_ENV: &str = "SPINZENO_OUTPUT_DIR";

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "spinzeno", version, about = "Spin polarization transfer under repeated projective measurements")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one scenario and write its trajectory CSV plus metadata sidecar.
    Simulate(SimulateArgs),
    /// Run a projected scenario at several tau values over a fixed total time.
    SweepTau(SweepArgs),
    /// Extract couplings from the trajectories listed in a manifest.
    Fit(FitArgs),
    /// Print the equipartition asymptotes for an initial state.
    Predict(PredictArgs),
    /// List the built-in spin systems.
    PresetList,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Scenario config (TOML).
    config: PathBuf,
    /// Output directory [default: config output_dir, then $SPINZENO_OUTPUT_DIR, then .]
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// Projected-mode scenario config; its tau_s and cycles are replaced.
    config: PathBuf,
    /// Comma-separated tau values in milliseconds (at least two).
    #[arg(long, value_delimiter = ',', required = true)]
    tau_ms: Vec<f64>,
    /// Total mixing time in seconds [default: tau_s * cycles from the config]
    #[arg(long)]
    total_time_s: Option<f64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FitArgs {
    /// Experiment manifest (TOML).
    manifest: PathBuf,
    /// Refine the short-tau estimate against the exact forward model.
    #[arg(long)]
    refine: bool,
    /// Also fit a damping rate (implies --refine).
    #[arg(long)]
    fit_damping: bool,
    /// Bootstrap replicates for standard errors (at least 10).
    #[arg(long)]
    bootstrap: Option<usize>,
    /// Bootstrap seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory [default: $SPINZENO_OUTPUT_DIR, then .]
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PredictArgs {
    /// Preset name or system file.
    #[arg(long, default_value = "pyridine")]
    system: String,
    /// Comma-separated labels of fully polarized sites.
    #[arg(long, value_delimiter = ',', conflicts_with_all = ["deplete", "polarizations"])]
    excite: Option<Vec<String>>,
    /// Comma-separated labels of depolarized sites (others fully polarized).
    #[arg(long, value_delimiter = ',', conflicts_with = "polarizations")]
    deplete: Option<Vec<String>>,
    /// Comma-separated per-site polarizations.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    polarizations: Option<Vec<f64>>,
    /// Also write the exact and small-tau single-cycle site kernels at this tau.
    #[arg(long)]
    kernel_tau_ms: Option<f64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
                    let _ = write!(out, "{}", e.render());
                    if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand {
                        EXIT_VALIDATION
                    } else {
                        EXIT_OK
                    }
                }
                _ => {
                    let _ = write!(err, "{}", e.render());
                    EXIT_VALIDATION
                }
            };
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => cmd_simulate(&a),
        Command::SweepTau(a) => cmd_sweep_tau(&a),
        Command::Fit(a) => cmd_fit(&a),
        Command::Predict(a) => cmd_predict(&a),
        Command::PresetList => Ok(preset_list()),
    };
    match result {
        Ok(text) => {
            let _ = out.write_all(text.as_bytes());
            EXIT_OK
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            if e.is_validation() {
                EXIT_VALIDATION
            } else {
                EXIT_NUMERICAL
            }
        }
    }
}

fn output_dir(flag: Option<&PathBuf>, config: Option<&PathBuf>) -> PathBuf {
    flag.cloned()
        .or_else(|| config.cloned())
        .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn write_trajectory_pair(dir: &Path, stem: &str, csv: &str, sidecar: &str) -> Result<PathBuf> {
    let path = dir.join(format!("{stem}.csv"));
    write_file(&path, csv)?;
    write_file(&sidecar_path(&path), sidecar)?;
    Ok(path)
}

fn cmd_simulate(args: &SimulateArgs) -> Result<String> {
    let cfg = ScenarioConfig::load(&args.config)?;
    let dir = output_dir(args.output_dir.as_ref(), cfg.output_dir.as_ref());
    let layout = cfg.system.layout();
    let mut out = String::new();
    match cfg.mode {
        Mode::Projected => {
            let tau = cfg.tau.expect("validated");
            let cycles = cfg.cycles.expect("validated");
            let initial = cfg.initial.as_ref().expect("validated");
            let kernel = TransferKernel::from_spectrum(&spectrum(&cfg.system, &cfg.convention)?, tau)?;
            let mut traj = evolve_projected(&kernel, &initial_population(&cfg.system, initial)?, cycles, &cfg.projection)?;
            let mut sidecar = trajectory_sidecar(&traj, layout);
            if let Some(sigma) = cfg.noise {
                add_noise(&mut traj.values, sigma, cfg.seed)?;
                sidecar.noise = Some(sigma);
                sidecar.seed = Some(cfg.seed);
            }
            let path = write_trajectory_pair(&dir, &cfg.name, &trajectory_csv(&traj, layout), &sidecar.to_toml())?;
            writeln!(out, "wrote {}", path.display()).unwrap();
            writeln!(out, "final polarizations after {cycles} cycles:").unwrap();
            for (label, v) in layout.labels().iter().zip(traj.last()) {
                writeln!(out, "  {label:<6} {v:.6}").unwrap();
            }
        }
        Mode::Coherent => {
            let (site, axis) = cfg.operator.expect("validated");
            let times = cfg.times.as_ref().expect("validated").times();
            let traj = evolve_coherent(&cfg.system, &cfg.convention, (site, axis), &times, &cfg.observables)?;
            let op = format!("{}:{axis}", layout.labels()[site]);
            let (csv, sidecar) = coherent_csv(&traj, layout, cfg.convention.angular_factor(), &op);
            let path = write_trajectory_pair(&dir, &cfg.name, &csv, &sidecar.to_toml())?;
            writeln!(out, "wrote {} ({} time points)", path.display(), times.len()).unwrap();
        }
    }
    Ok(out)
}

/// Adds seeded Gaussian noise to every row after the first.
fn add_noise(values: &mut [Vec<f64>], sigma: f64, seed: u64) -> Result<()> {
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::config("noise", e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for row in values.iter_mut().skip(1) {
        for v in row.iter_mut() {
            *v += normal.sample(&mut rng);
        }
    }
    Ok(())
}

/// Summary of one entry of a tau sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub tau: f64,
    pub cycles: usize,
    /// Polarization moved by the end, relative to what full equipartition
    /// would move: `sum_i |P_i(M) - P_i(0)| / sum_i |P_eq - P_i(0)|`.
    pub transferred_fraction: f64,
    /// `max_i |P_i(M) - P_eq|`.
    pub equipartition_distance: f64,
    /// Site-steps that move away from the equipartition value.
    pub monotonicity_violations: usize,
}

/// Summary statistics of a projected trajectory against its equipartition
/// value.
pub fn sweep_row(values: &[Vec<f64>], tau: f64) -> SweepRow {
    let p0 = &values[0];
    let end = values.last().expect("trajectory has its initial row");
    let eq = p0.iter().sum::<f64>() / p0.len() as f64;
    let moved: f64 = end.iter().zip(p0).map(|(e, s)| (e - s).abs()).sum();
    let possible: f64 = p0.iter().map(|s| (eq - s).abs()).sum();
    let violations = values
        .windows(2)
        .map(|w| {
            w[0].iter()
                .zip(&w[1])
                .filter(|(a, b)| (*b - eq).abs() > (*a - eq).abs() + 1e-9)
                .count()
        })
        .sum();
    SweepRow {
        tau,
        cycles: values.len() - 1,
        transferred_fraction: if possible > 0.0 { moved / possible } else { 0.0 },
        equipartition_distance: end.iter().map(|e| (e - eq).abs()).fold(0.0, f64::max),
        monotonicity_violations: violations,
    }
}

fn cmd_sweep_tau(args: &SweepArgs) -> Result<String> {
    let cfg = ScenarioConfig::load(&args.config)?;
    if cfg.mode != Mode::Projected {
        return Err(Error::config("mode", "sweep-tau needs a projected scenario"));
    }
    if cfg.noise.is_some() {
        return Err(Error::config("noise", "not supported by sweep-tau"));
    }
    if args.tau_ms.len() < 2 {
        return Err(Error::config("tau-ms", "need at least two tau values"));
    }
    if let Some(t) = args.tau_ms.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
        return Err(Error::config("tau-ms", format!("{t} is not a positive duration")));
    }
    let total = args
        .total_time_s
        .unwrap_or_else(|| cfg.tau.expect("validated") * cfg.cycles.expect("validated") as f64);
    if !(total.is_finite() && total > 0.0) {
        return Err(Error::config("total-time-s", "must be positive"));
    }
    let plan: Vec<(f64, usize)> = args
        .tau_ms
        .iter()
        .map(|&ms| {
            let tau = ms * 1e-3;
            (tau, ((total / tau).round() as usize).max(1))
        })
        .collect();

    let dir = output_dir(args.output_dir.as_ref(), cfg.output_dir.as_ref());
    let spec = spectrum(&cfg.system, &cfg.convention)?;
    let initial = initial_population(&cfg.system, cfg.initial.as_ref().expect("validated"))?;
    let layout = cfg.system.layout();
    let runs = plan
        .par_iter()
        .map(|&(tau, cycles)| {
            let kernel = TransferKernel::from_spectrum(&spec, tau)?;
            evolve_projected(&kernel, &initial, cycles, &cfg.projection)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut out = String::new();
    let mut summary = String::from("tau_s,cycles,transferred_fraction,equipartition_distance,monotonicity_violations\n");
    writeln!(out, "{:>12} {:>8} {:>12} {:>12} {:>10}", "tau (ms)", "cycles", "transferred", "eq. dist", "violations").unwrap();
    for (k, traj) in runs.iter().enumerate() {
        let stem = format!("{}_tau{k}", cfg.name);
        write_trajectory_pair(&dir, &stem, &trajectory_csv(traj, layout), &trajectory_sidecar(traj, layout).to_toml())?;
        let row = sweep_row(&traj.values, traj.meta.tau);
        writeln!(
            out,
            "{:>12.4} {:>8} {:>12.6} {:>12.6} {:>10}",
            row.tau * 1e3,
            row.cycles,
            row.transferred_fraction,
            row.equipartition_distance,
            row.monotonicity_violations
        )
        .unwrap();
        writeln!(
            summary,
            "{:?},{},{:?},{:?},{}",
            row.tau, row.cycles, row.transferred_fraction, row.equipartition_distance, row.monotonicity_violations
        )
        .unwrap();
    }
    let path = dir.join(format!("{}_sweep.csv", cfg.name));
    let summary = format!(
        "# spinzeno-sweep/1 angular_factor={}\n{summary}",
        cfg.convention.angular_factor()
    );
    write_file(&path, &summary)?;
    writeln!(out, "wrote {}", path.display()).unwrap();
    Ok(out)
}

/// RMS of the member-pair couplings of each group pair, in the order the
/// estimators report them.
pub fn group_rms_couplings(system: &SpinSystem) -> Vec<f64> {
    let groups = system.groups();
    let mut out = Vec::new();
    for a in 0..groups.len() {
        for b in a + 1..groups.len() {
            let mut sum = 0.0;
            for &i in &groups[a] {
                for &j in &groups[b] {
                    sum += system.coupling(i, j).powi(2);
                }
            }
            out.push((sum / (groups[a].len() * groups[b].len()) as f64).sqrt());
        }
    }
    out
}

/// Runs the fit pipeline described by a manifest; flags override the
/// manifest's optional sections.
pub fn fit_manifest(
    manifest: &crate::io::FitManifest,
    refine: bool,
    fit_damping: bool,
    bootstrap: Option<(usize, u64)>,
) -> Result<(CouplingEstimate, Option<UncertaintyReport>)> {
    let short = ShortTauOptions::default();
    let mut estimate = estimate_couplings_shorttau(&manifest.dataset, &short)?;
    let section = manifest.refine.as_ref().filter(|r| r.enabled);
    let fit_damping = fit_damping || section.is_some_and(|r| r.fit_damping);
    let mut refine_opts = RefineOptions {
        fit_damping,
        ..Default::default()
    };
    if let Some(m) = section.and_then(|r| r.max_iterations) {
        refine_opts.max_iterations = m;
    }
    if refine || fit_damping || section.is_some() {
        estimate = refine_fit(&manifest.dataset, &estimate, &refine_opts)?;
    }
    let boot = bootstrap.or_else(|| manifest.bootstrap.as_ref().map(|b| (b.replicates, b.seed)));
    let uncertainty = match boot {
        Some((replicates, seed)) => Some(bootstrap_uncertainty(
            &manifest.dataset,
            &estimate,
            &BootstrapOptions {
                replicates,
                seed,
                short_tau: short,
                refine: refine_opts,
            },
        )?),
        None => None,
    };
    Ok((estimate, uncertainty))
}

fn cmd_fit(args: &FitArgs) -> Result<String> {
    let manifest = load_manifest(&args.manifest)?;
    let boot = match (args.bootstrap, args.seed) {
        (Some(n), seed) => Some((n, seed.unwrap_or(0))),
        (None, Some(seed)) => manifest.bootstrap.as_ref().map(|b| (b.replicates, seed)),
        (None, None) => None,
    };
    let (estimate, uncertainty) = fit_manifest(&manifest, args.refine, args.fit_damping, boot)?;
    let factor = manifest.convention.angular_factor();

    let dir = output_dir(args.output_dir.as_ref(), None);
    let stem = args
        .manifest
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "fit".into());
    let report = estimate_report(&estimate, uncertainty.as_ref(), factor);
    write_file(&dir.join(format!("{stem}_estimate.txt")), &report)?;
    write_file(&dir.join(format!("{stem}_estimate.csv")), &estimate_csv(&estimate, factor))?;
    if let Some(u) = &uncertainty {
        write_file(&dir.join(format!("{stem}_bootstrap.csv")), &uncertainty_csv(u, factor))?;
    }

    let mut out = report;
    if manifest.system_ref == "pyridine" {
        let reference = group_rms_couplings(&presets::pyridine());
        writeln!(out, "\ncomparison with the literature couplings (group RMS):").unwrap();
        writeln!(out, "{:<16} {:>10} {:>10} {:>9}", "pair", "estimate", "reference", "rel. dev").unwrap();
        for (p, r) in estimate.pairs.iter().zip(reference) {
            writeln!(out, "{:<16} {:>10.3} {:>10.3} {:>8.2}%", p.label, p.value, r, 100.0 * (p.value / r - 1.0)).unwrap();
        }
    }
    if estimate.has_warnings() {
        writeln!(out, "\nwarning: refinement did not converge or hit a bound; see diagnostics above").unwrap();
    }
    writeln!(out, "wrote {}", dir.join(format!("{stem}_estimate.csv")).display()).unwrap();
    Ok(out)
}

fn cmd_predict(args: &PredictArgs) -> Result<String> {
    let (system, convention) = resolve_system(&args.system, None)?;
    let n = system.n();
    let spec = match (&args.excite, &args.deplete, &args.polarizations) {
        (Some(l), _, _) => InitialSpec::excite_labels(&system, l).map_err(|e| Error::config("excite", e.to_string()))?,
        (_, Some(l), _) => InitialSpec::deplete_labels(&system, l).map_err(|e| Error::config("deplete", e.to_string()))?,
        (_, _, Some(p)) => InitialSpec::Custom(p.clone()),
        _ => return Err(Error::config("initial", "give one of --excite, --deplete, --polarizations")),
    };
    let initial = spec.polarizations(n).map_err(|e| Error::config("initial", e.to_string()))?;
    let pred = equilibrium_prediction(&initial, system.groups());

    let layout = system.layout();
    let mut out = String::new();
    writeln!(out, "equipartition asymptote: {:.6}", pred.asymptote).unwrap();
    writeln!(out, "sites:").unwrap();
    for (l, v) in layout.labels().iter().zip(&pred.sites) {
        writeln!(out, "  {l:<8} {v:.6}").unwrap();
    }
    writeln!(out, "groups:").unwrap();
    for (g, v) in pred.groups.iter().enumerate() {
        writeln!(out, "  {:<8} {v:.6}", layout.group_name(g)).unwrap();
    }
    if !system.is_connected() {
        writeln!(out, "warning: the coupling graph is disconnected; each component equilibrates separately").unwrap();
    }

    if let Some(ms) = args.kernel_tau_ms {
        if !(ms.is_finite() && ms >= 0.0) {
            return Err(Error::config("kernel-tau-ms", "must be non-negative"));
        }
        let tau = ms * 1e-3;
        let dir = output_dir(args.output_dir.as_ref(), None);
        let exact = exact_site_kernel(&TransferKernel::from_spectrum(&spectrum(&system, &convention)?, tau)?)?;
        let f = convention.angular_factor();
        let exact_path = dir.join("kernel_exact.csv");
        write_file(&exact_path, &matrix_csv(layout.labels(), &exact, "exact", f))?;
        writeln!(out, "wrote {}", exact_path.display()).unwrap();
        match small_tau_kernel(&system, tau, &convention) {
            Ok(model) => {
                let path = dir.join("kernel_small_tau.csv");
                write_file(&path, &matrix_csv(layout.labels(), &model.matrix, "small_tau", f))?;
                writeln!(out, "wrote {} (max |J|*tau = {:.4}, {:?})", path.display(), model.max_jtau, model.regime).unwrap();
            }
            Err(e) => writeln!(out, "small-tau kernel not written: {e}").unwrap(),
        }
    }
    Ok(out)
}

fn preset_list() -> String {
    let mut out = String::new();
    for name in presets::NAMES {
        writeln!(out, "{name:<10} {}", presets::describe(name).unwrap_or("")).unwrap();
    }
    out
}

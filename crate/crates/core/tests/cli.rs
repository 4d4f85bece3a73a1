mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use common::count_extrema;
use spinzeno::io::read_trajectory;
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_spinzeno");

fn spinzeno(args: &[&str], cwd: &Path) -> Output {
    Command::new(BIN)
        .args(args)
        .current_dir(cwd)
        .env_remove("SPINZENO_OUTPUT_DIR")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn projected(tau_s: f64, cycles: usize, initial: &str, name: &str) -> String {
    format!(
        "schema = \"spinzeno-scenario/1\"\nsystem = \"pyridine\"\nmode = \"projected\"\ntau_s = {tau_s:?}\ncycles = {cycles}\nname = \"{name}\"\n\n[initial]\n{initial}\n"
    )
}

fn column(values: &[Vec<f64>], i: usize) -> Vec<f64> {
    values.iter().map(|r| r[i]).collect()
}

fn csv_rows(path: &Path) -> Vec<csv::StringRecord> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path).unwrap();
    r.records().map(|x| x.unwrap()).collect()
}

#[test]
fn simulate_reaches_equipartition() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "opt.toml", &projected(0.0317, 40, "excite = [\"2\", \"2'\"]", "optimal"));
    let o = spinzeno(&["simulate", cfg.to_str().unwrap(), "--output-dir", "out"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("optimal.csv"));
    let t = read_trajectory(&dir.path().join("out/optimal.csv")).unwrap();
    assert_eq!(t.values.len(), 41);
    assert!(t.values[40].iter().all(|v| (0.38..=0.42).contains(v)), "{:?}", t.values[40]);
    let side = t.sidecar.unwrap();
    assert_eq!(side.tau_s, Some(0.0317));
    assert_eq!(side.cycles, Some(40));
}

#[test]
fn simulate_is_byte_deterministic() {
    let dir = TempDir::new().unwrap();
    let text = projected(0.0127, 60, "deplete = [\"1\", \"1'\"]", "run").replace("\n\n[initial]", "\nnoise = 0.01\nseed = 42\n\n[initial]");
    let cfg = write(dir.path(), "run.toml", &text);
    for out in ["a", "b"] {
        let o = spinzeno(&["simulate", cfg.to_str().unwrap(), "--output-dir", out], dir.path());
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    for f in ["run.csv", "run.meta.toml"] {
        let a = fs::read(dir.path().join("a").join(f)).unwrap();
        let b = fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
    let side = fs::read_to_string(dir.path().join("a/run.meta.toml")).unwrap();
    assert!(side.contains("noise = 0.01") && side.contains("seed = 42"), "{side}");

    let other = write(dir.path(), "other.toml", &text.replace("seed = 42", "seed = 43"));
    let o = spinzeno(&["simulate", other.to_str().unwrap(), "--output-dir", "c"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert_ne!(fs::read(dir.path().join("a/run.csv")).unwrap(), fs::read(dir.path().join("c/run.csv")).unwrap());
}

#[test]
fn coherent_csv_oscillates() {
    let dir = TempDir::new().unwrap();
    let coherent = |stop: f64, points: usize, name: &str| {
        format!(
            "schema = \"spinzeno-scenario/1\"\nsystem = \"pyridine\"\nmode = \"coherent\"\nname = \"{name}\"\noperator = {{ site = \"2\", axis = \"x\" }}\ntimes = {{ stop_s = {stop:?}, points = {points} }}\n"
        )
    };
    let cfg = write(dir.path(), "coh.toml", &coherent(0.15, 301, "coh"));
    let o = spinzeno(&["simulate", cfg.to_str().unwrap(), "--output-dir", "."], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let t = read_trajectory(&dir.path().join("coh.csv")).unwrap();
    assert_eq!(t.kind, "coherent");
    assert_eq!(t.labels, ["1:x", "1':x", "2:x", "2':x", "3:x"]);
    assert_eq!(t.values.len(), 301);
    assert!((t.values[0][2] - 1.0).abs() < 1e-12);
    for i in [2, 4] {
        assert!(count_extrema(&column(&t.values, i)) >= 3, "{}", t.labels[i]);
    }

    let cfg = write(dir.path(), "long.toml", &coherent(0.6, 1201, "long"));
    assert_eq!(spinzeno(&["simulate", cfg.to_str().unwrap()], dir.path()).status.code(), Some(0));
    let t = read_trajectory(&dir.path().join("long.csv")).unwrap();
    for i in 0..5 {
        assert!(count_extrema(&column(&t.values, i)) >= 3, "{}", t.labels[i]);
    }
}

#[test]
fn zero_tau_gives_constant_columns() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "z.toml", &projected(0.0, 25, "polarizations = [0.9, -0.3, 0.5, 0.0, 1.0]", "z"));
    let o = spinzeno(&["simulate", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let t = read_trajectory(&dir.path().join("z.csv")).unwrap();
    assert!(t.values.iter().all(|r| r == &t.values[0]));
    assert!(t.times.iter().all(|&x| x == 0.0));
}

fn sweep_fractions(dir: &Path, taus: &str, total: &str) -> Vec<f64> {
    let cfg = write(dir, "sweep.toml", &projected(0.0317, 40, "excite = [\"2\", \"2'\"]", "fig"));
    let o = spinzeno(&["sweep-tau", cfg.to_str().unwrap(), "--tau-ms", taus, "--total-time-s", total], dir);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    csv_rows(&dir.join("fig_sweep.csv")).iter().map(|r| r[2].parse().unwrap()).collect()
}

#[test]
fn sweep_orders_regimes() {
    let dir = TempDir::new().unwrap();
    let f = sweep_fractions(dir.path(), "31.7,12.7,0.63", "1.27");
    assert!(f[0] > f[1] && f[1] > f[2], "{f:?}");
    let rows = csv_rows(&dir.path().join("fig_sweep.csv"));
    assert_eq!(&rows[0][0], "0.0317");
    assert_eq!(&rows[2][1], "2016");
    for k in 0..3 {
        assert!(dir.path().join(format!("fig_tau{k}.csv")).exists());
        assert!(dir.path().join(format!("fig_tau{k}.meta.toml")).exists());
    }
    let head = fs::read_to_string(dir.path().join("fig_sweep.csv")).unwrap();
    assert!(head.starts_with("# spinzeno-sweep/1 angular_factor="));
}

#[test]
fn sweep_deep_zeno_scaling() {
    let dir = TempDir::new().unwrap();
    let f = sweep_fractions(dir.path(), "0.0635,0.03175", "1.27");
    let ratio = f[0] / f[1];
    assert!((ratio - 2.0).abs() <= 0.2, "{ratio}");
}

#[test]
fn sweep_rejects_single_tau() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "s.toml", &projected(0.0317, 40, "excite = [\"2\"]", "s"));
    let o = spinzeno(&["sweep-tau", cfg.to_str().unwrap(), "--tau-ms", "31.7"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("tau-ms"), "{}", stderr(&o));
}

/// Simulates the three selective excitations at tau = 1 ms and writes a manifest.
fn pyridine_manifest(dir: &Path, extra: &str) -> PathBuf {
    let sets = [("e1", "[\"1\", \"1'\"]"), ("e2", "[\"2\", \"2'\"]"), ("e3", "[\"3\"]")];
    let mut manifest = String::from("schema = \"spinzeno-manifest/1\"\nsystem = \"pyridine\"\n");
    for (name, set) in sets {
        let cfg = write(dir, &format!("{name}.toml"), &projected(0.001, 200, &format!("excite = {set}"), name));
        let o = spinzeno(&["simulate", cfg.to_str().unwrap(), "--output-dir", "data"], dir);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        manifest.push_str(&format!("\n[[experiment]]\nfile = \"data/{name}.csv\"\nexcite = {set}\ntau_s = 0.001\n"));
    }
    manifest.push_str(extra);
    write(dir, "fit.toml", &manifest)
}

fn estimate_values(path: &Path) -> Vec<f64> {
    csv_rows(path).iter().map(|r| r[1].parse().unwrap()).collect()
}

#[test]
fn fit_round_trip() {
    let dir = TempDir::new().unwrap();
    let manifest = pyridine_manifest(dir.path(), "");
    let o = spinzeno(&["fit", manifest.to_str().unwrap(), "--output-dir", "fit"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("comparison with the literature couplings"), "{text}");
    assert!(text.contains("short_tau_ratio"));
    let est = estimate_values(&dir.path().join("fit/fit_estimate.csv"));
    for (v, t) in est.iter().zip([3.50, 1.86, 7.64]) {
        assert!((v / t - 1.0).abs() < 0.03, "{est:?}");
    }
    let head = fs::read_to_string(dir.path().join("fit/fit_estimate.csv")).unwrap();
    assert!(head.starts_with("# spinzeno-estimate/1 angular_factor=6.28"));
    assert!(dir.path().join("fit/fit_estimate.txt").exists());
}

#[test]
fn fit_with_refinement_and_bootstrap() {
    let dir = TempDir::new().unwrap();
    let manifest = pyridine_manifest(dir.path(), "\n[bootstrap]\nreplicates = 20\nseed = 4\n");
    let args = ["fit", manifest.to_str().unwrap(), "--refine", "--output-dir", "fit"];
    let o = spinzeno(&args, dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("least_squares"));
    let est = estimate_values(&dir.path().join("fit/fit_estimate.csv"));
    for (v, t) in est.iter().zip([3.5057, 1.85, 7.66]) {
        assert!((v / t - 1.0).abs() < 0.03, "{est:?}");
    }
    let boot = dir.path().join("fit/fit_bootstrap.csv");
    let first = fs::read(&boot).unwrap();
    assert!(String::from_utf8_lossy(&first).contains("replicates=20 seed=4"));
    assert_eq!(spinzeno(&args, dir.path()).status.code(), Some(0));
    assert_eq!(first, fs::read(&boot).unwrap());
}

#[test]
fn fit_uses_sidecar_noise() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "n.toml", &projected(0.001, 200, "excite = [\"A\"]", "n").replace("pyridine", "ab").replace("\n\n[initial]", "\nnoise = 0.002\nseed = 1\n\n[initial]"));
    assert_eq!(spinzeno(&["simulate", cfg.to_str().unwrap()], dir.path()).status.code(), Some(0));
    let m = write(dir.path(), "m.toml", "schema = \"spinzeno-manifest/1\"\nsystem = \"ab\"\n[[experiment]]\nfile = \"n.csv\"\nexcite = [\"A\"]\ntau_s = 0.001\n");
    let manifest = spinzeno::io::load_manifest(&m).unwrap();
    assert_eq!(manifest.dataset.experiments()[0].noise, Some(0.002));
    let o = spinzeno(&["fit", m.to_str().unwrap(), "--bootstrap", "20"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let est = estimate_values(&dir.path().join("m_estimate.csv"));
    assert!((est[0] - 10.0).abs() < 0.5, "{est:?}");
}

#[test]
fn fit_validation_errors() {
    let dir = TempDir::new().unwrap();
    let empty = write(dir.path(), "empty.toml", "schema = \"spinzeno-manifest/1\"\nsystem = \"pyridine\"\n");
    let o = spinzeno(&["fit", empty.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("experiment"), "{}", stderr(&o));

    let cfg = write(dir.path(), "ab.toml", &projected(0.001, 20, "excite = [\"A\"]", "ab").replace("pyridine", "ab"));
    assert_eq!(spinzeno(&["simulate", cfg.to_str().unwrap()], dir.path()).status.code(), Some(0));
    let m = write(
        dir.path(),
        "mismatch.toml",
        "schema = \"spinzeno-manifest/1\"\nsystem = \"pyridine\"\n[[experiment]]\nfile = \"ab.csv\"\nexcite = [\"1\"]\ntau_s = 0.001\n",
    );
    let o = spinzeno(&["fit", m.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("missing [1, 1', 2, 2', 3]") && err.contains("unexpected [A, B]"), "{err}");

    let m = write(dir.path(), "nofile.toml", &fs::read_to_string(&m).unwrap().replace("ab.csv", "absent.csv"));
    assert_eq!(spinzeno(&["fit", m.to_str().unwrap()], dir.path()).status.code(), Some(2));
}

#[test]
fn fit_reports_unidentifiable_pairs() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "e3.toml", &projected(0.001, 200, "excite = [\"3\"]", "e3"));
    assert_eq!(spinzeno(&["simulate", cfg.to_str().unwrap()], dir.path()).status.code(), Some(0));
    let m = write(
        dir.path(),
        "m.toml",
        "schema = \"spinzeno-manifest/1\"\nsystem = \"pyridine\"\n[[experiment]]\nfile = \"e3.csv\"\nexcite = [\"3\"]\ntau_s = 0.001\n",
    );
    let o = spinzeno(&["fit", m.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("1+1'~2+2'"), "{}", stderr(&o));
}

fn asymptote(o: &Output) -> f64 {
    let text = stdout(o);
    let line = text.lines().find(|l| l.starts_with("equipartition asymptote:")).expect("asymptote line");
    line.rsplit(' ').next().unwrap().parse().unwrap()
}

#[test]
fn predict_values() {
    let dir = TempDir::new().unwrap();
    let o = spinzeno(&["predict", "--excite", "1,1'"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(asymptote(&o), 0.4);
    let o = spinzeno(&["predict", "--system", "pyridine", "--deplete", "1,1'"], dir.path());
    assert_eq!(asymptote(&o), 0.6);
    assert!(stdout(&o).contains("2+2'"));
    let o = spinzeno(&["predict", "--polarizations", "0.3,0.3,0.3,0.3,0.3"], dir.path());
    assert_eq!(asymptote(&o), 0.3);
    let o = spinzeno(&["predict", "--polarizations=-0.5,-0.5"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let o = spinzeno(&["predict", "--excite", "9"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("excite"));
}

#[test]
fn predict_writes_kernels() {
    let dir = TempDir::new().unwrap();
    let o = spinzeno(&["predict", "--excite", "2,2'", "--kernel-tau-ms", "1", "--output-dir", "k"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in ["kernel_exact.csv", "kernel_small_tau.csv"] {
        let text = fs::read_to_string(dir.path().join("k").join(f)).unwrap();
        assert!(text.starts_with("# spinzeno-matrix/1 kind="), "{text}");
        assert_eq!(csv_rows(&dir.path().join("k").join(f)).len(), 5);
    }
}

#[test]
fn schema_versions_are_checked() {
    let dir = TempDir::new().unwrap();
    let text = projected(0.01, 5, "excite = [\"1\"]", "v").replace("spinzeno-scenario/1", "spinzeno-scenario/2");
    let cfg = write(dir.path(), "v.toml", &text);
    let o = spinzeno(&["simulate", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unsupported schema 'spinzeno-scenario/2'"), "{}", stderr(&o));

    let cfg = write(dir.path(), "t.toml", &projected(0.001, 20, "excite = [\"3\"]", "t"));
    assert_eq!(spinzeno(&["simulate", cfg.to_str().unwrap()], dir.path()).status.code(), Some(0));
    let csv = dir.path().join("t.csv");
    let body = fs::read_to_string(&csv).unwrap().replacen("spinzeno-trajectory/1", "spinzeno-trajectory/9", 1);
    fs::write(&csv, body).unwrap();
    let m = write(
        dir.path(),
        "m.toml",
        "schema = \"spinzeno-manifest/1\"\nsystem = \"pyridine\"\n[[experiment]]\nfile = \"t.csv\"\nexcite = [\"3\"]\ntau_s = 0.001\n",
    );
    let o = spinzeno(&["fit", m.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("spinzeno-trajectory/9"));
}

#[test]
fn config_errors_name_the_field() {
    let dir = TempDir::new().unwrap();
    let cases = [
        (projected(0.01, 5, "excite = [\"1\"]", "x").replace("cycles = 5\n", ""), "cycles"),
        (format!("{}bogus = 1\n", projected(0.01, 5, "excite = [\"1\"]", "x")), "bogus"),
        (projected(-0.01, 5, "excite = [\"1\"]", "x"), "tau_s"),
        (projected(0.01, 5, "excite = [\"7\"]", "x"), "initial.excite"),
        (projected(0.01, 5, "excite = [\"1\"]", "x").replace("pyridine", "benzene"), "system"),
        (projected(0.01, 5, "excite = [\"1\"]", "x").replace("\n\n[initial]", "\nfidelity = 2.0\n\n[initial]"), "fidelity"),
    ];
    for (text, field) in cases {
        let cfg = write(dir.path(), "bad.toml", &text);
        let o = spinzeno(&["simulate", cfg.to_str().unwrap()], dir.path());
        assert_eq!(o.status.code(), Some(2), "{field}: {}", stderr(&o));
        assert!(stderr(&o).contains(field), "{field}: {}", stderr(&o));
    }
}

#[test]
fn output_dir_precedence() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "e.toml", &projected(0.01, 3, "excite = [\"1\"]", "env"));
    let run = |extra: &[&str]| {
        let mut args = vec!["simulate", cfg.to_str().unwrap()];
        args.extend_from_slice(extra);
        Command::new(BIN)
            .args(&args)
            .current_dir(dir.path())
            .env("SPINZENO_OUTPUT_DIR", dir.path().join("from_env"))
            .output()
            .unwrap()
    };
    assert_eq!(run(&[]).status.code(), Some(0));
    assert!(dir.path().join("from_env/env.csv").exists());
    assert_eq!(run(&["--output-dir", "from_flag"]).status.code(), Some(0));
    assert!(dir.path().join("from_flag/env.csv").exists());

    let with_dir = write(
        dir.path(),
        "d.toml",
        &projected(0.01, 3, "excite = [\"1\"]", "cfg").replace("\n\n[initial]", "\noutput_dir = \"from_config\"\n\n[initial]"),
    );
    let o = Command::new(BIN)
        .args(["simulate", with_dir.to_str().unwrap()])
        .current_dir(dir.path())
        .env("SPINZENO_OUTPUT_DIR", dir.path().join("from_env"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(dir.path().join("from_config/cfg.csv").exists());
}

#[test]
fn preset_list_and_usage() {
    let dir = TempDir::new().unwrap();
    let o = spinzeno(&["preset-list"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.lines().any(|l| l.starts_with("pyridine")) && text.lines().any(|l| l.starts_with("ab")), "{text}");
    assert_eq!(spinzeno(&["frobnicate"], dir.path()).status.code(), Some(2));
    assert_eq!(spinzeno(&["--help"], dir.path()).status.code(), Some(0));
}

#[test]
fn in_process_run_matches_binary() {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = spinzeno::cli::run(["spinzeno", "predict", "--excite", "2,2'"], &mut out, &mut err);
    assert_eq!(code, spinzeno::cli::EXIT_OK);
    let dir = TempDir::new().unwrap();
    assert_eq!(out, spinzeno(&["predict", "--excite", "2,2'"], dir.path()).stdout);
}

//! End-to-end tests of the `cqw` binary: exit codes, file outputs, and
//! bitwise reproducibility.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cqw_cli::snapshot;
use cqw_core::walk::honeycomb::CellLattice;

fn cqw() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_cqw"));
    c.env_remove("CQW_THREADS");
    c
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, text).unwrap();
    path
}

fn run_verb(verb: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    cqw()
        .arg(verb)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .unwrap()
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn csv_lines(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(str::to_owned)
        .collect()
}

const FLAT_RUN: &str = r#"{
    "lattice": {"kind": "honeycomb", "n1": 32, "n2": 32, "epsilon": 0.2},
    "metric": {"family": "flat"},
    "mass": 0.2,
    "time": {"steps": 100},
    "initial": {"gaussian": {"center": [1.6, 2.0], "width": 0.8,
                             "momentum": [0.7, 0.4], "spinor": [[1.0, 0.0], [0.3, 0.1]]}},
    "output": {"observables": ["norm", "mean", "spread"]}
}"#;

#[test]
fn flat_run_keeps_norm_and_writes_all_rows() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), FLAT_RUN);
    let out = run_verb("run", &config, dir.path(), &[]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    assert!(stdout_of(&out).contains("run:"));

    let lines = csv_lines(&dir.path().join("observables.csv"));
    assert_eq!(lines[0], "step,time,norm,mean_x,mean_y,spread");
    assert_eq!(lines.len(), 102, "header plus 101 rows");
    let norm0: f64 = lines[1].split(',').nth(2).unwrap().parse().unwrap();
    assert!((norm0 - 1.0).abs() < 1e-12);
    for line in &lines[1..] {
        let norm: f64 = line.split(',').nth(2).unwrap().parse().unwrap();
        assert!((norm - norm0).abs() < 1e-12, "norm drifted: {line}");
    }

    // Default dump cadence: initial state and final step only.
    let snaps: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .filter_map(|e| {
            let name = e.unwrap().file_name().into_string().unwrap();
            name.ends_with(".cqw").then_some(name)
        })
        .collect();
    assert_eq!(snaps.len(), 2, "{snaps:?}");
    let snap = snapshot::read(&dir.path().join("snapshot_000100.cqw")).unwrap();
    assert_eq!(
        (snap.kind, snap.n1, snap.n2, snap.spinors_per_cell),
        (0, 32, 32, 1)
    );

    // Snapshot norm agrees with the csv: amplitudes are stored unscaled.
    let area = CellLattice::Honeycomb.grid(32, 32, 0.2).cell_area();
    let total: f64 = snap.amplitudes.iter().map(|z| z.norm_sqr()).sum();
    assert!(((total * area).sqrt() - norm0).abs() < 1e-10);
}

#[test]
fn square_lattice_rejects_stretched_rows_with_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"{
        "lattice": {"kind": "square", "n1": 16, "n2": 16, "epsilon": 0.2},
        "metric": {"family": "homogeneous", "lambda": [["2.5", "0"], ["0", "1"]]},
        "mass": 0.0,
        "time": {"steps": 5},
        "initial": {"delta": {"site": [4, 4]}}
    }"#;
    let config = write_config(dir.path(), text);
    let out = run_verb("run", &config, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr_of(&out));
    assert!(
        stderr_of(&out).contains("unit deformation rows"),
        "{}",
        stderr_of(&out)
    );
}

#[test]
fn config_problems_exit_2_with_field_context() {
    let dir = tempfile::tempdir().unwrap();

    let bad_kind = FLAT_RUN.replace("honeycomb", "hexagon");
    let config = write_config(dir.path(), &bad_kind);
    let out = run_verb("run", &config, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_of(&out);
    assert!(err.contains("/lattice/kind"), "{err}");
    assert!(err.contains("triangular"), "{err}");

    let stray_key = FLAT_RUN.replace("\"mass\"", "\"masss\"");
    let config = write_config(dir.path(), &stray_key);
    let out = run_verb("run", &config, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("masss"));

    let bad_time = FLAT_RUN.replace(r#"{"steps": 100}"#, r#"{"t": 1.05}"#);
    let config = write_config(dir.path(), &bad_time);
    let out = run_verb("run", &config, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("/time"));

    let out = cqw().arg("run").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("--config"));
}

#[test]
fn study_writes_deterministic_report_files() {
    let text = r#"{
        "lattice": {"kind": "honeycomb", "n1": 32, "n2": 32, "epsilon": 0.2},
        "metric": {"family": "flat"},
        "mass": 0.2,
        "time": {"t": 0.8},
        "initial": {"gaussian": {"center": [1.6, 2.0], "width": 0.8,
                                 "momentum": [0.7, 0.4], "spinor": [[1.0, 0.0], [0.3, 0.1]]}},
        "study": {"epsilons": [0.4, 0.2, 0.1]}
    }"#;
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let config = write_config(dir_a.path(), text);

    let out = run_verb("study", &config, dir_a.path(), &[]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    assert!(stdout_of(&out).contains("slope"));

    let csv = csv_lines(&dir_a.path().join("study.csv"));
    assert_eq!(csv[0], "epsilon,l2_error");
    assert_eq!(csv.len(), 4);
    let json = std::fs::read_to_string(dir_a.path().join("study.json")).unwrap();
    assert!(json.contains("\"slope\""), "{json}");
    assert!(json.contains("\"points\""), "{json}");

    let out = run_verb("study", &config, dir_b.path(), &["--quiet"]);
    assert!(out.status.success());
    assert!(stdout_of(&out).is_empty());
    assert_eq!(
        std::fs::read(dir_a.path().join("study.csv")).unwrap(),
        std::fs::read(dir_b.path().join("study.csv")).unwrap()
    );
    assert_eq!(
        std::fs::read(dir_a.path().join("study.json")).unwrap(),
        std::fs::read(dir_b.path().join("study.json")).unwrap()
    );
}

#[test]
fn identical_configs_give_bitwise_identical_outputs() {
    let text = r#"{
        "lattice": {"kind": "honeycomb", "n1": 16, "n2": 16, "epsilon": 0.2},
        "metric": {"family": "conformal", "f": "1 + 0.1*sin(x)*sin(y)"},
        "mass": 0.3,
        "time": {"steps": 10},
        "initial": {"gaussian": {"center": [1.0, 1.0], "width": 0.6,
                                 "momentum": [0.5, 0.0], "spinor": [[1.0, 0.0], [0.0, 0.0]]}}
    }"#;
    let dirs: Vec<_> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    let config = write_config(dirs[0].path(), text);
    for (dir, threads) in dirs.iter().zip([&[][..], &["--threads", "1"], &["--threads", "4"]]) {
        let out = run_verb("run", &config, dir.path(), threads);
        assert!(out.status.success(), "{}", stderr_of(&out));
    }
    for name in ["observables.csv", "snapshot_000000.cqw", "snapshot_000010.cqw"] {
        let first = std::fs::read(dirs[0].path().join(name)).unwrap();
        for dir in &dirs[1..] {
            assert_eq!(first, std::fs::read(dir.path().join(name)).unwrap(), "{name}");
        }
    }
}

#[test]
fn out_flag_overrides_config_directory() {
    let cfg_dir = tempfile::tempdir().unwrap();
    let a = cfg_dir.path().join("a");
    let b = cfg_dir.path().join("b");
    let text = FLAT_RUN
        .replace("{\"steps\": 100}", "{\"steps\": 2}")
        .replace(
            "\"output\": {",
            &format!("\"output\": {{\"directory\": \"{}\", ", a.display()),
        );
    let config = write_config(cfg_dir.path(), &text);

    let out = cqw()
        .arg("run")
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(&b)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr_of(&out));
    assert!(b.join("observables.csv").exists());
    assert!(!a.exists());

    let out = cqw().arg("run").arg("--config").arg(&config).output().unwrap();
    assert!(out.status.success(), "{}", stderr_of(&out));
    assert!(a.join("observables.csv").exists());
}

#[test]
fn oracle_dumps_a_unit_norm_field() {
    let dir = tempfile::tempdir().unwrap();
    let text = FLAT_RUN.replace("{\"steps\": 100}", "{\"steps\": 5}");
    let config = write_config(dir.path(), &text);
    let out = run_verb("oracle", &config, dir.path(), &[]);
    assert!(out.status.success(), "{}", stderr_of(&out));

    let snap = snapshot::read(&dir.path().join("snapshot_oracle.cqw")).unwrap();
    assert_eq!((snap.kind, snap.spinors_per_cell), (0, 1));
    let area = CellLattice::Honeycomb.grid(32, 32, 0.2).cell_area();
    let total: f64 = snap.amplitudes.iter().map(|z| z.norm_sqr()).sum();
    assert!(((total * area).sqrt() - 1.0).abs() < 1e-10);
}

#[test]
fn dispersion_table_tracks_the_exact_relation() {
    let dir = tempfile::tempdir().unwrap();
    let text = FLAT_RUN
        .replace("\"mass\": 0.2", "\"mass\": 0.0")
        .replace("{\"steps\": 100}", "{\"steps\": 1}");
    let config = write_config(dir.path(), &text);
    let out = run_verb("dispersion", &config, dir.path(), &[]);
    assert!(out.status.success(), "{}", stderr_of(&out));

    let lines = csv_lines(&dir.path().join("dispersion.csv"));
    assert_eq!(lines[0], "k_x,k_y,phase_minus,phase_plus,exact_minus,exact_plus");
    assert_eq!(lines.len(), 21);
    for line in &lines[1..] {
        let v: Vec<f64> = line.split(',').map(|s| s.parse().unwrap()).collect();
        assert!((v[4] + v[5]).abs() < 1e-15, "exact branches not symmetric: {line}");
        assert!((v[2] - v[4]).abs() < 0.05, "minus branch off: {line}");
        assert!((v[3] - v[5]).abs() < 0.05, "plus branch off: {line}");
    }

    // Spatial dependence makes the Bloch analysis meaningless; reject it.
    let curved = FLAT_RUN.replace(
        r#"{"family": "flat"}"#,
        r#"{"family": "conformal", "f": "1 + 0.1*sin(x)"}"#,
    );
    let config = write_config(dir.path(), &curved);
    let out = run_verb("dispersion", &config, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr_of(&out));
}

#[test]
fn compile_dumps_coin_field_json() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"{
        "lattice": {"kind": "honeycomb", "n1": 8, "n2": 8, "epsilon": 0.2},
        "metric": {"family": "conformal", "f": "1 + 0.3*sin(x)"},
        "mass": 0.1,
        "time": {"steps": 1},
        "initial": {"delta": {"site": [0, 0]}}
    }"#;
    let config = write_config(dir.path(), text);
    let out = run_verb("compile", &config, dir.path(), &[]);
    assert!(out.status.success(), "{}", stderr_of(&out));

    let parsed: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("coins.json")).unwrap())
            .unwrap();
    assert_eq!(parsed["lattice"], "honeycomb");
    assert_eq!(parsed["n1"], 8);
    assert!(parsed["max_c1_residual"].as_f64().unwrap() < 1e-10);
    assert!(parsed["max_unitarity_defect"].as_f64().unwrap() < 1e-12);
    let subs = parsed["sublattices"].as_array().unwrap();
    assert_eq!(subs.len(), 1, "site lattices compile one offset copy");
    for sub in subs {
        assert_eq!(sub["coins"].as_array().unwrap().len(), 3);
        assert_eq!(sub["coins"][0]["axis"].as_array().unwrap().len(), 64);
        assert_eq!(sub["scaled_mass"].as_array().unwrap().len(), 64);
    }
}

#[test]
fn triangular_run_resamples_three_spinors_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"{
        "lattice": {"kind": "triangular", "n1": 12, "n2": 12, "epsilon": 0.2},
        "metric": {"family": "flat"},
        "mass": 0.1,
        "time": {"steps": 10},
        "initial": {"delta": {"site": [6, 6], "spinor": [[0.6, 0.0], [0.0, 0.8]]}}
    }"#;
    let config = write_config(dir.path(), text);
    let out = run_verb("run", &config, dir.path(), &[]);
    assert!(out.status.success(), "{}", stderr_of(&out));

    let snap = snapshot::read(&dir.path().join("snapshot_000010.cqw")).unwrap();
    assert_eq!(
        (snap.kind, snap.n1, snap.n2, snap.spinors_per_cell),
        (1, 12, 12, 3)
    );
    assert_eq!(snap.amplitudes.len(), 12 * 12 * 3 * 2);

    let lines = csv_lines(&dir.path().join("observables.csv"));
    assert_eq!(lines.len(), 12);
    for line in &lines[1..] {
        let norm: f64 = line.split(',').nth(2).unwrap().parse().unwrap();
        assert!((norm - 1.0).abs() < 1e-12, "{line}");
    }
}

#[test]
fn cqw_threads_env_overrides_the_flag() {
    let dir = tempfile::tempdir().unwrap();
    let text = FLAT_RUN.replace("{\"steps\": 100}", "{\"steps\": 1}");
    let config = write_config(dir.path(), &text);

    let out = cqw()
        .arg("run")
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(dir.path())
        .env("CQW_THREADS", "junk")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("CQW_THREADS"), "{}", stderr_of(&out));

    let out = cqw()
        .arg("run")
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(dir.path())
        .arg("--threads")
        .arg("1")
        .env("CQW_THREADS", "2")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr_of(&out));
}

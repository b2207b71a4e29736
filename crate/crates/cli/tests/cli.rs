use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn stfit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stfit")).args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn out_dir(dir: &tempfile::TempDir, name: &str) -> String {
    dir.path().join(name).to_string_lossy().into_owned()
}

#[test]
fn mesh_summary_reports_desk_geometry() {
    let dir = tempfile::tempdir().unwrap();
    let out = stfit(&["mesh", "-o", &out_dir(&dir, "m")]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    for line in
        ["geometry_mm.a: 5.0", "geometry_mm.b: 10.0", "geometry_mm.h: 2.0", "self_check.incidence_nilpotent: true"]
    {
        assert!(text.contains(line), "missing {line:?} in\n{text}");
    }
    let summary = read_json(&dir.path().join("m/summary.json"));
    // 4×32×2 annulus, periodic in θ: (4+1)·32·(2+1) nodes, three time intervals.
    assert_eq!(summary["counts"]["nodes3"], 480);
    assert_eq!(summary["counts"]["volumes3"], 256);
    assert_eq!(summary["counts"]["cells4"], 3 * 256);
    for file in ["mesh.json", "mesh.vtk", "summary.json"] {
        assert!(dir.path().join("m").join(file).is_file(), "{file}");
    }
}

#[test]
fn smallest_azimuthal_division_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let out = stfit(&["mesh", "--n-theta", "3", "--n-r", "1", "--n-z", "1", "-o", &out_dir(&dir, "m")]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = stfit(&["mesh", "--n-theta", "2", "-o", &out_dir(&dir, "m2")]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn invalid_configs_exit_with_the_config_code() {
    let dir = tempfile::tempdir().unwrap();
    for (name, body) in [
        ("unknown.json", r#"{"version": 1, "radius": 3}"#),
        ("noversion.json", r#"{"mode": 2}"#),
        ("both.json", r#"{"version": 1, "rotation": {"rim_speed": 0.1, "omega": 5.0}}"#),
        ("scheme.json", r#"{"version": 1, "scheme": "extrapolated:7"}"#),
    ] {
        let path = dir.path().join(name);
        std::fs::write(&path, body).unwrap();
        let out = stfit(&["mesh", "-c", path.to_str().unwrap(), "-o", &out_dir(&dir, "x")]);
        assert_eq!(out.status.code(), Some(3), "{name}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(String::from_utf8_lossy(&out.stderr).contains("config phase"), "{name}");
    }
    let missing = stfit(&["mesh", "-c", "/nonexistent/run.json"]);
    assert_eq!(missing.status.code(), Some(4));
    let usage = stfit(&["simulate", "--bogus-flag"]);
    assert_eq!(usage.status.code(), Some(2));
}

#[test]
fn help_lists_exit_codes() {
    let out = stfit(&["--help"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("Exit codes:"));
    for code in ["  3  invalid configuration", "  4  file input/output", " 11  mesh error", " 16  resonator error"] {
        assert!(text.contains(code), "{code}");
    }
}

#[test]
fn static_fit_run_is_leapfrog_equivalent() {
    let dir = tempfile::tempdir().unwrap();
    let out = stfit(&["simulate", "--rim-speed", "0", "--steps", "40", "-o", &out_dir(&dir, "s")]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_json(&dir.path().join("s/report.json"));
    assert_eq!(report["leapfrog_equivalence"]["status"], "leapfrog-equivalent");
    assert_eq!(report["stability"]["verdict"], "stable");
    assert_eq!(report["shift"]["status"], "not_applicable");
    assert_eq!(report["probe"]["samples"], 41);
    // Text report is the flattened JSON.
    let text = std::fs::read_to_string(dir.path().join("s/report.txt")).unwrap();
    assert_eq!(text, stdout(&out));
    assert!(text.contains("leapfrog_equivalence.status: leapfrog-equivalent\n"));
}

#[test]
fn static_fem_run_reports_equivalence_as_not_applicable() {
    let dir = tempfile::tempdir().unwrap();
    let out = stfit(&[
        "simulate",
        "--method",
        "fem",
        "--rim-speed",
        "0",
        "--steps",
        "10",
        "--n-theta",
        "12",
        "-o",
        &out_dir(&dir, "s"),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_json(&dir.path().join("s/report.json"));
    assert_eq!(report["leapfrog_equivalence"]["status"], "not-applicable");
}

#[test]
fn rotating_fit_run_recovers_the_shift() {
    let dir = tempfile::tempdir().unwrap();
    let out = stfit(&["simulate", "--mode", "1", "--rim-speed", "0.0314", "-o", &out_dir(&dir, "s")]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_json(&dir.path().join("s/report.json"));
    let shift = &report["shift"];
    assert_eq!(shift["status"], "value");
    // Expected shift mΩ with Ω = atanh(v)/b, computed here independently.
    let omega = 0.0314f64.atanh() / 0.01;
    assert!((shift["expected_natural"].as_f64().unwrap() - omega).abs() < 1e-12 * omega);
    assert!(shift["relative_error"].as_f64().unwrap() <= 0.10, "{shift}");
    let si = shift["delta_omega_rad_per_s"].as_f64().unwrap();
    let natural = shift["delta_omega_natural"].as_f64().unwrap();
    assert!((si - 299_792_458.0 * natural).abs() < 1e-9 * si);

    // Re-analysing the written signal reproduces the estimate.
    let signal = dir.path().join("s/signal.csv");
    let out = stfit(&["analyze", signal.to_str().unwrap(), "--mode", "1", "-o", &out_dir(&dir, "a")]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let analysis = read_json(&dir.path().join("a/analysis.json"));
    let again = analysis["estimate"]["delta_omega_natural"].as_f64().unwrap();
    assert!((again - natural).abs() < 1e-9 * natural, "{again} vs {natural}");
    assert!(analysis["comparison"]["relative_error"].as_f64().unwrap() <= 0.10);
}

#[test]
fn unstable_explicit_scheme_is_reported_as_diverged() {
    let dir = tempfile::tempdir().unwrap();
    let out = stfit(&[
        "simulate",
        "--method",
        "fem",
        "--mode",
        "3",
        "--scheme",
        "extrapolated:0",
        "--steps",
        "10000",
        "-o",
        &out_dir(&dir, "s"),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.contains("stability.message: diverged at step"), "{text}");
    let report = read_json(&dir.path().join("s/report.json"));
    assert_eq!(report["stability"]["verdict"], "diverged");
    assert_eq!(report["shift"]["status"], "not_applicable");
}

#[test]
fn table_has_one_row_per_mode_and_null_for_m0() {
    let dir = tempfile::tempdir().unwrap();
    let out = stfit(&[
        "table",
        "--modes",
        "0,1",
        "--rim-speeds",
        "0.0031,0.0314",
        "--methods",
        "fit",
        "--n-theta",
        "16",
        "-o",
        &out_dir(&dir, "t"),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_json(&dir.path().join("t/table_fit.json"));
    let table = &report["table"];
    let cells = table["cells"].as_array().unwrap();
    assert_eq!(cells.len(), 2);
    assert!(cells.iter().all(|row| row.as_array().unwrap().len() == 2));
    assert!(cells[0].as_array().unwrap().iter().all(|c| c["status"] == "null"));
    for cell in cells[1].as_array().unwrap() {
        assert!(matches!(cell["status"].as_str(), Some("value" | "failed")), "{cell}");
    }
    for file in ["table_fit.txt", "linear_fit.dat", "linear_fit.gp"] {
        assert!(dir.path().join("t").join(file).is_file(), "{file}");
    }
    assert!(!dir.path().join("t/table_fem.json").exists());
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let args = |name: &str| {
        vec![
            "simulate".to_string(),
            "--n-theta".into(),
            "12".into(),
            "--n-r".into(),
            "2".into(),
            "--steps".into(),
            "200".into(),
            "-o".into(),
            out_dir(&dir, name),
        ]
    };
    for name in ["one", "two"] {
        let a = args(name);
        let out = stfit(&a.iter().map(String::as_str).collect::<Vec<_>>());
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for file in ["report.json", "report.txt", "signal.csv", "energy.csv"] {
        let one = std::fs::read(dir.path().join("one").join(file)).unwrap();
        let two = std::fs::read(dir.path().join("two").join(file)).unwrap();
        assert!(one == two, "{file} differs between runs");
    }
    // Timings are opt-in and do show up when requested.
    let out = stfit(&["mesh", "--record-timings", "-o", &out_dir(&dir, "timed")]);
    assert!(stdout(&out).contains("metadata.timings_s.mesh: "));
}

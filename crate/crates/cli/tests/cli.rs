//! End-to-end tests driving the built binary.

use std::collections::HashMap;
use std::path::Path;
use std::process::{Command, Output};

fn statgeo() -> Command {
    Command::new(env!("CARGO_BIN_EXE_statgeo"))
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Parse the `key: value` grammar of reports.
fn kv(text: &str) -> HashMap<String, String> {
    text.lines()
        .filter_map(|line| {
            line.split_once(": ")
                .map(|(k, v)| (k.to_string(), v.to_string()))
        })
        .collect()
}

fn workspace_file(rel: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .join(rel)
        .display()
        .to_string()
}

#[test]
fn solve_minkowski_writes_straight_curve() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(statgeo()
        .args(["solve", "minkowski", "--out-dir"])
        .arg(dir.path()));
    assert!(out.status.success(), "{}", stderr(&out));

    let report = kv(&stdout(&out));
    assert_eq!(report["converged"], "true");
    assert_eq!(report["causal_character"], "spacelike");

    let curve = std::fs::read_to_string(dir.path().join("minkowski_curve.csv")).unwrap();
    let mut lines = curve.lines();
    assert_eq!(lines.next().unwrap(), "s,x1,x2,t");
    for (i, line) in lines.enumerate() {
        let fields: Vec<f64> = line.split(',').map(|f| f.parse().unwrap()).collect();
        let s = i as f64 / 64.0;
        assert!((fields[0] - s).abs() < 1e-15);
        assert!((fields[1] - s).abs() < 1e-6, "row {i} not on the straight line");
        assert!(fields[2].abs() < 1e-6);
        assert!(fields[3].abs() < 1e-6);
    }
}

#[test]
fn intersecting_boundaries_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("bad.toml");
    std::fs::write(
        &scenario,
        r#"
dim = 2
chart = { min = [-5.0, -5.0], max = [5.0, 5.0] }

[metric]
builtin = "minkowski"

[boundary]
hypothesis = "H1"
p = { shape = "point", x = [0.0, 0.0], t = 0.0 }
q = { shape = "point", x = [0.0, 0.0], t = 0.0 }
"#,
    )
    .unwrap();
    let out = run(statgeo().arg("solve").arg(&scenario));
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("intersect"), "{}", stderr(&out));
}

#[test]
fn malformed_scenario_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("broken.toml");
    std::fs::write(&scenario, "dim = \"two\"").unwrap();
    let out = run(statgeo().arg("solve").arg(&scenario));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_scenario_exits_2() {
    let out = run(statgeo().args(["solve", "kerr"]));
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("statgeo list"));
}

#[test]
fn sphere_point_report_shows_small_orthogonality() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(statgeo()
        .args(["solve", "minkowski-sphere-point", "--out-dir"])
        .arg(dir.path()));
    assert!(out.status.success(), "{}", stderr(&out));
    let report = kv(&stdout(&out));
    assert_eq!(report["converged"], "true");
    assert_eq!(report["causal_character"], "lightlike");
    assert!(report["orthogonality_r0"].parse::<f64>().unwrap() <= 1e-5);
    assert!(report["orthogonality_r1"].parse::<f64>().unwrap() <= 1e-5);
}

#[test]
fn h2_scenario_takes_the_submersion_branch() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(statgeo()
        .args(["solve", "minkowski-cylinders", "--out-dir"])
        .arg(dir.path()));
    assert!(out.status.success(), "{}", stderr(&out));
    let report = kv(&stdout(&out));
    assert_eq!(report["hypothesis_branch"], "H2");
    assert_eq!(report["causal_character"], "spacelike");
    // horizontal lifts conserve g(zdot, K) = 0
    assert!(report["c_z"].parse::<f64>().unwrap().abs() <= 1e-12);
}

#[test]
fn scenario_files_from_the_repository_solve() {
    for rel in [
        "scenarios/boost-sphere-point.toml",
        "scenarios/rotating-polynomial.toml",
    ] {
        let dir = tempfile::tempdir().unwrap();
        let out = run(statgeo()
            .arg("solve")
            .arg(workspace_file(rel))
            .arg("--out-dir")
            .arg(dir.path()));
        assert!(out.status.success(), "{rel}: {}", stderr(&out));
        assert_eq!(kv(&stdout(&out))["converged"], "true", "{rel}");
    }
}

#[test]
fn fermat_length_of_unit_segment() {
    let out = run(statgeo().args([
        "fermat", "length", "minkowski", "--from", "0,0", "--to", "1,0",
    ]));
    assert!(out.status.success(), "{}", stderr(&out));
    let report = kv(&stdout(&out));
    let length: f64 = report["fermat_length"].parse().unwrap();
    assert!((length - 1.0).abs() <= 1e-12);
}

#[test]
fn fermat_distance_surfaces_non_reversibility() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(statgeo()
        .args([
            "fermat", "distance", "boost", "--from", "0,0", "--to", "1,0", "--segments", "16",
        ])
        .arg("--out-dir")
        .arg(dir.path()));
    assert!(out.status.success(), "{}", stderr(&out));
    let report = kv(&stdout(&out));
    let forward: f64 = report["forward_distance"].parse().unwrap();
    let backward: f64 = report["backward_distance"].parse().unwrap();
    let golden = 0.5 + 1.25_f64.sqrt();
    assert!((forward - golden).abs() <= 1e-4, "forward = {forward}");
    assert!((backward - (golden - 1.0)).abs() <= 1e-4, "backward = {backward}");
    assert!(forward != backward);
}

#[test]
fn fermat_lift_emits_null_column_and_diagnoses_lightlike() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(statgeo()
        .args([
            "fermat", "lift", "boost", "--from", "0,0", "--to", "1,0", "--segments", "32",
        ])
        .arg("--out-dir")
        .arg(dir.path()));
    assert!(out.status.success(), "{}", stderr(&out));
    let curve_path = dir.path().join("boost_lightlike_curve.csv");
    let text = std::fs::read_to_string(&curve_path).unwrap();
    assert!(text.lines().next().unwrap().ends_with(",null_residual"));
    for line in text.lines().skip(1) {
        let null: f64 = line.split(',').next_back().unwrap().parse().unwrap();
        assert!(null.abs() <= 1e-10);
    }

    let out = run(statgeo().arg("diagnose").arg(&curve_path).arg("boost"));
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(kv(&stdout(&out))["causal_character"], "lightlike");
}

#[test]
fn horizontal_lift_is_horizontal() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(statgeo()
        .args(["lift", "boost", "--from", "0,0", "--to", "1,0", "--t0", "0.25"])
        .arg("--out-dir")
        .arg(dir.path()));
    assert!(out.status.success(), "{}", stderr(&out));
    let report = kv(&stdout(&out));
    // tdot = (1/beta) g0[delta, xdot] = 1/2
    assert!((report["delta"].parse::<f64>().unwrap() - 0.5).abs() <= 1e-12);
    assert!(report["max_killing_product"].parse::<f64>().unwrap() <= 1e-12);
    assert!(report["geodesic_residual"].parse::<f64>().unwrap() <= 1e-8);
}

#[test]
fn diagnose_reproduces_the_solve_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(statgeo()
        .args(["solve", "minkowski-sphere-point", "--out-dir"])
        .arg(dir.path()));
    assert!(out.status.success());
    let solve_report = kv(&stdout(&out));

    let curve = dir.path().join("minkowski-sphere-point_curve.csv");
    let out = run(statgeo()
        .arg("diagnose")
        .arg(&curve)
        .arg("minkowski-sphere-point"));
    assert!(out.status.success(), "{}", stderr(&out));
    let diag_report = kv(&stdout(&out));

    // same code path on bit-identical data: the shared keys agree verbatim
    for key in [
        "segments",
        "delta",
        "t0",
        "c_z",
        "c_z_max_deviation",
        "e_z",
        "e_z_deviation",
        "geodesic_residual",
        "orthogonality_r0",
        "orthogonality_r1",
        "causal_character",
        "endpoint_violation_p",
        "endpoint_violation_q",
        "certified",
    ] {
        assert_eq!(solve_report[key], diag_report[key], "key {key} differs");
    }
}

#[test]
fn diagnose_flags_a_corrupted_row() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(statgeo()
        .args(["solve", "minkowski", "--out-dir"])
        .arg(dir.path()));
    assert!(out.status.success());
    let curve_path = dir.path().join("minkowski_curve.csv");
    let text = std::fs::read_to_string(&curve_path).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    // bend one interior node hard
    let fields: Vec<&str> = lines[30].split(',').collect();
    lines[30] = format!(
        "{},{},{},{}",
        fields[0],
        fields[1],
        fields[2].parse::<f64>().unwrap() + 0.25,
        fields[3]
    );
    std::fs::write(&curve_path, lines.join("\n")).unwrap();

    let out = run(statgeo().arg("diagnose").arg(&curve_path).arg("minkowski"));
    assert!(out.status.success(), "{}", stderr(&out));
    let report = kv(&stdout(&out));
    assert_eq!(report["certified"], "false");
    assert!(report["geodesic_residual"].parse::<f64>().unwrap() > 0.1);
}

#[test]
fn diagnose_rejects_dimension_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let curve_path = dir.path().join("c.csv");
    std::fs::write(
        &curve_path,
        "s,x1,t\n0.0,0.0,0.0\n0.5,0.5,0.0\n1.0,1.0,0.0\n",
    )
    .unwrap();
    let out = run(statgeo().arg("diagnose").arg(&curve_path).arg("minkowski"));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn list_prints_the_catalog() {
    let out = run(statgeo().arg("list"));
    assert!(out.status.success());
    let text = stdout(&out);
    for name in ["minkowski", "boost-cylinders", "rotating"] {
        assert!(text.contains(name));
    }
}

#[test]
fn out_dir_environment_variable_is_the_default() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(statgeo()
        .args(["solve", "minkowski"])
        .env("STATGEO_OUT_DIR", dir.path()));
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(dir.path().join("minkowski_curve.csv").exists());
}

#[test]
fn cli_overrides_take_precedence_over_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(statgeo()
        .arg("solve")
        .arg(workspace_file("scenarios/boost-sphere-point.toml"))
        .args(["--segments", "32", "--out-dir"])
        .arg(dir.path()));
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(kv(&stdout(&out))["segments"], "32");
}

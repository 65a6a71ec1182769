use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ricci_core::geometry::MetricDocument;
use ricci_core::{obj, shapes};
use serde_json::Value;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn ricci(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ricci")).args(args).output().expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("stdout is not JSON ({e}): {}", String::from_utf8_lossy(&out.stdout))
    })
}

fn write_shape(dir: &Path, name: &str, mesh: &ricci_core::Mesh) -> String {
    let path = dir.join(name);
    fs::write(&path, obj::write_obj(mesh, None)).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn tetrahedron_flow_converges_and_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = dir.path().join("tet");
    let input = data("skew_tetrahedron.obj");
    let out = ricci(&["flow", "--input", input.to_str().unwrap(), "--target", "uniform", "--output", prefix.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = stdout_json(&out);
    assert_eq!(report["status"], "converged");
    assert!(report["final_error"].as_f64().unwrap() <= 1e-6);
    assert!(report["iterations"].as_u64().unwrap() > 0);
    assert_eq!(report["topology"]["euler_characteristic"], 2);

    let saved = fs::read_to_string(dir.path().join("tet.report.json")).unwrap();
    assert_eq!(saved.trim_end(), String::from_utf8_lossy(&out.stdout).trim_end());
    let doc: MetricDocument = serde_json::from_str(&fs::read_to_string(dir.path().join("tet.metric.json")).unwrap()).unwrap();
    assert_eq!(doc.gamma.len(), 4);
    assert_eq!(doc.eta.len(), 6);
    assert_eq!(doc.u.as_ref().map(Vec::len), Some(4));
    // closed surface: no layout
    assert!(!dir.path().join("tet.obj").exists());
}

#[test]
fn grid_disk_flow_emits_uv_layout() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_shape(dir.path(), "grid.obj", &shapes::perturbed_disk(7, 0.2, 0.4, 3));
    let prefix = dir.path().join("grid");
    let out = ricci(&["flow", "--input", &input, "--target", "zero-interior", "--output", prefix.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = stdout_json(&out);
    let audit = &report["isometry_audit"];
    assert!(audit["max_rel_deviation"].as_f64().unwrap() <= 1e-6, "{audit}");
    assert!(audit["min_signed_area"].as_f64().unwrap() > 0.0);
    let text = fs::read_to_string(dir.path().join("grid.obj")).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("vt ")).count(), 49);
    assert!(obj::parse_obj(&text).is_ok());
}

#[test]
fn infeasible_target_file_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("k.json");
    fs::write(&target, "[3.0, 3.0, 3.0, 3.0]").unwrap();
    let input = data("skew_tetrahedron.obj");
    let prefix = dir.path().join("bad");
    let out = ricci(&[
        "flow",
        "--input",
        input.to_str().unwrap(),
        "--target",
        target.to_str().unwrap(),
        "--output",
        prefix.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let report = stdout_json(&out);
    assert_eq!(report["ok"], false);
    assert!(!report["violations"].as_array().unwrap().is_empty());
    assert!(!dir.path().join("bad.metric.json").exists());
}

#[test]
fn iteration_cap_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let input = data("skew_tetrahedron.obj");
    let prefix = dir.path().join("capped");
    let out = ricci(&["flow", "--input", input.to_str().unwrap(), "--max-iter", "1", "--output", prefix.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let report = stdout_json(&out);
    assert_eq!(report["status"], "max_iterations");
    assert_eq!(report["error_history"].as_array().unwrap().len(), 2);
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_shape(dir.path(), "disk.obj", &shapes::perturbed_disk(6, 0.3, 0.5, 11));
    let mut outputs = Vec::new();
    for (run, threads) in [("a", "1"), ("b", "3")] {
        let prefix = dir.path().join(run);
        let out = Command::new(env!("CARGO_BIN_EXE_ricci"))
            .env("RICCI_THREADS", threads)
            .args(["flow", "--input", &input, "--target", "zero-interior", "--surgery", "--output", prefix.to_str().unwrap()])
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0));
        let metric = fs::read(dir.path().join(format!("{run}.metric.json"))).unwrap();
        outputs.push((out.stdout, metric));
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn bad_thread_count_is_an_input_error() {
    let input = data("tetrahedron.obj");
    let out = Command::new(env!("CARGO_BIN_EXE_ricci"))
        .env("RICCI_THREADS", "lots")
        .args(["check", "--input", input.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(out.stdout.is_empty());
}

#[test]
fn iteration_log_is_written() {
    let dir = tempfile::tempdir().unwrap();
    let input = data("skew_tetrahedron.obj");
    let log = dir.path().join("iters.csv");
    let prefix = dir.path().join("logged");
    let out = ricci(&[
        "flow",
        "--input",
        input.to_str().unwrap(),
        "--method",
        "gradient",
        "--step",
        "1.0",
        "--max-iter",
        "5",
        "--log",
        log.to_str().unwrap(),
        "--output",
        prefix.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let csv = fs::read_to_string(log).unwrap();
    assert_eq!(csv.lines().next(), Some("iteration,max_error,step_used,flips"));
    assert_eq!(csv.lines().count(), 7);
}

#[test]
fn hyperbolic_genus_two_uniformizes() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_shape(dir.path(), "g2.obj", &shapes::genus_two());
    let prefix = dir.path().join("g2");
    let out = ricci(&["flow", "--input", &input, "--geometry", "h2", "--scheme", "inversive", "--output", prefix.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = stdout_json(&out);
    assert_eq!(report["geometry"], "H2");
    assert_eq!(report["topology"]["genus"], 2);
}

#[test]
fn check_tetrahedron() {
    let input = data("tetrahedron.obj");
    let out = ricci(&["check", "--input", input.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let report = stdout_json(&out);
    assert_eq!(report["topology"]["euler_characteristic"], 2);
    assert!(report["gauss_bonnet"]["residual"].as_f64().unwrap().abs() < 1e-12);
    assert_eq!(report["oracle"]["faces"], 4);
    assert_eq!(report["ok"], true);
}

#[test]
fn check_rejects_quad_faces() {
    let input = data("quad_face.obj");
    let out = ricci(&["check", "--input", input.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(out.stdout.is_empty());
    assert!(String::from_utf8_lossy(&out.stderr).contains("only triangles"));
}

#[test]
fn check_torus_in_every_background() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_shape(dir.path(), "torus.obj", &shapes::torus(10, 7, 1.0, 0.4));
    for (geometry, scheme) in [("e2", "inversive"), ("h2", "mixed"), ("s2", "virtual")] {
        let out = ricci(&["check", "--input", &input, "--geometry", geometry, "--scheme", scheme]);
        assert_eq!(out.status.code(), Some(0), "{geometry} {scheme}: {}", String::from_utf8_lossy(&out.stderr));
        let report = stdout_json(&out);
        assert_eq!(report["topology"]["genus"], 1);
        assert!(report["gauss_bonnet"]["residual"].as_f64().unwrap().abs() < 1e-9);
        assert!(report["oracle"]["max_rel_error"].as_f64().unwrap() <= 1e-5);
    }
}

#[test]
fn missing_input_file() {
    let out = ricci(&["check", "--input", "/nonexistent/mesh.obj"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("failed to read"));
}

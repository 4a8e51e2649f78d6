use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn mesh(name: &str) -> String {
    format!("{}/../core/meshes/{name}.json", env!("CARGO_MANIFEST_DIR"))
}

fn vem(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vem")).args(args).output().expect("runs")
}

fn json(args: &[&str]) -> (i32, Value) {
    let mut a = args.to_vec();
    a.push("--json");
    let out = vem(&a);
    let v = serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stderr)));
    (out.status.code().unwrap(), v)
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("vem-cli-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&d).unwrap();
    d
}

const HARMONIC: &str = r#"{"degree":3,"terms":[[0,[3,0,0],4.0],[0,[1,2,0],-12.0],[1,[2,1,0],-12.0],[1,[0,3,0],4.0]]}"#;

#[test]
fn validate_reports() {
    let (code, r) = json(&["validate", "--mesh", &mesh("unit_cube")]);
    assert_eq!(code, 0);
    assert_eq!(r["checks"][0]["status"], "pass");

    let mut doc: Value = serde_json::from_str(&std::fs::read_to_string(mesh("unit_cube")).unwrap()).unwrap();
    doc["faces"][3].as_array_mut().unwrap().reverse();
    let path = scratch("reversed").join("cube.json");
    std::fs::write(&path, doc.to_string()).unwrap();
    let (code, r) = json(&["validate", "--mesh", path.to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(r["checks"][0]["measured"].as_str().unwrap().contains("face 3"));

    let (code, r) = json(&["validate", "--mesh", &mesh("unit_square"), "--kappa", "0.5"]);
    assert_eq!(code, 0);
    assert!(r["checks"].as_array().unwrap().iter().any(|c| c["status"] == "warn"));
}

#[test]
fn dims_examples() {
    let (code, r) = json(&["dims", "--mesh", &mesh("unit_cube"), "--family", "face", "--k", "1"]);
    assert_eq!(code, 0);
    assert_eq!(r["details"]["local"], serde_json::json!([21]));
    let (_, r) = json(&["dims", "--mesh", &mesh("unit_square"), "--family", "edge", "--k", "1"]);
    assert_eq!(r["details"]["local"], serde_json::json!([9]));
    let (_, r) = json(&["dims", "--mesh", &mesh("squares_2x2"), "--family", "elem", "--k", "0"]);
    assert_eq!(r["details"]["local"], serde_json::json!([1, 1, 1, 1]));
    let (code, r) = json(&["dims", "--mesh", &mesh("unit_square"), "--family", "face", "--k", "0", "--profile", "0,0,-1"]);
    assert_eq!(code, 0);
    assert_eq!(r["details"]["local"], serde_json::json!([4]));
    assert_eq!(vem(&["dims", "--mesh", &mesh("unit_square"), "--family", "face", "--k", "0"]).status.code(), Some(2));
}

#[test]
fn project_examples() {
    let (code, r) = json(&["project", "--mesh", &mesh("voronoi5"), "--family", "face", "--k", "1"]);
    assert_eq!(code, 0);
    assert!(r["details"]["errors"].as_array().unwrap().iter().all(|e| e.as_f64().unwrap() < 1e-12));
    let (code, r) = json(&["project", "--mesh", &mesh("unit_square"), "--family", "face", "--k", "2", "--field", HARMONIC]);
    assert_eq!(code, 0);
    assert!(r["details"]["errors"][0].as_f64().unwrap() < 1e-10);
    let (code, _) = json(&["project", "--mesh", &mesh("unit_square"), "--family", "face", "--k", "1", "--field", HARMONIC]);
    assert_eq!(code, 1);
    let quad = r#"{"degree":2,"terms":[[0,[2,0,0],1.0],[1,[1,1,0],-0.5],[2,[0,0,2],2.0]]}"#;
    let (code, r) = json(&["project", "--mesh", &mesh("prism"), "--family", "edge", "--k", "2", "--field", quad]);
    assert_eq!(code, 0);
    assert!(r["details"]["errors"][0].as_f64().unwrap() < 1e-10);
    assert_eq!(vem(&["project", "--mesh", &mesh("unit_cube"), "--family", "vert", "--k", "1"]).status.code(), Some(2));
}

#[test]
fn complex_examples() {
    let (code, r) = json(&["complex", "--mesh", &mesh("unit_square"), "--k", "2"]);
    assert_eq!(code, 0);
    for s in r["details"]["sequences"].as_array().unwrap() {
        assert_eq!(s["euler"], 1);
    }
    let (code, r) = json(&["complex", "--mesh", &mesh("unit_cube"), "--k", "3"]);
    assert_eq!(code, 0);
    assert_eq!(r["details"]["sequences"][0]["euler"], 1);
    let out = vem(&["complex", "--mesh", &mesh("unit_cube"), "--k", "2"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("threshold"));
}

#[test]
fn selftest_outcomes() {
    let (code, r) = json(&["selftest"]);
    assert_eq!(code, 0, "{r}");
    assert_eq!(r["failures"], 0);
    let (code, r) = json(&["selftest", "--inject-fault", "sign-flip"]);
    assert_eq!(code, 1);
    assert!(r["failures"].as_u64().unwrap() > 0);
    let empty = scratch("empty");
    assert_eq!(vem(&["selftest", "--mesh-dir", empty.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(vem(&["validate", "--mesh", "/nonexistent/mesh.json"]).status.code(), Some(2));
}

#[test]
fn reports_are_deterministic() {
    let args = ["complex", "--mesh", &mesh("prism"), "--k", "3", "--json"];
    let a = vem(&args).stdout;
    let b = Command::new(env!("CARGO_BIN_EXE_vem")).args(args).env("VEM_THREADS", "1").output().unwrap().stdout;
    assert!(!a.is_empty());
    assert_eq!(a, b);
    let t = vem(&["dims", "--mesh", &mesh("prism"), "--k", "1", "--json", "--timing"]);
    let v: Value = serde_json::from_slice(&t.stdout).unwrap();
    assert!(v["wall_time_s"].is_number());
}

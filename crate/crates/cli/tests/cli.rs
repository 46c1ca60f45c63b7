//! Exit codes, overrides and error files of the `wgspec` binary.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn wgspec(dir: &Path, args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_wgspec"));
    cmd.args(args).current_dir(dir);
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

const HOMOGENIZE: &str = "[coefficient]\nkind = \"periodic_cell\"\nexpr = \"1\"\ncell_resolution = 8\n[run]\nmode = \"homogenize\"\n";

#[test]
fn success_writes_results_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "h.toml", HOMOGENIZE);
    let out = wgspec(dir.path(), &["homogenize", "--config", &cfg, "--out", "res"], &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = read_json(&dir.path().join("res/manifest.json"));
    let hash = manifest["manifest_hash"].as_str().unwrap();
    assert_eq!(hash.len(), 64);
    assert!(manifest["wall_time_seconds"].is_f64());
    assert_eq!(read_json(&dir.path().join("res/result.json"))["manifest_hash"], hash);
}

#[test]
fn unknown_key_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", "[geomtry]\nl = 1.0\n[run]\nmode = \"homogenize\"\n");
    let out = wgspec(dir.path(), &["homogenize", "--config", &cfg, "--out", "res"], &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("geomtry"));
    let err = read_json(&dir.path().join("res/error.json"));
    assert_eq!(err["module"], "config");
    assert_eq!(err["exit_code"], 2);
}

#[test]
fn bad_expression_reports_position() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "e.toml", "[coefficient]\nkind = \"periodic_cell\"\nexpr = \"1+*2\"\n[run]\nmode = \"homogenize\"\n");
    let out = wgspec(dir.path(), &["homogenize", "--config", &cfg], &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("position 3"));
}

#[test]
fn localize_without_coefficient_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "l.toml", "[run]\nmode = \"localize\"\n");
    let out = wgspec(dir.path(), &["localize", "--config", &cfg], &[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn solver_error_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let text = "[cross_section]\nresolution = 4\n[coefficient]\nkind = \"cross_section\"\nexpr = \"1 + x1\"\n[run]\nmode = \"localize\"\n";
    let cfg = write(dir.path(), "p.toml", text);
    let out = wgspec(dir.path(), &["localize", "--config", &cfg, "--out", "res"], &[]);
    assert_eq!(out.status.code(), Some(3));
    let err = read_json(&dir.path().join("res/error.json"));
    assert_eq!(err["module"], "localization");
}

#[test]
fn resource_guard_exits_with_four() {
    let dir = tempfile::tempdir().unwrap();
    let text = "[cross_section]\ndomain = \"centered_square\"\nresolution = 64\n[coefficient]\nkind = \"cross_section\"\nexpr = \"1\"\n[run]\nmode = \"oracle\"\nscales = [0.1]\noracle_elements = 64\n";
    let cfg = write(dir.path(), "o.toml", text);
    let out = wgspec(dir.path(), &["oracle", "--config", &cfg, "--out", "res"], &[]);
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(read_json(&dir.path().join("res/error.json"))["module"], "verification");
}

#[test]
fn overrides_and_thread_cap() {
    let dir = tempfile::tempdir().unwrap();
    let text = "[cross_section]\nresolution = 8\n[coefficient]\nkind = \"cross_section\"\nexpr = \"1\"\n[run]\nmode = \"effective\"\nscales = [0.5]\n";
    let cfg = write(dir.path(), "f.toml", text);
    let args = ["effective", "--config", &cfg, "--out", "res", "--eigenpairs", "2", "--scales", "0.1,0.05"];
    let out = wgspec(dir.path(), &args, &[("WGSPEC_THREADS", "2")]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = std::fs::read_to_string(dir.path().join("res/manifest.json")).unwrap();
    assert!(manifest.contains("\"eigenpairs\":2"));
    assert!(manifest.contains("\"scales\":[1.0000000000000001e-1,5.0000000000000003e-2]"));
    assert!(manifest.contains("\"threads\":2"));
}

#[test]
fn invalid_thread_cap_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "h.toml", HOMOGENIZE);
    let out = wgspec(dir.path(), &["homogenize", "--config", &cfg], &[("WGSPEC_THREADS", "many")]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_mode_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "h.toml", HOMOGENIZE);
    let out = wgspec(dir.path(), &["fit", "--config", &cfg], &[]);
    assert_eq!(out.status.code(), Some(2));
}

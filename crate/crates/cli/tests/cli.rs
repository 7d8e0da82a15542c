//! Exit codes and artifacts of the `mosaicreg` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn mosaicreg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mosaicreg")).args(args).output().expect("spawn mosaicreg")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn synth(dir: &Path, extra: &[&str]) {
    let out_dir = dir.to_str().unwrap();
    let mut args = vec!["synth", "--out", out_dir];
    args.extend_from_slice(extra);
    let out = mosaicreg(&args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

fn config(dir: &Path) -> String {
    dir.join("config.json").to_str().unwrap().to_string()
}

fn files(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push(path.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

#[test]
fn synth_register_diagnose_succeeds() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path(), &["--seed", "5"]);
    let cfg = config(tmp.path());
    for command in ["plane", "register", "diagnose"] {
        let out = mosaicreg(&[command, "--config", &cfg]);
        assert_eq!(code(&out), 0, "{command}: {}", String::from_utf8_lossy(&out.stderr));
    }
    for name in ["plane.json", "report.json", "residuals.csv", "overlay.ppm", "interpatch.csv", "ambiguity.json"] {
        assert!(tmp.path().join("out").join(name).exists(), "{name}");
    }
}

#[test]
fn same_seed_twice_gives_identical_trees() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [a.path(), b.path()] {
        synth(dir, &["--seed", "11"]);
        let out = mosaicreg(&["register", "--config", &config(dir)]);
        assert_eq!(code(&out), 0);
    }
    let (fa, fb) = (files(a.path()), files(b.path()));
    assert_eq!(fa, fb);
    for rel in &fa {
        assert_eq!(std::fs::read(a.path().join(rel)).unwrap(), std::fs::read(b.path().join(rel)).unwrap(), "{rel:?}");
    }
}

#[test]
fn invalid_scene_lists_every_problem() {
    let tmp = tempfile::tempdir().unwrap();
    let out = mosaicreg(&[
        "synth",
        "--out",
        tmp.path().to_str().unwrap(),
        "--set",
        r#"markings=[{"kind":"disk","center":[2,2],"radius":6,"intensity":200},{"kind":"disk","center":[100,100],"radius":-1,"intensity":300}]"#,
    ]);
    assert_eq!(code(&out), 2);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert_eq!(stderr.lines().filter(|l| l.trim_start().starts_with("- markings[")).count(), 3, "{stderr}");
    assert!(!tmp.path().join("map.pgm").exists());
}

#[test]
fn missing_model_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path(), &[]);
    std::fs::remove_dir_all(tmp.path().join("model")).unwrap();
    let out = mosaicreg(&["register", "--config", &config(tmp.path())]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn missing_config_flag_is_a_usage_error() {
    assert_eq!(code(&mosaicreg(&["register"])), 2);
    assert_eq!(code(&mosaicreg(&["register", "--config", "/nonexistent/config.json"])), 2);
    assert_eq!(code(&mosaicreg(&["frobnicate"])), 2);
}

#[test]
fn coincident_rois_exit_with_conditioning_code() {
    let tmp = tempfile::tempdir().unwrap();
    let roi = r#"{"camera":0,"vertices":[[100,80],[220,80],[220,170],[100,170]]}"#;
    let rois = format!("rois=[{roi},{roi},{roi}]");
    synth(tmp.path(), &["--set", &rois]);
    let out = mosaicreg(&["register", "--config", &config(tmp.path())]);
    assert_eq!(code(&out), 4, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn iteration_limit_exits_with_divergence_code() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path(), &["--seed", "9"]);
    let out = mosaicreg(&["register", "--config", &config(tmp.path()), "--set", "registration.max_iterations=1"]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(tmp.path().join("out/report.json").exists());
}

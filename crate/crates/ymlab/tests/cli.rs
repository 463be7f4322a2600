use std::path::Path;
use std::process::Command;

fn ymlab(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_ymlab")).args(args).env("YMLAB_WORKERS", "1").output().unwrap()
}

fn payload_hash(dir: &Path, prefix: &str) -> String {
    let entry = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.extension().is_some_and(|e| e == "json") && p.file_name().unwrap().to_str().unwrap().starts_with(prefix))
        .unwrap();
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(entry).unwrap()).unwrap();
    v["payload_hash"].as_str().unwrap().to_string()
}

#[test]
fn mollifier_check_writes_record_and_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let out = ymlab(&["mollifier-check", "--out", d.path().to_str().unwrap(), "--seed", "5"]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    assert_eq!(payload_hash(a.path(), "mollifier-check"), payload_hash(b.path(), "mollifier-check"));
    let names: Vec<String> = std::fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    assert!(names.iter().any(|n| n.ends_with("-norms.csv")), "{names:?}");
}

#[test]
fn mass_scan_reports_d_g() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("run.toml");
    std::fs::write(&cfg, "experiment = \"mass-scan\"\ngroup_n = 3\nsamples = 500\n").unwrap();
    let out = ymlab(&["mass-scan", "--config", cfg.to_str().unwrap(), "--out", d.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let json = std::fs::read_dir(d.path())
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.extension().is_some_and(|e| e == "json"))
        .unwrap();
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(json).unwrap()).unwrap();
    assert_eq!(v["payload"]["d_g"], 4);
}

#[test]
fn configuration_errors_exit_2() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("bad.toml");
    std::fs::write(&cfg, "experiment = \"mass-scan\"\nsampels = 3\n").unwrap();
    let out = ymlab(&["mass-scan", "--config", cfg.to_str().unwrap(), "--out", d.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sampels"));

    std::fs::write(&cfg, "experiment = \"toy-strong\"\n").unwrap();
    let out = ymlab(&["mass-scan", "--config", cfg.to_str().unwrap(), "--out", d.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    let out = ymlab(&["toy-strong", "--workers", "0", "--out", d.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn failed_assertion_exits_1() {
    // a single coarse ε cannot reach the 1e-3 relative gap
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("run.toml");
    std::fs::write(&cfg, "experiment = \"fermion-check\"\ngrid_points = 256\nepsilon_cells = [4]\nsamples = 5\n").unwrap();
    let out = ymlab(&["fermion-check", "--config", cfg.to_str().unwrap(), "--out", d.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stdout));
}

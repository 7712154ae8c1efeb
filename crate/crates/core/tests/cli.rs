use std::path::Path;
use std::process::Command;

fn sim() -> Command {
    Command::new(env!("CARGO_BIN_EXE_afdm-sim"))
}

fn sweep(out: &Path, threads: &str) {
    let status = sim()
        .args(["nmse-sweep", "--over", "snr-p", "--grid", "20,30", "--trials", "200", "--seed", "9", "--threads", threads, "--out"])
        .arg(out)
        .status()
        .unwrap();
    assert!(status.success());
}

#[test]
fn sweep_writes_csv_and_sidecar_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a.csv"), dir.path().join("b.csv"), dir.path().join("c.csv"));
    sweep(&a, "1");
    sweep(&b, "1");
    sweep(&c, "4");
    let text = std::fs::read(&a).unwrap();
    assert_eq!(text, std::fs::read(&b).unwrap());
    assert_eq!(text, std::fs::read(&c).unwrap());
    let text = String::from_utf8(text).unwrap();
    assert!(text.starts_with("sweep_var,nmse_mc_db,nmse_closed_db,ber_mc,ber_bound,ber_theory,ci_halfwidth,trials\n"));
    assert_eq!(text.lines().count(), 3);
    let side: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("a.json")).unwrap()).unwrap();
    assert_eq!(side["config"]["seed"], 9);
    assert_eq!(side["sweep_variable"], "snr_p_db");
}

#[test]
fn toml_config_is_honoured() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "trials = 50\nseed = 3\n\n[frame]\nsnr_p_db = 25.0\n").unwrap();
    let out = sim().args(["nmse-sweep", "--grid", "25", "--config"]).arg(&cfg).output().unwrap();
    assert!(out.status.success());
    let csv = String::from_utf8(out.stdout).unwrap();
    assert!(csv.lines().nth(1).unwrap().ends_with(",50"), "{csv}");
}

#[test]
fn bad_config_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"grid": {"n": 16}}"#).unwrap();
    let out = sim().args(["nmse-sweep", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn validate_passes() {
    let out = sim().arg("validate").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().count() >= 7 && text.lines().all(|l| l.starts_with("PASS")), "{text}");
}

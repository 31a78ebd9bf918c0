//! Exit-code and smoke tests for the command-line driver.

use std::process::Command;

fn bifi() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bifi"))
}

const SMOKE: &str = r#"
m = 8
k = 3
m_eval = 2
k_sweep = [2, 3]
t_final = 0.02
[hi_grid]
dim = 1
x_len = [1.0]
n_x = [16]
l_v = 8.0
n_v = 16
[lofi]
CoarseKinetic = 2
"#;

#[test]
fn invalid_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "m = 2\nk = 5\n").unwrap();
    let out = bifi().args(["offline", "--config"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn missing_artifacts_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("smoke.toml");
    std::fs::write(&path, SMOKE).unwrap();
    let out = bifi()
        .args(["evaluate", "--config"])
        .arg(&path)
        .args(["--output-dir"])
        .arg(dir.path().join("empty"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn offline_then_online_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("smoke.toml");
    std::fs::write(&path, SMOKE).unwrap();
    let out_dir = dir.path().join("run");
    let offline = bifi()
        .args(["offline", "--config"])
        .arg(&path)
        .args(["--output-dir"])
        .arg(&out_dir)
        .args(["--workers", "2"])
        .output()
        .unwrap();
    assert_eq!(
        offline.status.code(),
        Some(0),
        "stderr: {}",
        String::from_utf8_lossy(&offline.stderr)
    );
    assert!(out_dir.join("manifest.json").exists());

    let online = bifi()
        .args(["online", "--config"])
        .arg(&path)
        .args(["--output-dir"])
        .arg(&out_dir)
        .args(["--n-queries", "2"])
        .output()
        .unwrap();
    assert_eq!(
        online.status.code(),
        Some(0),
        "stderr: {}",
        String::from_utf8_lossy(&online.stderr)
    );
    assert!(out_dir.join("online/query_0001.bin").exists());
}

#[test]
fn deterministic_config_exits_2() {
    // sigma = 0 leaves no random inputs to sweep over
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("flat.toml");
    std::fs::write(
        &path,
        format!(
            "{SMOKE}\n[initial]\nprofile = \"Equilibrium\"\nsigma = 0.0\nell = 0.08\nfraction = 0.95\nperiodic_covariance = true\n"
        ),
    )
    .unwrap();
    let out = bifi()
        .args(["offline", "--config"])
        .arg(&path)
        .args(["--output-dir"])
        .arg(dir.path().join("run"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

//! End-to-end tests of the `eb` binary: exit codes, summaries, artifacts,
//! and bit-stable branch resume.

use std::path::{Path, PathBuf};
use std::process::Command;

fn eb() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_eb"));
    cmd.env_remove("EB_OUTPUT_DIR");
    cmd
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn read_summary(dir: &Path) -> serde_json::Value {
    let text = std::fs::read_to_string(dir.join("summary.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

const TWO_POLE_MODEL: &str = r#"
[model]
mode = "compact"
tau = 1.0
n = 2

[[divisor]]
re = 0.0
im = 0.0
mult = 1

[[divisor]]
infinity = true
mult = 1

[grid]
resolution = 32
"#;

const ROOTS_MODEL: &str = r#"
[model]
mode = "compact"
tau = 1.0
n = 4

[[divisor]]
re = 1.0
im = 0.0
mult = 1

[[divisor]]
re = -1.0
im = 0.0
mult = 1

[[divisor]]
re = 0.0
im = 1.0
mult = 1

[[divisor]]
re = 0.0
im = -1.0
mult = 1

[grid]
resolution = 32
"#;

#[test]
fn symmetric_summary_reports_the_known_coupling() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "run.toml",
        "[model]\nmode = \"compact\"\ntau = 1.0\nn = 2\n\n[schedule]\nb_list = [1.0]\n",
    );
    let out = tmp.path().join("out");
    let status = eb()
        .arg("solve-symmetric")
        .arg("--config")
        .arg(&cfg)
        .arg("--output")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let summary = read_summary(&out);
    let profile = &summary["results"]["profiles"][0];
    let lambda = profile["lambda"].as_f64().unwrap();
    assert!((lambda - 0.127323190021791).abs() < 1e-12);
    assert!(profile["conserved_defect"].as_f64().unwrap().abs() < 1e-8);
    assert!(out.join("symmetric_00.csv").exists());
    assert_eq!(summary["config"]["model"]["alpha"].as_f64().unwrap(), 0.5);
}

#[test]
fn conflicting_schedule_kinds_exit_with_config_code() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "run.toml",
        "[model]\nmode = \"compact\"\nn = 2\n\n[schedule]\nlambda_list = [0.1]\nb_list = [1.0]\n",
    );
    let status = eb()
        .arg("solve-pde")
        .arg("--config")
        .arg(&cfg)
        .arg("--output")
        .arg(tmp.path().join("out"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn non_straddling_shooting_bracket_exits_with_solver_code() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "run.toml",
        "[model]\nmode = \"planar\"\nn = 1\na = 0.5\n\n[schedule.chmy]\ns_min = 5.0\ns_max = 6.0\n",
    );
    let status = eb()
        .arg("solve-chmy")
        .arg("--config")
        .arg(&cfg)
        .arg("--output")
        .arg(tmp.path().join("out"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(3));
}

#[test]
fn pde_checkpoint_diagnoses_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    let text = format!("{TWO_POLE_MODEL}\n[schedule]\nlambda_list = [0.1]\n");
    let cfg = write_config(tmp.path(), "run.toml", &text);
    let out = tmp.path().join("out");
    let status = eb()
        .arg("solve-pde")
        .arg("--config")
        .arg(&cfg)
        .arg("--output")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out.join("state.ebck").exists());
    assert!(out.join("state_log.csv").exists());

    let status = eb()
        .arg("diagnose")
        .arg("--config")
        .arg(&cfg)
        .arg("--output")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let summary = read_summary(&out);
    let results = &summary["results"];
    assert_eq!(results["pass"], serde_json::Value::Bool(true));
    assert_eq!(results["gauss_bonnet"]["ok"], serde_json::Value::Bool(true));
    assert_eq!(results["flux_identity"]["value"].as_f64().unwrap(), 0.0);
    assert_eq!(results["lambda"].as_f64().unwrap(), 0.1);
}

#[test]
fn branch_resume_reproduces_the_uninterrupted_path() {
    let tmp = tempfile::tempdir().unwrap();
    let text = format!(
        "{ROOTS_MODEL}\n[schedule]\nlambda_list = [0.0379081662320395, 0.018954083116019749]\n\n[checkpoint]\npath = \"branch.ebck\"\n"
    );
    let cfg = write_config(tmp.path(), "run.toml", &text);
    let full = tmp.path().join("full");
    let status = eb()
        .arg("maximal-branch")
        .arg("--config")
        .arg(&cfg)
        .arg("--output")
        .arg(&full)
        .status()
        .unwrap();
    assert!(status.success());

    // A run interrupted after the smallest coupling leaves only its
    // checkpoint behind; resuming must rebuild the rest bit for bit.
    let resumed = tmp.path().join("resumed");
    std::fs::create_dir_all(&resumed).unwrap();
    for name in ["branch_01.ebck", "branch_01.json"] {
        std::fs::copy(full.join(name), resumed.join(name)).unwrap();
    }
    let status = eb()
        .arg("maximal-branch")
        .arg("--config")
        .arg(&cfg)
        .arg("--output")
        .arg(&resumed)
        .arg("--resume")
        .status()
        .unwrap();
    assert!(status.success());

    let bytes_full = std::fs::read(full.join("branch_00.ebck")).unwrap();
    let bytes_resumed = std::fs::read(resumed.join("branch_00.ebck")).unwrap();
    assert_eq!(bytes_full, bytes_resumed);
    assert_eq!(read_summary(&full)["results"], read_summary(&resumed)["results"]);
}

#[test]
fn non_maximal_branch_is_rejected_with_identity_code() {
    let tmp = tempfile::tempdir().unwrap();
    let text = format!("{TWO_POLE_MODEL}\n[schedule]\nlambda_list = [0.12, 0.08]\n");
    let cfg = write_config(tmp.path(), "run.toml", &text);
    let output = eb()
        .arg("maximal-branch")
        .arg("--config")
        .arg(&cfg)
        .arg("--output")
        .arg(tmp.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(4));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("branch identity"), "stderr: {stderr}");
}

#[test]
fn continue_volume_requires_a_starting_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let text = format!("{ROOTS_MODEL}\n[schedule]\nvolume_list = [220.0]\n");
    let cfg = write_config(tmp.path(), "run.toml", &text);
    let status = eb()
        .arg("continue-volume")
        .arg("--config")
        .arg(&cfg)
        .arg("--output")
        .arg(tmp.path().join("out"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

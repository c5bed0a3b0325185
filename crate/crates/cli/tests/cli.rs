//! End-to-end tests of the `degenflow` binary: exit-code contract,
//! manifest headers, and byte-identical reruns.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_degenflow");

fn base_config() -> String {
    r#"
[params]
p = 3.0
delta = 0.5
eps = 0.1
n = 2

[grid]
extent = [[0.0, 2.0], [0.0, 2.0]]
nx = [9, 9]
dt = 0.02
nt = 4

[data]
profile = "manufactured"

[lemmas]
p_values = [3.0]
delta_values = [0.5]
n_values = [2]
samples = 500
calibration_samples = 500
"#
    .to_string()
}

fn run(args: &[&str], config: &str, dir: &Path) -> Output {
    let cfg = dir.join("cfg.toml");
    fs::write(&cfg, config).unwrap();
    Command::new(BIN)
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap()
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().unwrap_or(-1)
}

#[test]
fn solve_writes_artifacts_and_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["solve"], &base_config(), dir.path());
    assert_eq!(exit_code(&out), 0, "{out:?}");
    let conv = dir.path().join("out/convergence.csv");
    let first_csv = fs::read(&conv).unwrap();
    let first_bin = fs::read(dir.path().join("out/u.bin")).unwrap();
    assert!(dir.path().join("out/errors.csv").exists());
    let header = String::from_utf8_lossy(&first_csv).to_string();
    assert!(header.starts_with("# command: solve\n# seed: 42\n# config: "));

    let out = run(&["solve"], &base_config(), dir.path());
    assert_eq!(exit_code(&out), 0);
    assert_eq!(first_csv, fs::read(&conv).unwrap());
    assert_eq!(first_bin, fs::read(dir.path().join("out/u.bin")).unwrap());
}

#[test]
fn verify_lemmas_passes_and_negative_control_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["verify-lemmas"], &base_config(), dir.path());
    assert_eq!(exit_code(&out), 0, "{out:?}");
    let csv = fs::read_to_string(dir.path().join("out/lemmas.csv")).unwrap();
    assert!(csv.lines().any(|l| l.starts_with("brasco_monotonicity,")));

    // negative control: an impossible tolerance makes every gap "fail"
    let corrupted = base_config().replace(
        "calibration_samples = 500",
        "calibration_samples = 500\ntolerance = -1.0",
    );
    let out = run(&["verify-lemmas"], &corrupted, dir.path());
    assert_eq!(exit_code(&out), 1, "{out:?}");
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    // unknown key
    let out = run(&["solve"], &base_config().replace("[data]", "[data]\nbogus = 1"), dir.path());
    assert_eq!(exit_code(&out), 2, "{out:?}");
    // estimates without geometry section
    let out = run(&["estimates"], &base_config(), dir.path());
    assert_eq!(exit_code(&out), 2, "{out:?}");
    // estimates with a cylinder leaving the box
    let bad_geom = base_config()
        + "\n[estimates]\ncenter = [1.0, 1.0]\nradius = 5.0\ndiff_h = 0.25\n";
    let out = run(&["estimates"], &bad_geom, dir.path());
    assert_eq!(exit_code(&out), 2, "{out:?}");
    // empty lemma grid
    let out = run(
        &["verify-lemmas"],
        &base_config().replace("p_values = [3.0]", "p_values = []"),
        dir.path(),
    );
    assert_eq!(exit_code(&out), 2, "{out:?}");
    // missing config file
    let out = Command::new(BIN)
        .args(["solve", "--config", "/nonexistent/x.toml"])
        .output()
        .unwrap();
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn eps_sweep_single_rung_is_report_only() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = base_config() + "\n[sweep]\neps_ladder = [0.1]\n";
    let out = run(&["eps-sweep"], &cfg, dir.path());
    assert_eq!(exit_code(&out), 0, "{out:?}");
    let text = String::from_utf8_lossy(&out.stdout).to_string();
    assert!(text.contains("report-only"), "{text}");
}

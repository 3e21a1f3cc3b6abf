//! Exit-code and output checks for the individual subcommands.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_kronsim"))
}

fn case(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../cases").join(name)
}

#[test]
fn check_accepts_shipped_cases() {
    for name in ["single_vsc.json", "nine_bus.json"] {
        let out = bin().args(["check", case(name).to_str().unwrap()]).output().unwrap();
        assert!(out.status.success(), "{name} failed check");
        let stdout = String::from_utf8_lossy(&out.stdout);
        assert!(stdout.contains("case OK"));
        assert!(stdout.contains("differential equations"));
    }
}

#[test]
fn check_reports_missing_file_as_io_error() {
    let out = bin().args(["check", "no_such_case.json"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("ERROR IoError:"));
}

#[test]
fn equilibrium_prints_states_and_residual() {
    let out = bin()
        .args(["equilibrium", case("single_vsc.json").to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("vsc1.i_x"));
    assert!(stdout.contains("node1.ut"));
    assert!(stdout.contains("residual |f|_inf"));
}

/// Zero current references and no loads: all-zero currents and the bus
/// pinned at the grid voltage.
#[test]
fn equilibrium_of_zero_reference_case_is_zero_flow() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(case("single_vsc.json"))
        .unwrap()
        .replace(r#""id_ref": 1.59"#, r#""id_ref": 0.0"#);
    let path = dir.path().join("zero_ref.json");
    std::fs::write(&path, text).unwrap();
    let out = bin()
        .args(["equilibrium", path.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("vsc1.i_x = 0.000000000000"));
    assert!(stdout.contains("vsc1.i_y = 0.000000000000"));
    assert!(stdout.contains("node1.ut = (1.000000000000, 0.000000000000)"));
}

/// An unreachable residual tolerance must end in a structured
/// divergence error and a nonzero exit code.
#[test]
fn equilibrium_divergence_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(case("single_vsc.json"))
        .unwrap()
        .replace(
            r#""record_stride": 10"#,
            r#""record_stride": 10, "newton_tol": 1e-30"#,
        );
    let path = dir.path().join("diverge.json");
    std::fs::write(&path, text).unwrap();
    let out = bin()
        .args(["equilibrium", path.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("ERROR NewtonDivergence:"));
}

#[test]
fn run_warns_about_late_events() {
    let dir = tempfile::tempdir().unwrap();
    let out_csv = dir.path().join("out.csv");
    // shortening the horizon below the event time must surface a warning
    let out = bin()
        .args([
            "run",
            case("nine_bus.json").to_str().unwrap(),
            "--model",
            "reduced",
            "--t-end",
            "0.1",
            "--out",
            out_csv.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("never apply"));
    assert!(out_csv.exists());
}

#[test]
fn compare_without_tol_reports_only() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    std::fs::write(&a, "time_s,x\n0.0e0,1.0e0\n1.0e0,2.0e0\n").unwrap();
    let out = bin()
        .args(["compare", a.to_str().unwrap(), a.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("overall max_abs"));
}

#[test]
fn plot_rejects_unknown_signal() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    std::fs::write(&a, "time_s,x\n0.0e0,1.0e0\n1.0e0,2.0e0\n").unwrap();
    let out = bin()
        .args([
            "plot",
            a.to_str().unwrap(),
            "--signals",
            "nope",
            "--out",
            dir.path().join("fig.svg").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("ERROR UnknownSignal:"));
}

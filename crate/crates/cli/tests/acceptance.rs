//! Acceptance criterion 10: the command-line tooling contract.
//!
//! Runs the real binary end-to-end: reduced run → reference run →
//! compare within 1e-6 (exit 0), bit-exact CSV round trip, and
//! structured rejection of a suite of malformed case files.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_kronsim"))
}

fn cases_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../cases")
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("spawn kronsim");
    assert!(
        out.status.success(),
        "expected success, got {:?}\nstdout: {}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn run_err(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("spawn kronsim");
    assert!(
        !out.status.success(),
        "expected failure, got success\nstdout: {}",
        String::from_utf8_lossy(&out.stdout)
    );
    out
}

#[test]
fn criterion_10_tooling_contract() {
    match std::panic::catch_unwind(criterion_10_body) {
        Ok(detail) => println!("PASS criterion 10 (tooling contract): {detail}"),
        Err(cause) => {
            println!("FAIL criterion 10 (tooling contract)");
            std::panic::resume_unwind(cause);
        }
    }
}

fn criterion_10_body() -> String {
    let dir = tempfile::tempdir().unwrap();
    let nine_bus = cases_dir().join("nine_bus.json");
    let reduced_csv = dir.path().join("reduced.csv");
    let reference_csv = dir.path().join("reference.csv");

    // run both models across the reference step (0.8 s covers the event)
    run_ok(bin().args([
        "run",
        nine_bus.to_str().unwrap(),
        "--model",
        "reduced",
        "--t-end",
        "0.8",
        "--out",
        reduced_csv.to_str().unwrap(),
    ]));
    run_ok(bin().args([
        "run",
        nine_bus.to_str().unwrap(),
        "--model",
        "reference",
        "--t-end",
        "0.8",
        "--out",
        reference_csv.to_str().unwrap(),
    ]));

    // pipeline exit-code contract: within 1e-6 → exit 0
    let out = run_ok(bin().args([
        "compare",
        reduced_csv.to_str().unwrap(),
        reference_csv.to_str().unwrap(),
        "--tol",
        "1e-6",
    ]));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("within tolerance"));

    // an absurd tolerance must flip the exit code
    let out = run_err(bin().args([
        "compare",
        reduced_csv.to_str().unwrap(),
        reference_csv.to_str().unwrap(),
        "--tol",
        "1e-30",
    ]));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ERROR ToleranceExceeded:"));

    // CSV round trip is bit-exact: read back and re-write, compare bytes
    let round = dir.path().join("roundtrip.csv");
    let ts = kronsim::timeseries::TimeSeries::read_csv_path(&reduced_csv).unwrap();
    ts.write_csv_path(&round).unwrap();
    let original = fs::read(&reduced_csv).unwrap();
    let rewritten = fs::read(&round).unwrap();
    assert_eq!(original, rewritten, "CSV round trip changed bytes");

    // malformed-case suite: each must be rejected with a structured error
    let malformed: [(&str, &str, &str); 6] = [
        ("syntax.json", "{ this is not json", "ERROR SyntaxError:"),
        (
            "negative_inductance.json",
            &nine_bus_with(|text| {
                text.replace(
                    r#"{ "from": "4", "to": "5", "inductance": 0.085 }"#,
                    r#"{ "from": "4", "to": "5", "inductance": -0.1 }"#,
                )
            }),
            "ERROR NonpositiveInductance:",
        ),
        (
            "unknown_device.json",
            &nine_bus_with(|text| {
                text.replace(
                    r#"{ "id": "2", "attachments": ["vsc1"] }"#,
                    r#"{ "id": "2", "attachments": ["ghost"] }"#,
                )
            }),
            "ERROR MissingDevice:",
        ),
        (
            "two_slacks.json",
            &nine_bus_with(|text| {
                text.replace(
                    r#"{ "id": "2", "attachments": ["vsc1"] }"#,
                    r#"{ "id": "2", "attachments": ["vsc1", "grid2"] }"#,
                )
                .replace(
                    r#""grid": {
      "kind": "slack",
      "lg": 0.01,
      "u_g": { "x": 1.0, "y": 0.0 }
    },"#,
                    r#""grid": {
      "kind": "slack",
      "lg": 0.01,
      "u_g": { "x": 1.0, "y": 0.0 }
    },
    "grid2": {
      "kind": "slack",
      "lg": 0.01,
      "u_g": { "x": 1.0, "y": 0.0 }
    },"#,
                )
            }),
            "ERROR MultipleSlack:",
        ),
        (
            "bad_event_target.json",
            &nine_bus_with(|text| {
                text.replace(
                    r#"{ "time": 0.5, "target": "vsc1", "field": "id_ref", "value": 2.0 }"#,
                    r#"{ "time": 0.5, "target": "ghost", "field": "id_ref", "value": 2.0 }"#,
                )
            }),
            "ERROR UnknownEventTarget:",
        ),
        (
            "disconnected.json",
            &nine_bus_with(|text| {
                text.replace(
                    r#"{ "id": "9", "attachments": ["load9"] }"#,
                    r#"{ "id": "9", "attachments": ["load9"] },
    { "id": "10", "attachments": [] }"#,
                )
            }),
            "ERROR DisconnectedNode:",
        ),
    ];
    for (name, content, expected) in malformed {
        let path = dir.path().join(name);
        fs::write(&path, content).unwrap();
        let out = run_err(bin().args(["check", path.to_str().unwrap()]));
        let stderr = String::from_utf8_lossy(&out.stderr);
        assert!(
            stderr.contains(expected),
            "{name}: expected {expected}, got stderr:\n{stderr}"
        );
    }

    // Fig.-style overlay figure from the two runs: first series solid,
    // second dashed
    let fig = dir.path().join("phi.svg");
    run_ok(bin().args([
        "plot",
        reduced_csv.to_str().unwrap(),
        reference_csv.to_str().unwrap(),
        "--signals",
        "vsc1.phi,vsc2.phi",
        "--out",
        fig.to_str().unwrap(),
    ]));
    let svg = fs::read_to_string(&fig).unwrap();
    assert!(svg.starts_with("<svg"));
    assert_eq!(svg.matches("<path").count(), 4, "2 series x 2 signals");
    assert!(svg.contains("stroke-dasharray"));

    format!(
        "run/run/compare pipeline exit 0 at tol 1e-6, CSV round trip bit-exact ({} bytes), \
         6 malformed cases rejected with structured errors, overlay figure rendered",
        original.len()
    )
}

/// The shipped 9-bus case text with a mutation applied.
fn nine_bus_with(mutate: impl Fn(&str) -> String) -> String {
    let text = fs::read_to_string(cases_dir().join("nine_bus.json")).unwrap();
    let mutated = mutate(&text);
    assert_ne!(text, mutated, "mutation must change the document");
    mutated
}

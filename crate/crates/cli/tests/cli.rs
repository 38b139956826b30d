//! End-to-end tests of the `issf` binary: exit codes, error wording, JSON
//! and CSV outputs, and byte-level determinism across repeated runs.

use std::ffi::OsStr;
use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

use tempfile::TempDir;

const EXAMPLE1: &str = include_str!("../scenarios/example1.issf");

fn issf<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<OsStr>,
{
    Command::new(env!("CARGO_BIN_EXE_issf"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn json_of(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not JSON ({e}): {}",
            String::from_utf8_lossy(&out.stdout)
        )
    })
}

/// Write a mutated copy of the bundled scenario into `dir`.
fn scenario_with(dir: &TempDir, mutate: impl FnOnce(String) -> String) -> PathBuf {
    let path = dir.path().join("scenario.issf");
    fs::write(&path, mutate(EXAMPLE1.to_string())).unwrap();
    path
}

fn out_dir(dir: &TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

fn assert_code(out: &Output, expected: i32) {
    assert_eq!(
        out.status.code(),
        Some(expected),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        stderr_of(out)
    );
}

#[test]
fn passing_scenario_exits_zero_with_pass_verdicts() {
    let dir = TempDir::new().unwrap();
    let scenario = scenario_with(&dir, |s| s);
    let out = issf([
        OsStr::new("check-subsystems"),
        OsStr::new("--scenario"),
        scenario.as_os_str(),
        OsStr::new("--samples"),
        OsStr::new("2000"),
        OsStr::new("--out"),
        out_dir(&dir, "out").as_os_str(),
    ]);
    assert_code(&out, 0);
    let json = json_of(&out);
    assert_eq!(json["verdict"], "pass");
    assert_eq!(json["subsystem1"]["verdict"], "pass");
    assert_eq!(json["subsystem2"]["verdict"], "pass");
    assert_eq!(json["scenario"], "scenario.issf");
}

#[test]
fn violated_hypothesis_exits_one_with_counterexamples() {
    let dir = TempDir::new().unwrap();
    // Demand ten times the actual decay rate from the first subsystem.
    let scenario = scenario_with(&dir, |s| s.replacen("alpha = 0.5 * r", "alpha = 5 * r", 1));
    let out = issf([
        OsStr::new("check-subsystems"),
        OsStr::new("--scenario"),
        scenario.as_os_str(),
        OsStr::new("--samples"),
        OsStr::new("2000"),
        OsStr::new("--out"),
        out_dir(&dir, "out").as_os_str(),
    ]);
    assert_code(&out, 1);
    let json = json_of(&out);
    assert_eq!(json["verdict"], "fail");
    assert_eq!(json["subsystem1"]["verdict"], "fail");
    assert!(!json["subsystem1"]["counterexamples"]
        .as_array()
        .unwrap()
        .is_empty());
}

#[test]
fn untriggered_scenario_exits_two() {
    let dir = TempDir::new().unwrap();
    // Boxes where both barriers are positive, so no sample can trigger
    // either antecedent.
    let scenario = scenario_with(&dir, |s| {
        s.replace("x1_box = -5 5", "x1_box = 1 2")
            .replace("x2_box = -5 5", "x2_box = 1 2")
    });
    let out = issf([
        OsStr::new("check-subsystems"),
        OsStr::new("--scenario"),
        scenario.as_os_str(),
        OsStr::new("--samples"),
        OsStr::new("500"),
        OsStr::new("--out"),
        out_dir(&dir, "out").as_os_str(),
    ]);
    assert_code(&out, 2);
    assert_eq!(json_of(&out)["verdict"], "inconclusive");
}

#[test]
fn undeclared_dynamics_variable_is_named() {
    let dir = TempDir::new().unwrap();
    let scenario = scenario_with(&dir, |s| s.replace("- 0.5 * u2", "- 0.5 * u3"));
    let out = issf([
        OsStr::new("check-subsystems"),
        OsStr::new("--scenario"),
        scenario.as_os_str(),
    ]);
    assert_code(&out, 3);
    let err = stderr_of(&out);
    assert!(err.contains("u3"), "stderr: {err}");
}

#[test]
fn unknown_scenario_key_is_named_with_its_line() {
    let dir = TempDir::new().unwrap();
    let scenario = scenario_with(&dir, |s| s.replace("[sampling]", "[sampling]\nu3 = 1"));
    let out = issf([
        OsStr::new("compose"),
        OsStr::new("--scenario"),
        scenario.as_os_str(),
    ]);
    assert_code(&out, 3);
    let err = stderr_of(&out);
    assert!(
        err.contains("unknown key `u3`") && err.contains("line"),
        "stderr: {err}"
    );
}

#[test]
fn failed_class_claim_is_rejected_before_any_check() {
    let dir = TempDir::new().unwrap();
    let scenario = scenario_with(&dir, |s| {
        s.replace("input_gain = 2 * r^3", "input_gain = -r")
    });
    let out = issf([
        OsStr::new("check-subsystems"),
        OsStr::new("--scenario"),
        scenario.as_os_str(),
    ]);
    assert_code(&out, 3);
    let err = stderr_of(&out);
    assert!(err.contains("class"), "stderr: {err}");
}

#[test]
fn missing_scenario_file_reports_the_path() {
    let out = issf(["compose", "--scenario", "/nonexistent/missing.issf"]);
    assert_code(&out, 3);
    let err = stderr_of(&out);
    assert!(err.contains("missing.issf"), "stderr: {err}");
}

#[test]
fn compose_writes_certificate_tables() {
    let dir = TempDir::new().unwrap();
    let scenario = scenario_with(&dir, |s| s);
    let out_override = out_dir(&dir, "override");
    let out = issf([
        OsStr::new("compose"),
        OsStr::new("--scenario"),
        scenario.as_os_str(),
        OsStr::new("--out"),
        out_override.as_os_str(),
    ]);
    assert_code(&out, 0);
    let json = json_of(&out);
    assert_eq!(json["phi_mode"], "override");
    for name in ["composition.csv", "phi.csv", "gamma.csv"] {
        assert!(out_override.join(name).exists(), "{name} missing");
    }
    assert!(!out_override.join("rho.csv").exists());

    // Without the override the averaging construction also tabulates its
    // width function.
    let constructed = scenario_with(&dir, |s| s.replace("phi_override = r\n", ""));
    let out_built = out_dir(&dir, "constructed");
    let out = issf([
        OsStr::new("compose"),
        OsStr::new("--scenario"),
        constructed.as_os_str(),
        OsStr::new("--out"),
        out_built.as_os_str(),
    ]);
    assert_code(&out, 0);
    let json = json_of(&out);
    assert_eq!(json["phi_mode"], "constructed");
    assert!(json["rho_report"].is_object());
    for name in ["composition.csv", "rho.csv", "phi.csv", "gamma.csv"] {
        assert!(out_built.join(name).exists(), "{name} missing");
    }
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let scenario = scenario_with(&dir, |s| s);

    let mut stdouts = Vec::new();
    let mut csvs = Vec::new();
    for run in ["a", "b"] {
        let out_path = out_dir(&dir, run);
        let out = issf([
            OsStr::new("compose"),
            OsStr::new("--scenario"),
            scenario.as_os_str(),
            OsStr::new("--out"),
            out_path.as_os_str(),
        ]);
        assert_code(&out, 0);
        stdouts.push(out.stdout);
        csvs.push(fs::read(out_path.join("composition.csv")).unwrap());
    }
    assert_eq!(stdouts[0], stdouts[1], "compose JSON is not deterministic");
    assert_eq!(csvs[0], csvs[1], "composition.csv is not deterministic");

    let mut checks = Vec::new();
    for run in ["c", "d"] {
        let out = issf([
            OsStr::new("check-subsystems"),
            OsStr::new("--scenario"),
            scenario.as_os_str(),
            OsStr::new("--samples"),
            OsStr::new("1000"),
            OsStr::new("--out"),
            out_dir(&dir, run).as_os_str(),
        ]);
        assert_code(&out, 0);
        checks.push(out.stdout);
    }
    assert_eq!(checks[0], checks[1], "check JSON is not deterministic");
}

#[test]
fn verify_invariance_writes_trajectories() {
    let dir = TempDir::new().unwrap();
    let scenario = scenario_with(&dir, |s| s);
    let out_path = out_dir(&dir, "out");
    let out = issf([
        OsStr::new("verify-invariance"),
        OsStr::new("--scenario"),
        scenario.as_os_str(),
        OsStr::new("--trajectories"),
        OsStr::new("3"),
        OsStr::new("--horizon"),
        OsStr::new("0.5"),
        OsStr::new("--dt"),
        OsStr::new("0.01"),
        OsStr::new("--out"),
        out_path.as_os_str(),
    ]);
    assert_code(&out, 0);
    let json = json_of(&out);
    assert_eq!(json["report"]["verdict"], "pass");
    let files = json["files"].as_array().unwrap();
    assert!(!files.is_empty());
    for f in files {
        let path = out_path.join(f.as_str().unwrap());
        let head = fs::read_to_string(&path).unwrap();
        let header = head.lines().next().unwrap();
        assert!(
            header.starts_with("t,") && header.ends_with(",margin"),
            "unexpected header {header} in {}",
            path.display()
        );
    }
}

#[test]
fn bundled_example_smoke_run() {
    let dir = TempDir::new().unwrap();
    let out = issf([
        OsStr::new("example1"),
        OsStr::new("--samples"),
        OsStr::new("500"),
        OsStr::new("--trajectories"),
        OsStr::new("2"),
        OsStr::new("--horizon"),
        OsStr::new("0.2"),
        OsStr::new("--dt"),
        OsStr::new("0.01"),
        OsStr::new("--out"),
        out_dir(&dir, "out").as_os_str(),
    ]);
    assert_code(&out, 0);
    let json = json_of(&out);
    assert_eq!(json["verdict"], "pass");
    assert_eq!(json["scenario"], "example1 (bundled)");
    let err = stderr_of(&out);
    assert!(err.contains("min{x1, x2}"), "stderr: {err}");
}

#[test]
fn usage_errors_exit_three_and_help_exits_zero() {
    let out = issf(["--definitely-not-a-flag"]);
    assert_code(&out, 3);

    let out = issf(["--help"]);
    assert_code(&out, 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("compose"));

    let out = issf(["compose"]);
    // Missing the required --scenario flag.
    assert_code(&out, 3);
}

#[test]
fn thread_count_env_var_is_validated() {
    let dir = TempDir::new().unwrap();
    let scenario = scenario_with(&dir, |s| s);

    let out = Command::new(env!("CARGO_BIN_EXE_issf"))
        .env("ISSF_THREADS", "abc")
        .args([OsStr::new("compose"), OsStr::new("--scenario"), scenario.as_os_str()])
        .output()
        .unwrap();
    assert_code(&out, 3);
    assert!(stderr_of(&out).contains("ISSF_THREADS"));

    let out = Command::new(env!("CARGO_BIN_EXE_issf"))
        .env("ISSF_THREADS", "1")
        .args([
            OsStr::new("compose"),
            OsStr::new("--scenario"),
            scenario.as_os_str(),
            OsStr::new("--out"),
            out_dir(&dir, "threads").as_os_str(),
        ])
        .output()
        .unwrap();
    assert_code(&out, 0);
}

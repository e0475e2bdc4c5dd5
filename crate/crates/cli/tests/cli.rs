//! End-to-end checks of the command-line surface: every subcommand runs,
//! outputs carry headers and the config hash, results are byte-identical
//! for a fixed seed, and verify exit codes reflect suite outcomes.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ergokit"))
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("missing {name}: {e}"))
}

#[test]
fn phase_space_outputs_are_deterministic() {
    let dir1 = tempdir("ps1");
    let dir2 = tempdir("ps2");
    for dir in [&dir1, &dir2] {
        let status = bin()
            .args(["phase-space", "--samples", "200", "--seed", "11", "--out"])
            .arg(dir)
            .status()
            .expect("binary runs");
        assert!(status.success());
    }
    for name in [
        "gaussian_boundary.csv",
        "gaussian_points.csv",
        "gaussian_sweep.csv",
        "cat_boundary.csv",
        "cat_points.csv",
        "cat_sweep.csv",
        "effective_config.toml",
    ] {
        let a = read(&dir1, name);
        let b = read(&dir2, name);
        assert_eq!(a, b, "{name} differs between identical runs");
    }
    let points = read(&dir1, "gaussian_points.csv");
    let mut lines = points.lines();
    assert!(lines.next().unwrap().starts_with("# config "));
    assert_eq!(lines.next().unwrap(), "w,dvar,provenance");
}

#[test]
fn distributions_and_bound_plot_emit_expected_columns() {
    let dir = tempdir("dist");
    let status = bin()
        .args(["distributions", "--seed", "3", "--out"])
        .arg(&dir)
        .status()
        .unwrap();
    assert!(status.success());
    for name in ["work_operator.csv", "tpm.csv", "quasi.csv"] {
        let body = read(&dir, name);
        assert!(body.lines().nth(1) == Some("w,q"), "{name} header");
    }
    let json = read(&dir, "distributions.json");
    assert!(json.contains("\"quasi\""));

    let status = bin().args(["bound-plot", "--out"]).arg(&dir).status().unwrap();
    assert!(status.success());
    let body = read(&dir, "bound_crosscheck.csv");
    for line in body.lines().skip(2) {
        assert!(line.ends_with("true"), "oracle must satisfy the bound: {line}");
    }
}

#[test]
fn verify_quick_passes_and_corruption_fails() {
    let dir = tempdir("verify");
    let status = bin()
        .args([
            "verify",
            "--suite",
            "classical-limits",
            "--quick",
            "--out",
        ])
        .arg(&dir)
        .status()
        .unwrap();
    assert!(status.success());
    let report = read(&dir, "verify.json");
    assert!(report.contains("\"passed\": true"));

    let status = bin()
        .args([
            "verify",
            "--suite",
            "closed-form-oracle",
            "--quick",
            "--corrupt-gamma-sign",
            "--out",
        ])
        .arg(&dir)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1), "corrupted physics must fail");
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempdir("badcfg");
    let cfg = dir.join("bad.toml");
    std::fs::write(&cfg, "[grid]\nn = 1024\nspacin = 0.03125\n").unwrap();
    let output = bin()
        .args(["distributions", "--out"])
        .arg(&dir)
        .arg("--config")
        .arg(&cfg)
        .output()
        .unwrap();
    assert!(!output.status.success());
    let err = String::from_utf8_lossy(&output.stderr);
    assert!(err.contains("spacin") || err.contains("unknown field"), "stderr: {err}");
}

fn tempdir(tag: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("ergokit-test-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

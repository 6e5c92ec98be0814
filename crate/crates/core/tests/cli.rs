//! Exit-code contract of the command-line interface: 0 success,
//! 2 configuration/schema, 3 evaluation, 4 infeasibility, 5 divergence.

use std::path::{Path, PathBuf};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn run(args: &[&str]) -> std::process::Output {
    std::process::Command::new(env!("CARGO_BIN_EXE_impdel"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn tmp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("impdel-cli-{}-{tag}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn success_is_zero() {
    let out_dir = tmp_dir("ok");
    let out = run(&[
        "validate",
        "--scenario",
        &fixture("atom_placement.json").display().to_string(),
        "--out",
        &out_dir.display().to_string(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out_dir.join("canonical.json").exists());
    let _ = std::fs::remove_dir_all(&out_dir);
}

#[test]
fn schema_errors_exit_2() {
    let dir = tmp_dir("schema");
    let bad = dir.join("bad.json");
    std::fs::write(
        &bad,
        r#"{"version": 1, "n": 1, "m": 1, "q": 0, "T": 1.0,
            "f": ["0"], "G": [["1"]], "l0": "0", "l1": ["0"], "Phi": "0",
            "zeta": ["0"], "cone": {"kind": "nonnegative_orthant"},
            "A": {"kind": "box", "lo": [], "hi": []},
            "target": {"kind": "fixed_initial_free_terminal", "x0": [0.0]}}"#,
    )
    .unwrap();
    let out = run(&["validate", "--scenario", &bad.display().to_string(), "--out", &dir.display().to_string()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/delays"));
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn incommensurable_grid_exits_2() {
    let dir = tmp_dir("grid");
    let out = run(&[
        "simulate",
        "--scenario",
        &fixture("delayed_linear.json").display().to_string(),
        "--process",
        &fixture("delayed_unit_atom.json").display().to_string(),
        "--grid",
        "3",
        "--out",
        &dir.display().to_string(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn evaluation_errors_exit_3() {
    let dir = tmp_dir("eval");
    // drift 1/x0 is finite at the load probes but singular at xi = 0
    let scenario = dir.join("singular.json");
    std::fs::write(
        &scenario,
        r#"{"version": 1, "n": 1, "m": 1, "q": 0, "T": 1.0, "delays": [0.0],
            "f": ["1/x0[0]"], "G": [["1"]], "l0": "0", "l1": ["0"], "Phi": "0",
            "zeta": ["1"], "cone": {"kind": "nonnegative_orthant"},
            "A": {"kind": "box", "lo": [], "hi": []},
            "target": {"kind": "fixed_initial_free_terminal", "x0": [0.0]},
            "growth": "1"}"#,
    )
    .unwrap();
    let process = dir.join("zero.json");
    std::fs::write(
        &process,
        r#"{"xi": [0.0],
            "mu": {"m": 1, "T": 1.0, "atoms": [], "density": {"cells": 1, "values": [[0.0]]}},
            "alpha": {"cells": 1, "values": [[]], "atom_values": []}}"#,
    )
    .unwrap();
    let out = run(&[
        "simulate",
        "--scenario",
        &scenario.display().to_string(),
        "--process",
        &process.display().to_string(),
        "--out",
        &dir.display().to_string(),
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn infeasible_endpoints_exit_4() {
    let dir = tmp_dir("infeasible");
    // xi = 0.5 violates the pinned initial point x0 = 0
    let process = dir.join("shifted.json");
    std::fs::write(
        &process,
        r#"{"xi": [0.5],
            "mu": {"m": 1, "T": 1.0, "atoms": [{"t": 0.5, "w": [1.0]}], "density": {"cells": 1, "values": [[0.0]]}},
            "alpha": {"cells": 1, "values": [[]], "atom_values": []}}"#,
    )
    .unwrap();
    let out = run(&[
        "check-pmp",
        "--scenario",
        &fixture("atom_placement.json").display().to_string(),
        "--process",
        &process.display().to_string(),
        "--grid",
        "64",
        "--out",
        &dir.display().to_string(),
    ]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn divergence_exits_5() {
    let dir = tmp_dir("divergence");
    // cubic drift with a far-too-optimistic growth coefficient: the blow-up
    // guard trips before the float overflow does
    let scenario = dir.join("cubic.json");
    std::fs::write(
        &scenario,
        r#"{"version": 1, "n": 1, "m": 1, "q": 0, "T": 4.0, "delays": [0.0],
            "f": ["x0[0]^3"], "G": [["1"]], "l0": "0", "l1": ["0"], "Phi": "0",
            "zeta": ["0"], "cone": {"kind": "nonnegative_orthant"},
            "A": {"kind": "box", "lo": [], "hi": []},
            "target": {"kind": "fixed_initial_free_terminal", "x0": [2.0]},
            "growth": "0.1"}"#,
    )
    .unwrap();
    let process = dir.join("start.json");
    std::fs::write(
        &process,
        r#"{"xi": [2.0],
            "mu": {"m": 1, "T": 4.0, "atoms": [], "density": {"cells": 1, "values": [[0.0]]}},
            "alpha": {"cells": 1, "values": [[]], "atom_values": []}}"#,
    )
    .unwrap();
    let out = run(&[
        "simulate",
        "--scenario",
        &scenario.display().to_string(),
        "--process",
        &process.display().to_string(),
        "--grid",
        "512",
        "--out",
        &dir.display().to_string(),
    ]);
    assert_eq!(out.status.code(), Some(5), "{}", String::from_utf8_lossy(&out.stderr));
    let _ = std::fs::remove_dir_all(&dir);
}

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_plastickv"))
        .args(args)
        .current_dir(dir)
        .env_remove("PLASTICKV_DATA")
        .output()
        .expect("binary runs")
}

fn manifest(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not a manifest ({e}): {}\nstderr: {}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

fn ok(dir: &Path, args: &[&str]) -> Value {
    let out = run(dir, args);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    manifest(&out)
}

fn retrieval(dir: &Path) {
    ok(
        dir,
        &[
            "init",
            "--kind",
            "retrieval",
            "--beta",
            "8",
            "--output",
            "r.ptxf",
        ],
    );
}

#[test]
fn init_eval_and_idempotent_quantize() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    retrieval(d);
    let m = ok(
        d,
        &[
            "eval",
            "--checkpoint",
            "r.ptxf",
            "--episodes",
            "128",
            "--mode",
            "float",
        ],
    );
    assert_eq!(m["command"], "eval");
    assert!(m["results"]["accuracy"].as_f64().unwrap() > 0.9);

    let q1 = ok(
        d,
        &[
            "quantize",
            "--input",
            "r.ptxf",
            "--output",
            "q1.ptxf",
            "--calibration-episodes",
            "16",
        ],
    );
    assert_eq!(q1["command"], "quantize");
    ok(
        d,
        &["quantize", "--input", "q1.ptxf", "--output", "q2.ptxf"],
    );
    let a = std::fs::read(d.join("q1.ptxf")).unwrap();
    let b = std::fs::read(d.join("q2.ptxf")).unwrap();
    assert_eq!(a, b);

    let m = ok(
        d,
        &[
            "eval",
            "--checkpoint",
            "q1.ptxf",
            "--episodes",
            "128",
            "--mode",
            "quant-plastic",
            "--compare",
            "quant",
        ],
    );
    assert!(m["results"]["accuracy"].as_f64().unwrap() > 0.85);
    assert_eq!(m["results"]["compare"]["agreement"].as_f64(), Some(1.0));
}

#[test]
fn float_and_plastic_modes_agree() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        d,
        &[
            "init",
            "--layers",
            "2",
            "--d-model",
            "32",
            "--heads",
            "2",
            "--output",
            "m.ptxf",
        ],
    );
    let m = ok(
        d,
        &[
            "eval",
            "--checkpoint",
            "m.ptxf",
            "--episodes",
            "256",
            "--mode",
            "float",
            "--compare",
            "plastic",
        ],
    );
    assert!(m["results"]["compare"]["agreement"].as_f64().unwrap() >= 0.99);
    assert!(m["results"]["compare"]["max_score_diff"].as_f64().unwrap() < 1e-4);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let pass = ok(
        d,
        &[
            "equiv", "--d", "16", "--h", "2", "--t", "12", "--w", "5", "--layers", "2",
        ],
    );
    assert_eq!(pass["results"]["passed"], true);

    let fail = run(d, &["equiv", "--tolerance", "1e-300"]);
    assert_eq!(fail.status.code(), Some(1));
    assert_eq!(manifest(&fail)["results"]["passed"], false);

    for bad in [
        vec!["equiv", "--d", "10", "--h", "4"],
        vec!["eval", "--checkpoint", "missing.ptxf"],
        vec!["frobnicate"],
    ] {
        assert_eq!(run(d, &bad).status.code(), Some(2), "{bad:?}");
    }
    retrieval(d);
    let zero = run(d, &["eval", "--checkpoint", "r.ptxf", "--episodes", "0"]);
    assert_eq!(zero.status.code(), Some(2));
    std::fs::write(d.join("junk.ptxf"), b"PTXF\x01\x00\x00\x00garbage").unwrap();
    assert_eq!(
        run(d, &["eval", "--checkpoint", "junk.ptxf"]).status.code(),
        Some(2)
    );
}

#[test]
fn inspect_reports_the_cache() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    retrieval(d);
    let m = ok(
        d,
        &[
            "inspect",
            "--checkpoint",
            "r.ptxf",
            "--tokens",
            "3",
            "--state-out",
            "s.ptxf",
        ],
    );
    assert_eq!(m["results"]["keys_rows_match"], true);
    assert_eq!(m["results"]["tokens"], 3);
    let state = std::fs::read(d.join("s.ptxf")).unwrap();
    assert_eq!(&state[..4], b"PTXF");

    ok(
        d,
        &[
            "quantize",
            "--input",
            "r.ptxf",
            "--output",
            "q.ptxf",
            "--calibration-episodes",
            "8",
        ],
    );
    let m = ok(
        d,
        &[
            "inspect",
            "--checkpoint",
            "q.ptxf",
            "--mode",
            "quant-plastic",
            "--tokens",
            "4",
        ],
    );
    assert_eq!(m["results"]["keys_rows_match"], true);

    let out = run(d, &["inspect", "--checkpoint", "r.ptxf", "--tokens", "0"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("empty"));
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    retrieval(d);
    std::fs::write(
        d.join("run.toml"),
        "seed = 9\n[eval]\ncheckpoint = \"r.ptxf\"\nepisodes = 40\nmode = \"plastic\"\n",
    )
    .unwrap();
    let m = ok(d, &["--config", "run.toml", "eval"]);
    assert_eq!(m["episodes"], 40);
    assert_eq!(m["seed"], 9);
    assert_eq!(m["results"]["mode"], "plastic");

    let m = ok(
        d,
        &[
            "--config",
            "run.toml",
            "eval",
            "--episodes",
            "24",
            "--seed",
            "3",
        ],
    );
    assert_eq!(m["episodes"], 24);
    assert_eq!(m["seed"], 3);
    assert_eq!(m["results"]["mode"], "plastic");

    std::fs::write(d.join("bad.toml"), "[eval]\nepisodez = 3\n").unwrap();
    assert_eq!(
        run(d, &["--config", "bad.toml", "eval"]).status.code(),
        Some(2)
    );
}

#[test]
fn manifests_are_deterministic_apart_from_timing() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        d,
        &[
            "init",
            "--layers",
            "1",
            "--d-model",
            "16",
            "--output",
            "m.ptxf",
            "--seed",
            "4",
        ],
    );
    let args = [
        "eval",
        "--checkpoint",
        "m.ptxf",
        "--episodes",
        "64",
        "--seed",
        "5",
        "--mode",
        "quant",
    ];
    let mut a = ok(d, &args);
    let mut b = ok(d, &args);
    a.as_object_mut().unwrap().remove("timing");
    b.as_object_mut().unwrap().remove("timing");
    assert_eq!(a, b);

    let out = run(d, &["--out", "manifest.json", "equiv"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let written: Value =
        serde_json::from_slice(&std::fs::read(d.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(written["command"], "equiv");
}

#[test]
fn bench_reports_both_paths() {
    let dir = tempfile::tempdir().unwrap();
    let m = ok(
        dir.path(),
        &["bench", "--d", "16", "--t", "8", "--w", "4", "--reps", "2"],
    );
    assert_eq!(m["command"], "bench");
    assert!(!m["results"].is_null());
}

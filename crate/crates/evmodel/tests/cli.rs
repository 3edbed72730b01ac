//! Exercises the binary end to end: exit codes, file outputs, determinism.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn evmodel(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evmodel"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn full_pipeline_on_a_small_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();

    assert_ok(&evmodel(
        dir,
        &["synth", "--out-dir", "data", "--users", "20", "--sessions", "12", "--seed", "3"],
    ));
    assert!(dir.join("data/sessions.csv").exists());
    assert!(dir.join("data/labels.csv").exists());

    assert_ok(&evmodel(
        dir,
        &["ingest", "--sessions", "data/sessions.csv", "--strict"],
    ));

    assert_ok(&evmodel(
        dir,
        &[
            "cluster", "--sessions", "data/sessions.csv", "--model-out", "out/cluster.json",
            "--k", "2", "--labels", "data/labels.csv", "--sweep", "1:4",
            "--features-out", "out/features.csv",
        ],
    ));
    assert!(dir.join("out/cluster.json").exists());
    assert!(dir.join("out/cluster.cost_curve.csv").exists());
    assert!(dir.join("out/features.csv").exists());
    assert!(dir.join("out/features.norm.json").exists());
    let curve = fs::read_to_string(dir.join("out/cluster.cost_curve.csv")).unwrap();
    assert!(curve.starts_with("k,cost\n"));
    assert_eq!(curve.lines().count(), 5);

    assert_ok(&evmodel(
        dir,
        &[
            "train", "--sessions", "data/sessions.csv", "--cluster-model", "out/cluster.json",
            "--model-out", "out/mlp.json", "--d", "6", "--hidden", "12",
            "--epochs", "400", "--trace-out", "out/trace.csv",
        ],
    ));
    let trace = fs::read_to_string(dir.join("out/trace.csv")).unwrap();
    assert!(trace.starts_with("epoch,cost\n"));

    assert_ok(&evmodel(
        dir,
        &[
            "forecast", "--sessions", "data/sessions.csv", "--cluster-model", "out/cluster.json",
            "--out-prefix", "out/fc", "--draws", "30", "--seed", "5",
        ],
    ));
    let csv = fs::read_to_string(dir.join("out/fc.csv")).unwrap();
    assert!(csv.starts_with("slot,start_hhmm,upper_kw,lower_kw,upper_std,lower_std\n"));
    assert_eq!(csv.lines().count(), 97);
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("out/fc.json")).unwrap()).unwrap();
    for key in ["total_energy_kwh", "n_evs", "seed", "draws"] {
        assert!(json.get(key).is_some(), "missing {key}");
    }

    assert_ok(&evmodel(
        dir,
        &[
            "forecast", "--sessions", "data/sessions.csv", "--cluster-model", "out/cluster.json",
            "--mlp-model", "out/mlp.json", "--out-prefix", "out/fc_mlp", "--draws", "30",
            "--seed", "5",
        ],
    ));
    assert!(dir.join("out/fc_mlp.csv").exists());

    assert_ok(&evmodel(
        dir,
        &[
            "evaluate", "--sessions", "data/sessions.csv", "--labels", "data/labels.csv",
            "--out-prefix", "out/report", "--kfolds", "3", "--k", "2", "--d", "6",
            "--hidden", "12", "--epochs", "400", "--draws", "30",
        ],
    ));
    let report_csv = fs::read_to_string(dir.join("out/report.csv")).unwrap();
    assert_eq!(report_csv.lines().count(), 4); // header + one row per fold
}

#[test]
fn identical_seeds_give_byte_identical_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    for run in ["a", "b"] {
        assert_ok(&evmodel(
            dir,
            &["synth", "--out-dir", run, "--users", "10", "--sessions", "8", "--seed", "7"],
        ));
    }
    assert_eq!(
        fs::read(dir.join("a/sessions.csv")).unwrap(),
        fs::read(dir.join("b/sessions.csv")).unwrap()
    );
    assert_eq!(
        fs::read(dir.join("a/labels.csv")).unwrap(),
        fs::read(dir.join("b/labels.csv")).unwrap()
    );

    // inputs are never mutated by downstream commands
    let before = fs::read(dir.join("a/sessions.csv")).unwrap();
    for run in ["x", "y"] {
        assert_ok(&evmodel(
            dir,
            &[
                "cluster", "--sessions", "a/sessions.csv", "--model-out",
                &format!("{run}/cluster.json"), "--k", "2", "--seed", "1",
            ],
        ));
    }
    assert_eq!(
        fs::read(dir.join("x/cluster.json")).unwrap(),
        fs::read(dir.join("y/cluster.json")).unwrap()
    );
    assert_eq!(before, fs::read(dir.join("a/sessions.csv")).unwrap());
}

#[test]
fn validation_failures_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();

    // zero users rejected before any write
    let out = evmodel(dir, &["synth", "--out-dir", "data", "--users", "0"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.join("data").exists());

    // missing input file names the path
    let out = evmodel(
        dir,
        &["cluster", "--sessions", "nope.csv", "--model-out", "m.json"],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.csv"));

    // n-evs = 0 rejected
    assert_ok(&evmodel(
        dir,
        &["synth", "--out-dir", "data", "--users", "8", "--sessions", "6"],
    ));
    assert_ok(&evmodel(
        dir,
        &["cluster", "--sessions", "data/sessions.csv", "--model-out", "out/c.json", "--k", "2"],
    ));
    let out = evmodel(
        dir,
        &[
            "forecast", "--sessions", "data/sessions.csv", "--cluster-model", "out/c.json",
            "--out-prefix", "out/fc", "--n-evs", "0",
        ],
    );
    assert_eq!(out.status.code(), Some(2));

    // unknown flag is a usage error (clap)
    let out = evmodel(dir, &["synth", "--frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::write(
        dir.join("run.toml"),
        "[synth]\nout_dir = \"from_file\"\nusers = 8\nsessions = 6\nseed = 11\n",
    )
    .unwrap();

    assert_ok(&evmodel(dir, &["--config", "run.toml", "synth"]));
    assert!(dir.join("from_file/sessions.csv").exists());

    // flag wins over the file
    assert_ok(&evmodel(
        dir,
        &["--config", "run.toml", "synth", "--out-dir", "from_flag"],
    ));
    assert!(dir.join("from_flag/sessions.csv").exists());

    // bad config key is a usage error
    fs::write(dir.join("bad.toml"), "[synth]\nnot_a_key = 1\n").unwrap();
    let out = evmodel(dir, &["--config", "bad.toml", "synth", "--out-dir", "z"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn lenient_ingest_skips_and_reports_bad_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::write(
        dir.join("mixed.csv"),
        "user_id,arrival,departure,energy_kwh\n\
         u1,2017-03-01T08:00,2017-03-01T17:00,10\n\
         u1,2017-03-02T08:00,2017-03-02T08:00,10\n\
         u2,2017-03-01T09:00,2017-03-01T12:00,abc\n",
    )
    .unwrap();

    let out = evmodel(
        dir,
        &["ingest", "--sessions", "mixed.csv", "--output", "clean.csv"],
    );
    assert_ok(&out);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("line 3"));
    assert!(stderr.contains("line 4"));
    let clean = fs::read_to_string(dir.join("clean.csv")).unwrap();
    assert_eq!(clean.lines().count(), 2); // header + the one good row

    // strict mode fails instead
    let out = evmodel(dir, &["ingest", "--sessions", "mixed.csv", "--strict"]);
    assert_eq!(out.status.code(), Some(1));
}

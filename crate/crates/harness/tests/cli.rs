use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use gridhit_harness::commands::{estimate, simulate};
use gridhit_harness::config::{parse, to_toml, Experiment, ExperimentConfig};
use gridhit_harness::io::{read_stream, write_stream};

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn smoke() -> PathBuf {
    configs().join("cir_two_point.toml")
}

fn gridhit(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_gridhit")).args(args).output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn shipped_configs_load_and_round_trip() {
    let mut n = 0;
    for entry in fs::read_dir(configs()).unwrap() {
        let p = entry.unwrap().path();
        if p.extension().is_some_and(|e| e == "toml") {
            let cfg: ExperimentConfig = parse(&fs::read_to_string(&p).unwrap()).unwrap();
            assert_eq!(parse(&to_toml(&cfg).unwrap()).unwrap(), cfg, "{}", p.display());
            Experiment::load(&p).unwrap_or_else(|e| panic!("{}: {e:#}", p.display()));
            n += 1;
        }
    }
    assert!(n >= 6);
}

#[test]
fn two_point_stream_alternates() {
    let exp = Experiment::load(&smoke()).unwrap();
    let (stream, summary) = simulate::run(&exp).unwrap();
    assert_eq!(stream.len(), exp.config.run.cycles);
    for w in stream.windows(2) {
        assert_ne!(w[0].grid_point, w[1].grid_point);
        assert_eq!(w[0].next_grid_point, w[1].grid_point);
    }
    assert!(summary.checks.iter().all(|c| c.passed));
}

#[test]
fn simulation_is_deterministic_per_seed_and_stream() {
    let exp = Experiment::load(&smoke()).unwrap();
    let a = gridhit_harness::setup::simulate(&exp, 300, 3).unwrap();
    let b = gridhit_harness::setup::simulate(&exp, 300, 3).unwrap();
    let c = gridhit_harness::setup::simulate(&exp, 300, 4).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn stream_csv_round_trips_exactly() {
    let exp = Experiment::load(&smoke()).unwrap();
    let s = gridhit_harness::setup::simulate(&exp, 200, 0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("stream.csv");
    write_stream(&p, &s).unwrap();
    assert_eq!(read_stream(&p).unwrap(), s);
}

#[test]
fn replaying_a_stream_reproduces_replication_zero() {
    let exp = Experiment::load(&smoke()).unwrap();
    let (summary, _) = estimate::run(&exp, None).unwrap();
    let stream = gridhit_harness::setup::simulate(&exp, exp.config.run.cycles, 0).unwrap();
    let (replayed, _) = estimate::run(&exp, Some(&stream)).unwrap();
    assert_eq!(replayed.rows.len(), 1);
    assert_eq!(replayed.rows[0].final_theta, summary.rows[0].final_theta);
}

#[test]
fn cli_outputs_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        for cmd in ["simulate", "estimate"] {
            let o = gridhit(&[cmd, "--config", path(&smoke()), "--out", path(out), "--threads", "2"]);
            assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        }
    }
    for f in ["stream.csv", "replications.csv", "trajectory_0.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn cli_replays_a_written_stream() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    assert!(gridhit(&["simulate", "--config", path(&smoke()), "--out", path(out)]).status.success());
    let o = gridhit(&["estimate", "--config", path(&smoke()), "--out", path(out), "--stream", path(&out.join("stream.csv"))]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = gridhit(&["diagnose", "--config", path(&smoke()), "--out", path(out), "--stream", path(&out.join("stream.csv"))]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let d: serde_json::Value = serde_json::from_slice(&fs::read(out.join("diagnostics.json")).unwrap()).unwrap();
    assert_eq!(d["cycles"], 2000);
}

#[test]
fn seed_flag_changes_the_stream() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(gridhit(&["simulate", "--config", path(&smoke()), "--out", path(&a)]).status.success());
    assert!(gridhit(&["simulate", "--config", path(&smoke()), "--out", path(&b), "--seed", "8"]).status.success());
    assert_ne!(fs::read(a.join("stream.csv")).unwrap(), fs::read(b.join("stream.csv")).unwrap());
}

#[test]
fn exit_status_follows_the_assertions() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    assert_eq!(gridhit(&["moments", "--config", path(&smoke()), "--out", path(&out)]).status.code(), Some(0));
    assert!(out.join("moment_table.json").exists());

    let strict = dir.path().join("strict.toml");
    let text = fs::read_to_string(smoke()).unwrap().replace("band_sigma = 4.0", "band_sigma = 1e-6");
    fs::write(&strict, text).unwrap();
    assert_eq!(gridhit(&["simulate", "--config", path(&strict), "--out", path(&out)]).status.code(), Some(1));

    let broken = dir.path().join("broken.toml");
    let text = fs::read_to_string(smoke()).unwrap().replace("cycles = 2000", "cycles = 2000\nspeed = 1");
    fs::write(&broken, text).unwrap();
    let o = gridhit(&["simulate", "--config", path(&broken), "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("speed"));

    assert_eq!(gridhit(&["simulate"]).status.code(), Some(2));
}

#[test]
fn clt_rejects_a_non_normalized_variant() {
    let o = gridhit(&["clt", "--config", path(&smoke()), "--out", "/nonexistent/never"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("normalized"));
}

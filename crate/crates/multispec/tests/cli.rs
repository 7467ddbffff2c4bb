use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: &[&str] = &[
    "synth.classes=2",
    "synth.segments=8",
    "synth.seconds=2",
    "synth.test_fraction=0.25",
    "encoder.channels=compact",
    "encoder.epochs=1",
    "decoder.kind=dnn3",
    "decoder.epochs=1",
    "eval.crops=1,1.5,2",
];

fn run(out: &Path, args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_multispec"));
    cmd.args(args).arg("--out").arg(out).args(["--seed", "5", "--threads", "1"]);
    for s in TINY {
        cmd.args(["--set", s]);
    }
    cmd.envs(env.iter().copied()).env("RUST_LOG", "warn");
    cmd.output().unwrap()
}

fn ok(out: &Path, args: &[&str]) -> String {
    let o = run(out, args, &[]);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

#[test]
fn every_step_from_synth_to_early_curve() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    ok(out, &["synth"]);
    let manifest = fs::read_to_string(out.join("manifest.csv")).unwrap();
    assert!(manifest.starts_with("path,label,device,fold,split\n"));
    assert_eq!(manifest.lines().filter(|l| l.ends_with(",test")).count(), 2);

    ok(out, &["extract"]);
    ok(out, &["train-encoder"]);
    ok(out, &["features"]);
    for split in ["train", "test"] {
        for src in ["LM", "GA", "CQ", "COM"] {
            assert!(out.join(format!("features_{split}_{src}.ascf")).is_file());
        }
    }
    ok(out, &["train-decoder"]);
    let text = ok(out, &["evaluate"]);
    assert!(text.contains("over 2 segments"), "{text}");
    let metrics = fs::read_to_string(out.join("report_metrics.csv")).unwrap();
    assert!(metrics.starts_with("metric,key,value\noverall,accuracy,"));
    ok(out, &["evaluate", "--encoder-only"]);

    ok(out, &["early-eval"]);
    let curve = fs::read_to_string(out.join("early_curve.csv")).unwrap();
    let rows: Vec<&str> = curve.lines().collect();
    assert_eq!(rows[0], "crop_length,accuracy");
    // One second holds 160 frames, enough for one patch.
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().skip(1).all(|r| r.split(',').nth(1).is_some_and(|a| !a.is_empty())));

    for cmd in ["synth", "extract", "train-encoder", "features", "train-decoder", "evaluate", "early-eval"] {
        let snap = fs::read_to_string(out.join(format!("{cmd}.config.ini"))).unwrap();
        assert!(snap.contains("seed = 5"), "{cmd}: {snap}");
    }
}

#[test]
fn environment_overrides_file_and_flags_override_environment() {
    let dir = tempfile::tempdir().unwrap();
    let ini = dir.path().join("exp.ini");
    fs::write(&ini, "[synth]\nsegments = 6\nclasses = 3\n").unwrap();
    let out = dir.path().join("o");
    let o = run(
        &out,
        &["synth", "--config", ini.to_str().unwrap()],
        &[("ASC_SYNTH_CLASSES", "2"), ("ASC_SYNTH_SEGMENTS", "4")],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let snap = fs::read_to_string(out.join("synth.config.ini")).unwrap();
    // --set synth.segments=8 beats the environment, which beats the file.
    assert!(snap.contains("segments = 8"), "{snap}");
    assert!(snap.contains("classes = 2"), "{snap}");
}

#[test]
fn failures_exit_nonzero_with_a_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["extract"], &[]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("manifest.csv"), "{err}");

    let o = run(dir.path(), &["synth", "--set", "encoder.combiner=avg-comb"], &[]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("combiner"));
}

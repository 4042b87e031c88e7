use std::path::Path;
use std::process::{Command, Output};

use lungseg::evaluation::{dice, generate_phantom, PhantomSpec};
use lungseg::nifti;

fn lungseg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lungseg"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn help_lists_defaults() {
    let out = lungseg(&["segment", "--help"]);
    assert_eq!(out.status.code(), Some(0));
    let h = text(&out.stdout);
    for flag in [
        "--fc-mean",
        "--fc-theta",
        "--slic-k",
        "--rf-threshold",
        "--per-voxel",
        "--report",
        "--rf-trees",
    ] {
        assert!(h.contains(flag), "{flag}");
    }
    assert!(h.contains("[default: -550]"));
    assert!(h.contains("[default: 150]"));
    assert!(h.contains("[default: 70]"));
    assert!(h.contains("[default: 0.6]"));
    assert!(!h.contains("[default: 0] [default: 0]"));
}

#[test]
fn missing_input_is_a_usage_error() {
    let out = lungseg(&["segment", "--model", "m.json", "--output", "o.nii"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stderr).contains("--input"));
}

#[test]
fn unknown_flag_and_bad_values_exit_1() {
    assert_eq!(lungseg(&["segment", "--nope"]).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.nii");
    let r = lungseg(&["phantom", "generate", "--output", p(&out), "--fc-sigma", "-3"]);
    assert_eq!(r.status.code(), Some(1));
    assert!(text(&r.stderr).contains("fc-sigma"), "{}", text(&r.stderr));
    let r = lungseg(&["phantom", "generate", "--output", p(&out), "--rf-trees", "many"]);
    assert_eq!(r.status.code(), Some(1));
}

#[test]
fn config_file_is_overridden_by_flags_and_echoed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# test\nfc-theta = 0.4\nrf-trees = 9\n").unwrap();
    let out = dir.path().join("ph.nii");
    let r = lungseg(&[
        "phantom",
        "generate",
        "--output",
        p(&out),
        "--config",
        p(&cfg),
        "--rf-trees",
        "11",
    ]);
    assert_eq!(r.status.code(), Some(0), "{}", text(&r.stderr));
    let echo = text(&r.stderr);
    assert!(echo.contains("fc-theta = 0.4"), "{echo}");
    assert!(echo.contains("rf-trees = 11"), "{echo}");
    assert!(echo.contains("rf-bag-fraction = 0.6"), "{echo}");
}

#[test]
fn phantom_train_segment_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (vol, truth, spec) = (d.join("ph.nii"), d.join("truth.nii"), d.join("ph.txt"));
    let r = lungseg(&[
        "phantom",
        "generate",
        "--seed",
        "7",
        "--output",
        p(&vol),
        "--truth",
        p(&truth),
        "--write-spec",
        p(&spec),
    ]);
    assert_eq!(r.status.code(), Some(0), "{}", text(&r.stderr));
    assert_eq!(PhantomSpec::load(&spec).unwrap(), PhantomSpec::random(7));

    let model = d.join("forest.json");
    let small = [
        "--rf-trees",
        "10",
        "--train-phantoms",
        "3",
        "--train-positives",
        "60",
        "--train-negatives",
        "60",
    ];
    let mut args = vec!["train", "--output", p(&model)];
    args.extend(small);
    let r = lungseg(&args);
    assert_eq!(r.status.code(), Some(0), "{}", text(&r.stderr));
    assert!(text(&r.stdout).contains("accuracy"));

    let (mask, report) = (d.join("mask.nii"), d.join("report.json"));
    let r = lungseg(&[
        "segment",
        "--input",
        p(&vol),
        "--model",
        p(&model),
        "--output",
        p(&mask),
        "--report",
        p(&report),
        "--threads",
        "2",
    ]);
    assert_eq!(r.status.code(), Some(0), "{}", text(&r.stderr));
    let (got, _) = nifti::load_mask_nifti(&mask).unwrap();
    let want = generate_phantom(&PhantomSpec::random(7)).unwrap().truth;
    assert!(dice(&got, &want).unwrap() > 0.9);
    let rep: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert!(rep["timings"].as_array().is_some_and(|t| !t.is_empty()));

    // a model that does not exist is an input problem, not a crash
    let r = lungseg(&[
        "segment",
        "--input",
        p(&vol),
        "--model",
        p(&d.join("none.json")),
        "--output",
        p(&mask),
    ]);
    assert_eq!(r.status.code(), Some(1));
}

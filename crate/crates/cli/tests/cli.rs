use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn roadseg(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_roadseg"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = roadseg(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    v.sort();
    v
}

/// Small corpus, classifier, saliency and weak masks shared by several tests.
fn pipeline(dir: &Path) {
    ok(
        dir,
        &[
            "synth",
            "--out",
            "data",
            "--n",
            "6",
            "--width",
            "64",
            "--height",
            "64",
            "--classifier-images",
            "16",
        ],
    );
    ok(
        dir,
        &[
            "train-gap",
            "--positives",
            "data/positives",
            "--negatives",
            "data/negatives",
            "--out",
            "model",
            "--epochs",
            "40",
        ],
    );
    ok(
        dir,
        &[
            "saliency",
            "--weights",
            "model/weights.fmap",
            "--images",
            "data/images",
            "--out",
            "sal",
        ],
    );
    ok(
        dir,
        &[
            "fuse",
            "--images",
            "data/images",
            "--saliency",
            "sal",
            "--out",
            "weak",
            "--tau",
            "0.9",
            "--theta",
            "0.01",
        ],
    );
}

#[test]
fn cost_prints_reference_hours() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(dir.path(), &["cost", "--images", "2975"]);
    assert!(out.contains("235025 s = 65.3 h"), "{out}");
    assert!(out.contains("2170 s = 0.6 h"), "{out}");
}

#[test]
fn out_of_range_theta_is_input_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("img.ppm"), b"P6 1 1 255\n\0\0\0").unwrap();
    let out = roadseg(
        dir.path(),
        &[
            "fuse",
            "--images",
            "img.ppm",
            "--saliency",
            "img.ppm",
            "--out",
            "o",
            "--theta",
            "1.5",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("theta") && err.contains("[0, 1)"), "{err}");
}

#[test]
fn unknown_flag_and_missing_input() {
    let dir = tempfile::tempdir().unwrap();
    let out = roadseg(dir.path(), &["fuse", "--bogus", "1"]);
    assert_eq!(out.status.code(), Some(1));
    let out = roadseg(
        dir.path(),
        &["fuse", "--images", "nowhere", "--saliency", "x", "--out", "o"],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`images`"));
    let out = roadseg(dir.path(), &["cost", "--images", "many"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`images`"));
}

#[test]
fn config_file_below_flags() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("cfg.json"), r#"{"sec-per-mask": 60, "images": 100}"#).unwrap();
    let out = ok(d, &["--config", "cfg.json", "cost", "--out", "c"]);
    assert!(out.contains("6000 s"), "{out}");
    let out = ok(d, &["--config", "cfg.json", "cost", "--images", "10", "--out", "c"]);
    assert!(out.contains("600 s"), "{out}");
    let manifest = fs::read_to_string(d.join("c/manifest.txt")).unwrap();
    assert!(
        manifest.contains("images=10\n") && manifest.contains("sec-per-mask=60\n"),
        "{manifest}"
    );

    fs::write(d.join("bad.json"), r#"{"tua": 0.5}"#).unwrap();
    let out = roadseg(d, &["--config", "bad.json", "cost"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("tua"));
}

#[test]
fn pipeline_replays_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    pipeline(d);
    ok(d, &["eval", "--pred", "weak", "--gt", "data/gt", "--out", "ev"]);
    for (src, copy) in [("weak", "weak2"), ("sal", "sal2"), ("ev", "ev2"), ("model", "model2")] {
        ok(
            d,
            &["replay", "--manifest", &format!("{src}/manifest.txt"), "--out", copy],
        );
        let (a, b) = (files(&d.join(src)), files(&d.join(copy)));
        assert_eq!(a.len(), b.len());
        for (fa, fb) in a.iter().zip(&b) {
            if fa.file_name().unwrap() == "manifest.txt" {
                continue;
            }
            assert_eq!(fs::read(fa).unwrap(), fs::read(fb).unwrap(), "{}", fa.display());
        }
    }
}

#[test]
fn sequential_matches_parallel() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    pipeline(d);
    ok(
        d,
        &[
            "--sequential",
            "fuse",
            "--images",
            "data/images",
            "--saliency",
            "sal",
            "--out",
            "weak_seq",
            "--tau",
            "0.9",
            "--theta",
            "0.01",
        ],
    );
    for (a, b) in files(&d.join("weak")).iter().zip(files(&d.join("weak_seq"))) {
        if a.file_name().unwrap() != "manifest.txt" {
            assert_eq!(fs::read(a).unwrap(), fs::read(&b).unwrap(), "{}", a.display());
        }
    }
}

#[test]
fn single_cell_sweep_equals_fuse_then_eval() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    pipeline(d);
    let eval = ok(d, &["eval", "--pred", "weak", "--gt", "data/gt"]);
    let direct = eval.split_whitespace().nth(1).unwrap().to_string();
    ok(
        d,
        &[
            "sweep",
            "--images",
            "data/images",
            "--saliency",
            "sal",
            "--gt",
            "data/gt",
            "--out",
            "sw",
            "--ks",
            "500",
            "--thresholds",
            "0.9:0.01",
        ],
    );
    let csv = fs::read_to_string(d.join("sw/sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2, "{csv}");
    assert_eq!(lines[1].split(',').nth(3).unwrap(), direct);
}

#[test]
fn selftrain_writes_iterations_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    pipeline(d);
    let out = ok(
        d,
        &[
            "selftrain",
            "--images",
            "data/images",
            "--weak",
            "weak",
            "--gt",
            "data/gt",
            "--out",
            "st",
            "--iterations",
            "2",
        ],
    );
    assert_eq!(out.lines().count(), 3, "{out}");
    for k in 0..=2 {
        assert_eq!(files(&d.join(format!("st/iter_{k}"))).len(), 6);
    }
    let manifest = fs::read_to_string(d.join("st/manifest.txt")).unwrap();
    assert!(manifest.starts_with("command=selftrain\n"), "{manifest}");
    assert!(manifest.contains("iteration.2.seed=44"), "{manifest}");
    ok(d, &["replay", "--manifest", "st/manifest.txt", "--out", "st2"]);
    for k in 0..=2 {
        for (a, b) in files(&d.join(format!("st/iter_{k}")))
            .iter()
            .zip(files(&d.join(format!("st2/iter_{k}"))))
        {
            assert_eq!(fs::read(a).unwrap(), fs::read(&b).unwrap());
        }
    }
}

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use painnet_core::model::{FusionHead, HeadSpec};
use painnet_core::synth::{SynthConfig, SynthDataset};
use painnet_core::temporal::{TemporalModel, TemporalSpec};

fn painnet(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_painnet"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL_CONFIG: &str = r#"
[data]
manifest = "data/manifest.csv"
[backbone]
variant = "reduced"
[eval]
head_frame_stride = 2
[eval.head]
epochs = 2
[eval.head.adam]
learning_rate = 0.001
[eval.temporal]
epochs = 3
[eval.temporal.adam]
learning_rate = 0.003
"#;

fn small_setup(dir: &Path, subjects: usize, videos: usize, seconds: f64) {
    fs::write(dir.join("cfg.toml"), SMALL_CONFIG).unwrap();
    let d = SynthDataset::generate(&SynthConfig {
        n_subjects: subjects,
        videos_per_subject: videos,
        duration_s: seconds,
        ..SynthConfig::default()
    })
    .unwrap();
    d.write(&dir.join("data")).unwrap();
}

#[test]
fn summary_matches_reference_fusion_counts() {
    let dir = tempfile::tempdir().unwrap();
    let o = painnet(&["summary", "--assert-paper"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("total params:           29,474,818"));
    assert!(out.contains("trainable params:           45,442"));
}

#[test]
fn summary_matches_reference_temporal_count() {
    let dir = tempfile::tempdir().unwrap();
    let o = painnet(&["summary", "--model", "temporal", "--assert-paper"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("49,841"));
    let o = painnet(&["summary", "--model", "temporal", "--output-units", "2"], dir.path());
    assert!(stdout(&o).contains("49,858"));
}

#[test]
fn wider_head_fails_the_count_assertion() {
    let dir = tempfile::tempdir().unwrap();
    let o = painnet(&["summary", "--head-width", "64", "--assert-paper"], dir.path());
    assert_eq!(o.status.code(), Some(5));
    assert!(stderr(&o).contains("assertion failed"));
    let o = painnet(&["summary", "--backbone", "reduced", "--assert-paper"], dir.path());
    assert_eq!(o.status.code(), Some(5));
}

#[test]
fn bad_config_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.toml"), "[eval]\nwindow_len = 0\n").unwrap();
    let o = painnet(&["-c", "bad.toml", "summary"], dir.path());
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let o = painnet(&["-c", "absent.toml", "summary"], dir.path());
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn missing_video_names_the_manifest_row() {
    let dir = tempfile::tempdir().unwrap();
    small_setup(dir.path(), 2, 1, 0.4);
    let manifest = dir.path().join("data/manifest.csv");
    let text = fs::read_to_string(&manifest).unwrap().replace("videos/S02/T1", "videos/S02/gone");
    fs::write(&manifest, text).unwrap();
    let o = painnet(&["-c", "cfg.toml", "prepare"], dir.path());
    assert_eq!(o.status.code(), Some(4));
    let err = stderr(&o);
    assert!(err.contains("missing file"), "{err}");
    assert!(err.contains("S02/gone (manifest line 4)"), "{err}");
}

#[test]
fn frame_level_prediction_needs_a_full_window() {
    let dir = tempfile::tempdir().unwrap();
    small_setup(dir.path(), 2, 1, 3.0);
    FusionHead::new(HeadSpec::for_backbone(32), 0)
        .unwrap()
        .to_checkpoint()
        .save(&dir.path().join("work/head"))
        .unwrap();
    TemporalModel::new(TemporalSpec::default(), 0)
        .unwrap()
        .to_checkpoint(None)
        .save(&dir.path().join("work/temporal"))
        .unwrap();
    let video = "data/videos/S01/T0";
    let o = painnet(&["-c", "cfg.toml", "predict", "--video", video, "--mode", "frame-level"], dir.path());
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("need at least 16 frames, got 15"), "{}", stderr(&o));

    let o = painnet(&["-c", "cfg.toml", "predict", "--video", video, "--mode", "video-level"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let row = out.lines().nth(1).unwrap();
    let conf: f64 = row.split(',').next().unwrap().parse().unwrap();
    assert!((0.0..=1.0).contains(&conf));
}

#[test]
fn end_to_end_run_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    small_setup(p, 3, 2, 2.0);

    let o = painnet(&["-c", "cfg.toml", "prepare"], p);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("prepared 6 videos"));

    for step in [&["train", "fusion"][..], &["extract"], &["train", "temporal"]] {
        let mut args = vec!["-c", "cfg.toml"];
        args.extend_from_slice(step);
        let o = painnet(&args, p);
        assert!(o.status.success(), "{step:?}: {}", stderr(&o));
    }
    assert!(p.join("work/features/S01_T0.bin").exists());
    assert!(p.join("work/temporal/weights.bin").exists());

    let o = painnet(&["-c", "cfg.toml", "eval-loso", "--out", "r1"], p);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = stdout(&o);
    assert!(table.contains("| Approach      | Channel     | Accuracy (%) |"), "{table}");
    let folds = fs::read_to_string(p.join("r1/folds.csv")).unwrap();
    assert_eq!(folds.lines().count(), 1 + 3 + 2);
    assert!(fs::read_to_string(p.join("r1/config.toml")).unwrap().contains("variant = \"reduced\""));

    let o = painnet(&["-c", "cfg.toml", "eval-loso", "--out", "r2"], p);
    assert!(o.status.success());
    for f in ["folds.csv", "predictions.csv", "table.txt", "config.toml"] {
        assert_eq!(fs::read(p.join("r1").join(f)).unwrap(), fs::read(p.join("r2").join(f)).unwrap(), "{f}");
    }

    let o = painnet(&["-c", "cfg.toml", "eval-loso", "--features", "work/features", "--out", "r3"], p);
    assert!(o.status.success(), "{}", stderr(&o));

    let o = painnet(&["-c", "cfg.toml", "score-nips"], p);
    assert!(o.status.success());
    assert!(stdout(&o).contains("rater_a,rater_b,6,"));
}

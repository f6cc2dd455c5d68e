//! The `glasspose` binary end to end.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use glasspose::harness::HarnessConfig;
use glasspose::io::sha256_file;
use glasspose::pipeline::PredictionRecord;
use glasspose::synth::{read_dataset_meta, read_frame};

fn glasspose(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_glasspose"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = glasspose(dir, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn dataset(dir: &Path, seed: &str, count: &str) -> PathBuf {
    ok(dir, &["--seed", seed, "generate", "--out", "data", "--count", count]);
    dir.join("data")
}

/// Every annotation written as a perfect prediction.
fn annotations_as_predictions(data: &Path) -> String {
    let meta = read_dataset_meta(data).unwrap();
    let mut text = String::new();
    for entry in &meta.manifest.frames {
        for a in read_frame(data, &meta, entry).unwrap().instances {
            let r = PredictionRecord {
                frame: entry.index,
                instance: a.id,
                category: a.category,
                pose: a.pose,
                scale: a.scale,
                confidence_x: 1.0,
                confidence_z: 1.0,
                elapsed_us: None,
            };
            text.push_str(&serde_json::to_string(&r).unwrap());
            text.push('\n');
        }
    }
    text
}

fn mean_row(csv: &str) -> Vec<f64> {
    let line = csv.lines().find(|l| l.starts_with("mean,")).expect("mean row");
    line.split(',').skip(2).map(|v| v.parse().unwrap()).collect()
}

#[test]
fn print_config_lists_every_default() {
    let dir = tempfile::tempdir().unwrap();
    let text = ok(dir.path(), &["--print-config"]);
    assert_eq!(HarnessConfig::from_toml(&text).unwrap(), HarnessConfig::default());
    for key in [
        "[scene.corruption]",
        "[estimators.noisy_depth]",
        "[train.loss]",
        "[grid]",
        "[sampler]",
    ] {
        assert!(text.contains(key), "{key} missing");
    }
    let seeded = ok(dir.path(), &["--seed", "9", "--print-config"]);
    assert_eq!(HarnessConfig::from_toml(&seeded).unwrap().seed, 9);
}

#[test]
fn usage_and_config_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&glasspose(dir.path(), &["frobnicate"])), 1);
    assert_eq!(code(&glasspose(dir.path(), &[])), 1);
    assert_eq!(code(&glasspose(dir.path(), &["gradcheck", "--trials", "0"])), 1);
    std::fs::write(dir.path().join("bad.toml"), "sede = 1\n").unwrap();
    assert_eq!(
        code(&glasspose(dir.path(), &["--config", "bad.toml", "--print-config"])),
        1
    );
    assert_eq!(code(&glasspose(dir.path(), &["--help"])), 0);
}

#[test]
fn generate_counts_and_hashes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let printed = ok(d, &["--seed", "4", "generate", "--out", "a", "--count", "10"]);
    assert!(printed.trim().ends_with("manifest.json"));
    let annos = std::fs::read_dir(d.join("a"))
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with("anno_"))
        .count();
    assert_eq!(annos, 10);
    ok(
        d,
        &["--seed", "4", "--jobs", "1", "generate", "--out", "b", "--count", "10"],
    );
    ok(d, &["--seed", "5", "generate", "--out", "c", "--count", "10"]);
    let hash = |x: &str| sha256_file(&d.join(x).join("manifest.json")).unwrap();
    assert_eq!(hash("a"), hash("b"));
    assert_ne!(hash("a"), hash("c"));

    ok(d, &["generate", "--out", "empty", "--count", "0"]);
    let meta = read_dataset_meta(&d.join("empty")).unwrap();
    assert_eq!(meta.manifest.frame_count, 0);
    ok(
        d,
        &[
            "evaluate",
            "--dataset",
            "empty",
            "--predictions",
            "/dev/null",
            "--report",
            "r",
        ],
    );
}

#[test]
fn missing_or_corrupt_inputs_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(
        code(&glasspose(d, &["predict", "--dataset", "nope", "--out", "p.jsonl"])),
        2
    );
    dataset(d, "1", "2");
    std::fs::write(d.join("p.jsonl"), "{not json}\n").unwrap();
    let out = glasspose(
        d,
        &[
            "evaluate",
            "--dataset",
            "data",
            "--predictions",
            "p.jsonl",
            "--report",
            "r",
        ],
    );
    assert_eq!(code(&out), 2);
    std::fs::write(d.join("c.toml"), "[estimators]\ncheckpoint = \"missing.ckpt\"\n").unwrap();
    assert_eq!(
        code(&glasspose(
            d,
            &["--config", "c.toml", "predict", "--dataset", "data", "--out", "p"]
        )),
        2
    );
}

#[test]
fn gradcheck_passes_and_catches_a_sign_bug() {
    let dir = tempfile::tempdir().unwrap();
    let text = ok(dir.path(), &["gradcheck", "--trials", "20"]);
    assert_eq!(text.lines().count(), 12);
    assert!(text.lines().all(|l| l.starts_with("ok ")));
    let out = glasspose(
        dir.path(),
        &["gradcheck", "--trials", "20", "--inject-fault", "axis-sign"],
    );
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL axis_loss"));
}

#[test]
fn perfect_and_empty_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let data = dataset(d, "2", "4");
    std::fs::write(d.join("perfect.jsonl"), annotations_as_predictions(&data)).unwrap();
    ok(
        d,
        &[
            "evaluate",
            "--dataset",
            "data",
            "--predictions",
            "perfect.jsonl",
            "--report",
            "perfect",
        ],
    );
    let csv = std::fs::read_to_string(d.join("perfect/pose_metrics.csv")).unwrap();
    assert!(mean_row(&csv).iter().all(|v| *v == 100.0), "{csv}");
    assert!(d.join("perfect/pose_metrics.md").exists() && d.join("perfect/pose_metrics.json").exists());

    std::fs::write(d.join("empty.jsonl"), "").unwrap();
    let out = glasspose(
        d,
        &[
            "evaluate",
            "--dataset",
            "data",
            "--predictions",
            "empty.jsonl",
            "--report",
            "empty",
        ],
    );
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
    let csv = std::fs::read_to_string(d.join("empty/pose_metrics.csv")).unwrap();
    assert!(mean_row(&csv).iter().all(|v| *v == 0.0), "{csv}");
}

#[test]
fn noisy_pipeline_keeps_the_record_count() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    dataset(d, "3", "4");
    std::fs::write(
        d.join("noisy.toml"),
        "[estimators]\ndepth = \"noisy\"\nnormals = \"noisy\"\n",
    )
    .unwrap();
    ok(d, &["predict", "--dataset", "data", "--out", "oracle.jsonl"]);
    ok(
        d,
        &[
            "--config",
            "noisy.toml",
            "predict",
            "--dataset",
            "data",
            "--out",
            "noisy.jsonl",
        ],
    );
    let lines = |f: &str| std::fs::read_to_string(d.join(f)).unwrap().lines().count();
    assert!(lines("oracle.jsonl") > 0);
    assert_eq!(lines("oracle.jsonl"), lines("noisy.jsonl"));
    assert_ne!(
        std::fs::read(d.join("oracle.jsonl")).unwrap(),
        std::fs::read(d.join("noisy.jsonl")).unwrap()
    );
}

#[test]
fn predictions_reproduce_from_dumped_intermediates() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    dataset(d, "6", "3");
    std::fs::write(
        d.join("noisy.toml"),
        "[estimators]\ndepth = \"noisy\"\nnormals = \"noisy\"\n",
    )
    .unwrap();
    let printed = ok(
        d,
        &[
            "--config",
            "noisy.toml",
            "--dump-intermediate",
            "predict",
            "--dataset",
            "data",
            "--out",
            "p.jsonl",
        ],
    );
    assert!(printed.contains("p.jsonl.intermediate"));
    let frame = d.join("p.jsonl.intermediate/frame_000000");
    for f in [
        "depth_completed.f64",
        "depth_completed.f64.json",
        "normals.f64",
        "normals.f64.json",
        "cloud_01.csv",
    ] {
        assert!(frame.join(f).exists(), "{f}");
    }
    // No estimator runs on this path: the clouds carry everything.
    ok(
        d,
        &[
            "predict",
            "--dataset",
            "data",
            "--out",
            "again.jsonl",
            "--from-dump",
            "p.jsonl.intermediate",
        ],
    );
    assert_eq!(
        std::fs::read(d.join("p.jsonl")).unwrap(),
        std::fs::read(d.join("again.jsonl")).unwrap()
    );
}

#[test]
fn training_is_stable_and_improves_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    dataset(d, "8", "12");
    std::fs::write(d.join("train.toml"), "[train]\nepochs = 3000\n").unwrap();
    let summary = ok(
        d,
        &[
            "--config",
            "train.toml",
            "train-ref",
            "--dataset",
            "data",
            "--out",
            "a.ckpt",
        ],
    );
    assert!(summary.contains("sha256"));
    ok(
        d,
        &[
            "--config",
            "train.toml",
            "train-ref",
            "--dataset",
            "data",
            "--out",
            "b.ckpt",
        ],
    );
    assert_eq!(
        sha256_file(&d.join("a.ckpt")).unwrap(),
        sha256_file(&d.join("b.ckpt")).unwrap()
    );

    let curve = std::fs::read_to_string(d.join("a.loss.csv")).unwrap();
    let totals: Vec<f64> = curve
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(totals.len(), 3001);
    assert!(totals.last().unwrap() < totals.first().unwrap());

    std::fs::write(d.join("trained.toml"), "[estimators]\ncheckpoint = \"a.ckpt\"\n").unwrap();
    ok(d, &["predict", "--dataset", "data", "--out", "untrained.jsonl"]);
    ok(
        d,
        &[
            "--config",
            "trained.toml",
            "predict",
            "--dataset",
            "data",
            "--out",
            "trained.jsonl",
        ],
    );
    ok(
        d,
        &[
            "evaluate",
            "--dataset",
            "data",
            "--predictions",
            "untrained.jsonl",
            "--report",
            "u",
        ],
    );
    ok(
        d,
        &[
            "evaluate",
            "--dataset",
            "data",
            "--predictions",
            "trained.jsonl",
            "--report",
            "t",
        ],
    );
    let score = |r: &str| mean_row(&std::fs::read_to_string(d.join(r).join("pose_metrics.csv")).unwrap())[6];
    assert!(score("t") > score("u"), "10°10cm {} vs {}", score("t"), score("u"));
}

#[test]
fn evaluate_emits_the_grid_with_one_flag() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    dataset(d, "9", "2");
    std::fs::write(d.join("g.toml"), "[grid]\ntrain_frames = 3\n[train]\nepochs = 50\n").unwrap();
    let out = glasspose(
        d,
        &[
            "--config",
            "g.toml",
            "evaluate",
            "--dataset",
            "data",
            "--grid",
            "--report",
            "r",
        ],
    );
    // With this little data the trend checks may go either way; the report
    // must exist regardless and a failed trend is a check failure.
    assert!([0, 3].contains(&code(&out)), "{}", String::from_utf8_lossy(&out.stderr));
    let md = std::fs::read_to_string(d.join("r/grid.md")).unwrap();
    for label in ["GT/GT", "GT/EST", "EST/GT", "EST/EST"] {
        assert!(md.contains(&format!("| {label} |")), "{label}");
    }
}

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use reconstsum::eval::GrayImage;
use reconstsum::io::{read_checkpoint, write_features, Overrides};
use reconstsum::kts;
use reconstsum::model::FeatureSequence;
use reconstsum::numgrad::Matrix;
use reconstsum::selection::{ScoreKind, ScoreVector};
use reconstsum::summarizer;
use reconstsum::trainer::TrainConfig;
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_reconstsum"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

/// Three loose clusters of 4 frames each at 2 fps.
fn toy_video(dir: &Path) -> (PathBuf, FeatureSequence) {
    let (n, d) = (12, 4);
    let data = (0..n * d)
        .map(|k| {
            let (t, j) = (k / d, k % d);
            let base = if j == t / 4 { 1.0 } else { 0.0 };
            base + 0.05 * ((k as f64) * 1.7).sin()
        })
        .collect();
    let x = FeatureSequence::new(Matrix::from_vec(n, d, data).unwrap(), 2.0, "toy").unwrap();
    let path = dir.join("toy.fseq");
    write_features(&x, &path).unwrap();
    (path, x)
}

fn trained(dir: &Path) -> (PathBuf, PathBuf, FeatureSequence) {
    let (features, x) = toy_video(dir);
    let ckpt = dir.join("toy.rsum");
    let out = run(&[
        "train",
        "--features",
        features.to_str().unwrap(),
        "--out",
        ckpt.to_str().unwrap(),
        "--hidden",
        "4",
        "--max-epochs",
        "5",
    ]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let log = String::from_utf8(out.stdout).unwrap();
    assert_eq!(log.lines().count(), 5);
    assert!(log.lines().all(|l| l.split('\t').count() == 5));
    (features, ckpt, x)
}

#[test]
fn thumbnail_with_m_three_returns_three_indices() {
    let dir = tempfile::tempdir().unwrap();
    let (features, ckpt, _) = trained(dir.path());
    let out = run(&[
        "summarize",
        "--kind",
        "thumbnail",
        "--m",
        "3",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--features",
        features.to_str().unwrap(),
    ]);
    let v = stdout_json(&out);
    assert_eq!(v["kind"], "thumbnail");
    assert_eq!(v["frameIndices"].as_array().unwrap().len(), 3);
    assert_eq!(v["budgetFrames"], 3);
}

#[test]
fn summaries_match_library_calls() {
    let dir = tempfile::tempdir().unwrap();
    let (features, ckpt, x) = trained(dir.path());
    let params = read_checkpoint(&ckpt).unwrap();
    let q = ScoreVector::ones(x.frames(), ScoreKind::Aesthetic);
    let config = dir.path().join("cfg.json");
    std::fs::write(&config, r#"{"alpha": 0.6, "variant": "disc"}"#).unwrap();
    let cfg = Overrides {
        alpha: Some(0.6),
        variant: Some(reconstsum::objectives::Variant::Disc),
        ..Default::default()
    }
    .train_config(&TrainConfig::default())
    .unwrap();
    let seg = kts::segment(&x, kts::default_max_segments(12, 2.0), kts::DEFAULT_PENALTY_WEIGHT).unwrap();

    let cases = [
        ("storyboard", summarizer::make_storyboard(&x, &params, &q, &cfg, 0.25).unwrap()),
        ("trailer", summarizer::make_trailer(&x, &params, &q, &cfg, &seg, 2.5).unwrap()),
        ("animated", summarizer::make_animated_thumbnail(&x, &params, &q, &cfg, &seg, 2.5).unwrap()),
    ];
    for (kind, expected) in cases {
        let out = run(&[
            "summarize",
            "--kind",
            kind,
            "--config",
            config.to_str().unwrap(),
            "--budget-fraction",
            "0.25",
            "--budget-seconds",
            "2.5",
            "--checkpoint",
            ckpt.to_str().unwrap(),
            "--features",
            features.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{kind}: {}", String::from_utf8_lossy(&out.stderr));
        assert_eq!(String::from_utf8(out.stdout).unwrap().trim_end(), expected.to_json(), "{kind}");
    }

    let out = run(&["segment", "--features", features.to_str().unwrap()]);
    assert_eq!(stdout_json(&out), serde_json::to_value(&seg).unwrap());
}

#[test]
fn config_file_yields_to_flags() {
    let dir = tempfile::tempdir().unwrap();
    let (features, ckpt, _) = trained(dir.path());
    let config = dir.path().join("cfg.json");
    std::fs::write(&config, r#"{"m": 2}"#).unwrap();
    let args = |extra: &[&str]| {
        let mut a = vec![
            "summarize",
            "--kind",
            "thumbnail",
            "--config",
            config.to_str().unwrap(),
            "--checkpoint",
            ckpt.to_str().unwrap(),
            "--features",
            features.to_str().unwrap(),
        ];
        a.extend_from_slice(extra);
        stdout_json(&run(&a))
    };
    assert_eq!(args(&[])["budgetFrames"], 2);
    assert_eq!(args(&["--m", "4"])["budgetFrames"], 4);
}

#[test]
fn frame_export_copies_selected_frames() {
    let dir = tempfile::tempdir().unwrap();
    let (features, ckpt, _) = trained(dir.path());
    let frames = dir.path().join("frames");
    std::fs::create_dir(&frames).unwrap();
    for t in 0..12 {
        GrayImage::filled(4, 4, t as u8).save_png(&frames.join(format!("{t}.png"))).unwrap();
    }
    let export = dir.path().join("export");
    let v = stdout_json(&run(&[
        "summarize",
        "--kind",
        "thumbnail",
        "--m",
        "2",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--features",
        features.to_str().unwrap(),
        "--frame-dir",
        frames.to_str().unwrap(),
        "--export",
        export.to_str().unwrap(),
    ]));
    let mut written: Vec<String> = std::fs::read_dir(&export)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    written.sort();
    let mut expected: Vec<String> = v["frameIndices"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| format!("{t}.png"))
        .collect();
    expected.sort();
    assert_eq!(written, expected);
}

#[test]
fn keyshot_eval_reproduces_hand_computed_report() {
    // v1: |A|=4, |B|=4, overlap 2 -> P = R = F = 1/2.
    // v2: judge one matches exactly (F = 1), judge two is disjoint (F = 0).
    // v3: frames {1,3} against selections {3,4,5,6} -> P = 1/2, R = 1/4, F = 1/3.
    let out = run(&[
        "eval",
        "--protocol",
        "keyshot",
        "--summaries",
        fixture("summaries.json").to_str().unwrap(),
        "--annotations",
        fixture("annotations.json").to_str().unwrap(),
    ]);
    let v = stdout_json(&out);
    assert_eq!(v["protocol"], "keyshot");
    let expected = [("v1", 0.5, 0.5, 0.5), ("v2", 0.5, 0.5, 0.5), ("v3", 0.5, 0.25, 1.0 / 3.0)];
    let videos = v["videos"].as_array().unwrap();
    assert_eq!(videos.len(), 3);
    for (got, (id, p, r, f)) in videos.iter().zip(expected) {
        assert_eq!(got["videoId"], id);
        assert!((got["precision"].as_f64().unwrap() - p).abs() < 1e-12);
        assert!((got["recall"].as_f64().unwrap() - r).abs() < 1e-12);
        assert!((got["metric"].as_f64().unwrap() - f).abs() < 1e-12);
    }
    assert!((v["mean"].as_f64().unwrap() - 4.0 / 9.0).abs() < 1e-12);

    let table = run(&[
        "eval",
        "--protocol",
        "keyshot",
        "--format",
        "table",
        "--summaries",
        fixture("summaries.json").to_str().unwrap(),
        "--annotations",
        fixture("annotations.json").to_str().unwrap(),
    ]);
    let text = String::from_utf8(table.stdout).unwrap();
    assert_eq!(text.lines().count(), 5);
    assert!(text.lines().last().unwrap().contains("0.4444"));
}

#[test]
fn frame_topk_eval_reads_frame_root() {
    // K = min(|{7,8,9}|, 2) = 2; human top-2 by votes is [8, 7]. Generated
    // frame 7 matches exactly; frame 2 matches frame 8 only when their
    // images agree.
    let dir = tempfile::tempdir().unwrap();
    let video = dir.path().join("w");
    std::fs::create_dir(&video).unwrap();
    let gradient = |shift: u8| {
        let px = (0..16 * 16).map(|k| ((k % 16) * 12) as u8 + shift).collect();
        GrayImage::new(16, 16, px).unwrap()
    };
    gradient(0).save_png(&video.join("2.png")).unwrap();
    gradient(1).save_png(&video.join("8.png")).unwrap();
    let summaries = dir.path().join("s.json");
    std::fs::write(
        &summaries,
        r#"{"kind":"storyboard","videoId":"w","frameIndices":[2,7],"ranking":[7,2],"budgetFrames":2}"#,
    )
    .unwrap();
    let annotations = dir.path().join("a.json");
    std::fs::write(
        &annotations,
        r#"{"videoId":"w","N":10,"judges":[{"frameSelections":[7,8]},{"frameSelections":[8,9]}]}"#,
    )
    .unwrap();
    let eval = || {
        stdout_json(&run(&[
            "eval",
            "--protocol",
            "frame-topk",
            "--summaries",
            summaries.to_str().unwrap(),
            "--annotations",
            annotations.to_str().unwrap(),
            "--frame-root",
            dir.path().to_str().unwrap(),
        ]))
    };
    let v = eval();
    assert_eq!(v["videos"][0]["k"], 2);
    assert_eq!(v["mean"], 1.0);

    GrayImage::filled(16, 16, 0).save_png(&video.join("8.png")).unwrap();
    assert_eq!(eval()["mean"], 0.5);
}

#[test]
fn missing_feature_file_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nowhere.fseq");
    let out = run(&["segment", "--features", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains(missing.to_str().unwrap()));
}

#[test]
fn malformed_feature_file_is_a_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.fseq");
    std::fs::write(&bad, b"XXXX\x01\0\0\0").unwrap();
    let out = run(&["segment", "--features", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.fseq") && err.contains("magic"), "{err}");
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(run(&["summarize", "--kind", "poster"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["eval", "--protocol", "keyshot", "--nope", "1"]).status.code(), Some(2));
}

#[test]
fn trailer_requires_a_budget() {
    let dir = tempfile::tempdir().unwrap();
    let (features, ckpt, _) = trained(dir.path());
    let out = run(&[
        "summarize",
        "--kind",
        "trailer",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--features",
        features.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn gradcheck_subcommand_passes() {
    let out = run(&["gradcheck", "--frames", "3", "--dim", "2", "--hidden", "2"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 23);
    assert!(text.contains("selector.forward.w_input"));
}

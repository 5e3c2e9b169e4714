mod common;

use std::path::Path;

use common::*;

fn synth(dir: &Path, extra: &[&str]) -> std::path::PathBuf {
    let ds = dir.join("ds");
    let mut args = vec![
        "--seed",
        "5",
        "synth",
        "--out",
        path(&ds),
        "--scenes",
        "2",
        "--frames",
        "4",
    ];
    args.extend_from_slice(extra);
    ok(&args);
    ds
}

fn instance_count(ds: &Path) -> usize {
    lightkp::annotations::load_dataset(ds)
        .unwrap()
        .iter()
        .flat_map(|s| &s.frames)
        .map(|f| f.instances().count())
        .sum()
}

#[test]
fn saliency_writes_one_map_per_instance() {
    let dir = tempfile::tempdir().unwrap();
    let ds = synth(dir.path(), &[]);
    let out = dir.path().join("out");
    ok(&["saliency", "--dataset", path(&ds), "--out", path(&out)]);
    let files = tree(&out.join("saliency"));
    let pngs = files
        .keys()
        .filter(|p| p.extension().is_some_and(|e| e == "png"))
        .count();
    assert_eq!(pngs, instance_count(&ds));

    let again = dir.path().join("again");
    ok(&["saliency", "--dataset", path(&ds), "--out", path(&again)]);
    assert_eq!(tree(&again), tree(&out));
}

#[test]
fn missing_image_names_the_frame() {
    let dir = tempfile::tempdir().unwrap();
    let ds = synth(dir.path(), &[]);
    std::fs::remove_file(ds.join("scene_1/frame_2.png")).unwrap();
    let out = expect_code(
        &[
            "saliency",
            "--dataset",
            path(&ds),
            "--out",
            path(dir.path()),
        ],
        2,
    );
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("scene 1 / frame 2"), "{msg}");
}

#[test]
fn adaptive_boxes_one_per_blob_and_seeded_boxes_cover_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let ds = synth(dir.path(), &["--blobs", "4"]);
    let out = dir.path().join("out");
    ok(&["genboxes", "--dataset", path(&ds), "--out", path(&out)]);
    let summary = read_json(&out.join("boxes/summary.json"));
    assert_eq!(summary["total_kept"], 2 * 4 * 4);
    let frame = read_json(&out.join("boxes/scene_0/frame_3.json"));
    assert_eq!(frame["frame_id"], 3);
    assert_eq!(frame["boxes"].as_array().unwrap().len(), 4);

    let seeded = dir.path().join("seeded");
    ok(&[
        "genboxes",
        "--mode",
        "seeded",
        "--dataset",
        path(&ds),
        "--out",
        path(&seeded),
    ]);
    ok(&[
        "eval",
        "boxes",
        "--dataset",
        path(&ds),
        "--predictions",
        path(&seeded.join("boxes")),
        "--out",
        path(&seeded),
    ]);
    let report = read_json(&seeded.join("eval_boxes.json"));
    assert_eq!(report["fn"], 0);
    assert_eq!(report["precision"], 1.0);
}

#[test]
fn empty_dataset_writes_no_box_files() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dir.path().join("empty");
    std::fs::create_dir(&ds).unwrap();
    let out = dir.path().join("out");
    ok(&["genboxes", "--dataset", path(&ds), "--out", path(&out)]);
    let files = tree(&out.join("boxes"));
    assert_eq!(
        files.keys().collect::<Vec<_>>(),
        vec![Path::new("summary.json")]
    );
}

#[test]
fn generated_boxes_evaluate_without_false_positives() {
    let dir = tempfile::tempdir().unwrap();
    let ds = synth(
        dir.path(),
        &["--noise", "8", "--separation", "3", "--blobs", "6"],
    );
    let out = dir.path().join("out");
    ok(&["genboxes", "--dataset", path(&ds), "--out", path(&out)]);
    ok(&[
        "eval",
        "boxes",
        "--dataset",
        path(&ds),
        "--predictions",
        path(&out.join("boxes")),
        "--out",
        path(&out),
    ]);
    let report = read_json(&out.join("eval_boxes.json"));
    assert_eq!(report["fp"], 0);
    assert_eq!(report["precision"], 1.0);
    assert!(out.join("eval_boxes.txt").is_file());
}

#[test]
fn half_res_boxes_still_describe_keypoints() {
    let dir = tempfile::tempdir().unwrap();
    let ds = synth(
        dir.path(),
        &[
            "--sigma-min",
            "3",
            "--sigma-max",
            "4",
            "--width",
            "192",
            "--height",
            "192",
        ],
    );
    let out = dir.path().join("out");
    ok(&[
        "--half-res",
        "genboxes",
        "--dataset",
        path(&ds),
        "--out",
        path(&out),
        "--window",
        "15",
    ]);
    ok(&[
        "eval",
        "boxes",
        "--dataset",
        path(&ds),
        "--predictions",
        path(&out.join("boxes")),
        "--out",
        path(&out),
    ]);
    let report = read_json(&out.join("eval_boxes.json"));
    assert_eq!(report["precision"], 1.0);
    assert_eq!(report["recall"], 1.0);
}

#[test]
fn ground_truth_keypoints_score_perfectly() {
    let dir = tempfile::tempdir().unwrap();
    let ds = synth(dir.path(), &[]);
    let pred = dir.path().join("pred");
    write_perfect_kp_predictions(&ds, &pred);
    let out = dir.path().join("out");
    ok(&[
        "eval",
        "keypoints",
        "--dataset",
        path(&ds),
        "--predictions",
        path(&pred),
        "--out",
        path(&out),
    ]);
    let report = read_json(&out.join("eval_keypoints.json"));
    assert_eq!(report["map"], 1.0);
    assert_eq!(report["mar"], 1.0);
    assert_eq!(report["per_threshold"].as_array().unwrap().len(), 10);
}

#[test]
fn malformed_predictions_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let ds = synth(dir.path(), &[]);
    let pred = dir.path().join("pred");
    write_perfect_kp_predictions(&ds, &pred);
    std::fs::write(
        pred.join("scene_0/frame_1.json"),
        r#"{"frame_id": 1, "keypoints": [{"x": 1}]}"#,
    )
    .unwrap();
    let out = expect_code(
        &[
            "eval",
            "keypoints",
            "--dataset",
            path(&ds),
            "--predictions",
            path(&pred),
            "--out",
            path(dir.path()),
        ],
        1,
    );
    assert!(String::from_utf8_lossy(&out.stderr).contains("frame_1.json"));

    std::fs::write(
        pred.join("scene_0/frame_1.json"),
        r#"{"frame_id": 2, "keypoints": []}"#,
    )
    .unwrap();
    expect_code(
        &[
            "eval",
            "keypoints",
            "--dataset",
            path(&ds),
            "--predictions",
            path(&pred),
            "--out",
            path(dir.path()),
        ],
        1,
    );
}

#[test]
fn consistency_sections_and_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let files: Vec<_> = hand_fixture()
        .iter()
        .enumerate()
        .map(|(i, text)| {
            let p = dir.path().join(format!("ann{i}.json"));
            std::fs::write(&p, text).unwrap();
            p
        })
        .collect();
    let out = dir.path().join("out");
    ok(&[
        "consistency",
        path(&files[0]),
        path(&files[1]),
        path(&files[2]),
        "--out",
        path(&out),
    ]);
    let r = read_json(&out.join("consistency.json"));
    let direct = r["direct"]["report"]["median_iou"].as_f64().unwrap();
    let indirect = r["indirect"]["report"]["median_iou"].as_f64().unwrap();
    assert!((direct - 9.0 / 11.0).abs() < 1e-9);
    assert!((indirect - 4.0 / 9.0).abs() < 1e-9);
    assert_eq!(r["direct"]["report"]["zero_count"], 1);
    let csv = std::fs::read_to_string(out.join("consistency_direct.csv")).unwrap();
    assert!(csv.starts_with("bin_left,bin_right,count\n"));

    let same = dir.path().join("same");
    ok(&[
        "consistency",
        path(&files[0]),
        path(&files[0]),
        "--out",
        path(&same),
    ]);
    let r = read_json(&same.join("consistency.json"));
    assert_eq!(r["direct"]["report"]["median_iou"], 1.0);
    assert_eq!(r["indirect"]["report"]["median_iou"], 1.0);

    expect_code(&["consistency", path(&files[0]), "--out", path(&same)], 1);
}

#[test]
fn tune_budget_one_returns_its_draw() {
    let dir = tempfile::tempdir().unwrap();
    let ds = synth(dir.path(), &[]);
    let out = dir.path().join("out");
    ok(&[
        "--seed",
        "2",
        "tune",
        "--dataset",
        path(&ds),
        "--out",
        path(&out),
        "--budget",
        "1",
    ]);
    let log = read_json(&out.join("tune_log.json"));
    let best = read_json(&out.join("best_params.json"));
    assert_eq!(log["trials"].as_array().unwrap().len(), 1);
    assert_eq!(best["adaptive"]["params"], log["trials"][0]["adaptive"]);
    assert_eq!(best["seeded"]["params"], log["trials"][0]["seeded"]);

    let again = dir.path().join("again");
    ok(&[
        "--seed",
        "2",
        "tune",
        "--dataset",
        path(&ds),
        "--out",
        path(&again),
        "--budget",
        "1",
    ]);
    assert_eq!(tree(&again), tree(&out));
}

#[test]
fn tune_finds_perfect_adaptive_params() {
    let dir = tempfile::tempdir().unwrap();
    let ds = synth(dir.path(), &[]);
    let out = dir.path().join("out");
    ok(&[
        "tune",
        "--dataset",
        path(&ds),
        "--out",
        path(&out),
        "--budget",
        "50",
        "--jobs",
        "4",
    ]);
    let best = read_json(&out.join("best_params.json"));
    assert_eq!(best["adaptive"]["score"]["f_score"], 1.0);

    // The emitted fragment is a usable config file.
    let boxes = dir.path().join("boxes");
    ok(&[
        "--config",
        path(&out.join("best_config.toml")),
        "genboxes",
        "--dataset",
        path(&ds),
        "--out",
        path(&boxes),
    ]);
}

#[test]
fn tune_rejects_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let ds = synth(dir.path(), &[]);
    expect_code(
        &[
            "tune",
            "--dataset",
            path(&ds),
            "--out",
            path(dir.path()),
            "--budget",
            "0",
        ],
        1,
    );
    std::fs::remove_file(ds.join("validation.json")).unwrap();
    expect_code(
        &[
            "tune",
            "--dataset",
            path(&ds),
            "--out",
            path(dir.path()),
            "--budget",
            "2",
        ],
        1,
    );
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let ds = synth(dir.path(), &[]);
    let cfg = dir.path().join("run.toml");
    let out = dir.path().join("from_config");
    std::fs::write(
        &cfg,
        format!(
            "dataset = {:?}\noutput = {:?}\njobs = 3\n[adaptive]\nwindow = 11\n",
            path(&ds),
            path(&out)
        ),
    )
    .unwrap();
    ok(&["--config", path(&cfg), "genboxes"]);
    assert_eq!(
        read_json(&out.join("boxes/summary.json"))["adaptive"]["window"],
        11
    );

    let flagged = dir.path().join("flagged");
    ok(&[
        "--config",
        path(&cfg),
        "genboxes",
        "--window",
        "13",
        "--out",
        path(&flagged),
    ]);
    assert_eq!(
        read_json(&flagged.join("boxes/summary.json"))["adaptive"]["window"],
        13
    );

    std::fs::write(&cfg, "jobs = 0\n").unwrap();
    expect_code(
        &[
            "--config",
            path(&cfg),
            "genboxes",
            "--dataset",
            path(&ds),
            "--out",
            path(&out),
        ],
        1,
    );
}

#[test]
fn invalid_dataset_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let ds = synth(dir.path(), &[]);
    let text = std::fs::read_to_string(ds.join("scene_0.json")).unwrap();
    std::fs::write(
        ds.join("scene_0.json"),
        text.replacen("\"frame_id\": 1", "\"frame_id\": 0", 1),
    )
    .unwrap();
    expect_code(
        &[
            "genboxes",
            "--dataset",
            path(&ds),
            "--out",
            path(dir.path()),
        ],
        1,
    );
    expect_code(
        &[
            "genboxes",
            "--dataset",
            path(&dir.path().join("nope")),
            "--out",
            path(dir.path()),
        ],
        2,
    );
    expect_code(&["genboxes", "--bogus"], 1);
}

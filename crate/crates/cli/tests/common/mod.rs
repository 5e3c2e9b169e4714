#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_lightkp"))
}

pub fn lightkp(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .env("RUST_LOG", "off")
        .output()
        .expect("binary runs")
}

/// Runs the binary and panics with its stderr unless it exits with `code`.
pub fn expect_code(args: &[&str], code: i32) -> Output {
    let out = lightkp(args);
    assert_eq!(
        out.status.code(),
        Some(code),
        "lightkp {}\nstderr: {}",
        args.join(" "),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn ok(args: &[&str]) -> Output {
    expect_code(args, 0)
}

pub fn path(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

pub fn read_json(p: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

/// Every file under `root`, keyed by relative path.
pub fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(
                    p.strip_prefix(root).unwrap().to_path_buf(),
                    std::fs::read(&p).unwrap(),
                );
            }
        }
    }
    out
}

/// Writes a keypoint prediction file per frame that repeats the ground
/// truth with confidence 1.
pub fn write_perfect_kp_predictions(dataset: &Path, out: &Path) {
    for scene in lightkp::annotations::load_dataset(dataset).unwrap() {
        for frame in &scene.frames {
            let kps: Vec<_> = frame
                .instance_keypoints()
                .iter()
                .map(|k| serde_json::json!({"x": k.x, "y": k.y, "score": 1.0}))
                .collect();
            let file = out
                .join(format!("scene_{}", scene.scene_id))
                .join(format!("frame_{}.json", frame.frame_id));
            std::fs::create_dir_all(file.parent().unwrap()).unwrap();
            let body = serde_json::json!({"frame_id": frame.frame_id, "keypoints": kps});
            std::fs::write(file, body.to_string()).unwrap();
        }
    }
}

pub fn annotator(name: &str, frames: serde_json::Value) -> String {
    serde_json::json!({"annotator": name, "frames": frames}).to_string()
}

/// Three annotators over two frames. Direct instance 1: frame 0 boxes
/// [0,0,10,10] twice and [3,0,13,10]; frame 1 two [0,0,4,4] and one
/// absentee. Indirect instance 2 in frame 0: nested squares of side 2, 4, 6.
pub fn hand_fixture() -> [String; 3] {
    let f = |b0: Option<[f64; 4]>, b1: Option<[f64; 4]>, ind: [f64; 4]| {
        let mut frames = vec![
            serde_json::json!({"scene_id": 0, "frame_id": 0, "instances": [
                {"id": 1, "direct": true, "box": b0.unwrap()},
                {"id": 2, "direct": false, "box": ind},
            ]}),
        ];
        let inst: Vec<_> = b1
            .into_iter()
            .map(|b| serde_json::json!({"id": 1, "direct": true, "box": b}))
            .collect();
        frames.push(serde_json::json!({"scene_id": 0, "frame_id": 1, "instances": inst}));
        serde_json::Value::Array(frames)
    };
    [
        annotator(
            "a",
            f(
                Some([0.0, 0.0, 10.0, 10.0]),
                Some([0.0, 0.0, 4.0, 4.0]),
                [0.0, 0.0, 2.0, 2.0],
            ),
        ),
        annotator(
            "b",
            f(Some([0.0, 0.0, 10.0, 10.0]), None, [0.0, 0.0, 4.0, 4.0]),
        ),
        annotator(
            "c",
            f(
                Some([3.0, 0.0, 13.0, 10.0]),
                Some([0.0, 0.0, 4.0, 4.0]),
                [0.0, 0.0, 6.0, 6.0],
            ),
        ),
    ]
}

use std::fmt::Write as _;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::frames::{
    frame_file, frame_refs, load_frame, par_map, read_json, thread_pool, write_json, write_text,
    FrameRef,
};
use crate::EvalArgs;
use lightkp::annotations::load_dataset;
use lightkp::boxgen::FrameBoxesFile;
use lightkp::metrics::{
    evaluate_boxes, evaluate_keypoints, BoxEvalReport, FrameBoxes, FrameKeypoints, KpEvalReport,
    KpPredFrame, ScoredKeypoint,
};
use lightkp::saliency::saliency_map;

/// Keypoint prediction file: `{"frame_id": .., "keypoints": [{x, y, score}]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KpPredFile {
    pub frame_id: u64,
    pub keypoints: Vec<ScoredKeypoint>,
}

fn ground_truth(f: &FrameRef) -> FrameKeypoints {
    FrameKeypoints {
        key: f.key(),
        keypoints: f.frame.instance_keypoints(),
    }
}

fn check_frame_id(f: &FrameRef, found: u64) -> anyhow::Result<()> {
    if found != f.frame.frame_id {
        bail!("{}: prediction file holds frame_id {found}", f.label());
    }
    Ok(())
}

pub fn run_boxes(cfg: &mut RunConfig, args: EvalArgs) -> anyhow::Result<()> {
    args.data.apply(cfg);
    cfg.validate()?;
    let scenes = load_dataset(cfg.dataset()?)?;
    let frames = frame_refs(&scenes);
    let mut pred = Vec::with_capacity(frames.len());
    for f in &frames {
        let file: FrameBoxesFile = read_json(&frame_file(&args.predictions, f.key(), ".json"))?;
        check_frame_id(f, file.frame_id)?;
        let boxes: Vec<_> = file.boxes.iter().map(|b| b.bbox()).collect();
        if let Some(b) = boxes.iter().find(|b| !b.is_valid()) {
            bail!("{}: invalid box {b:?}", f.label());
        }
        pred.push(FrameBoxes {
            key: f.key(),
            boxes,
        });
    }
    let gt: Vec<_> = frames.iter().map(ground_truth).collect();
    let report = evaluate_boxes(&pred, &gt)?;

    let out = cfg.output()?;
    write_json(&out.join("eval_boxes.json"), &report)?;
    let table = box_table(&report);
    write_text(&out.join("eval_boxes.txt"), &table)?;
    print!("{table}");
    Ok(())
}

pub fn run_keypoints(cfg: &mut RunConfig, args: EvalArgs) -> anyhow::Result<()> {
    args.data.apply(cfg);
    if let Some(t) = args.thresholds {
        cfg.thresholds = t;
    }
    cfg.validate()?;
    let root = cfg.dataset()?;
    let scenes = load_dataset(root)?;
    let frames = frame_refs(&scenes);
    let mut pred = Vec::with_capacity(frames.len());
    for f in &frames {
        let file: KpPredFile = read_json(&frame_file(&args.predictions, f.key(), ".json"))?;
        check_frame_id(f, file.frame_id)?;
        pred.push(KpPredFrame {
            key: f.key(),
            predictions: file.keypoints,
        });
    }
    let gt: Vec<_> = frames.iter().map(ground_truth).collect();
    let pool = thread_pool(cfg.jobs)?;
    let maps = par_map(&pool, &frames, |f| {
        let img = load_frame(root, f)?;
        f.frame
            .instance_keypoints()
            .iter()
            .map(|k| saliency_map(&img, k, &cfg.bms).with_context(|| f.label()))
            .collect::<anyhow::Result<Vec<_>>>()
    })?;
    let report = evaluate_keypoints(&pred, &gt, &maps, &cfg.thresholds)?;

    let out = cfg.output()?;
    write_json(&out.join("eval_keypoints.json"), &report)?;
    let table = kp_table(&report);
    write_text(&out.join("eval_keypoints.txt"), &table)?;
    print!("{table}");
    Ok(())
}

fn box_table(r: &BoxEvalReport) -> String {
    let mut s = String::new();
    let rows: [(&str, String); 11] = [
        ("TP", r.tp.to_string()),
        ("FP", r.fp.to_string()),
        ("FN", r.r#fn.to_string()),
        ("precision", format!("{:.6}", r.precision)),
        ("recall", format!("{:.6}", r.recall)),
        ("F-score", format!("{:.6}", r.f_score)),
        ("keypoint recall", format!("{:.6}", r.kp_recall)),
        ("q_k", format!("{:.6} (std {:.6})", r.q_k, r.q_k_std)),
        ("q_b", format!("{:.6} (std {:.6})", r.q_b, r.q_b_std)),
        ("q", format!("{:.6}", r.q)),
        (
            "recall direct / indirect",
            format!("{:.6} / {:.6}", r.direct.recall, r.indirect.recall),
        ),
    ];
    for (name, value) in rows {
        let _ = writeln!(s, "{name:<26}{value}");
    }
    if r.zero_tp {
        let _ = writeln!(s, "no true positives: quality factors reported as 1");
    }
    s
}

fn kp_table(r: &KpEvalReport) -> String {
    let mut s = format!(
        "{:>9} {:>6} {:>6} {:>6} {:>10} {:>10} {:>10}\n",
        "threshold", "TP", "FP", "FN", "precision", "recall", "AP"
    );
    for t in &r.per_threshold {
        let _ = writeln!(
            s,
            "{:>9.2} {:>6} {:>6} {:>6} {:>10.6} {:>10.6} {:>10.6}",
            t.threshold, t.tp, t.fp, t.r#fn, t.precision, t.recall, t.ap
        );
    }
    let _ = writeln!(s, "mAP {:.6}  mAR {:.6}", r.map, r.mar);
    s
}

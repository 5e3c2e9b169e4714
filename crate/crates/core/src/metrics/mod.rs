//! Evaluation metrics: predicted boxes against ground-truth keypoints,
//! predicted keypoints against ground-truth keypoints, and annotator
//! agreement on boxes.

mod boxes;
mod consistency;
mod keypoints;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::annotations::Keypoint;
use crate::error::{Error, Result};

pub use boxes::{
    contains_kp, evaluate_boxes, BoxEvalReport, ClassRecall, FrameBoxStats, FrameBoxes,
};
pub use consistency::{
    consistency_report, iou, mean_bb, ConsistencyReport, FrameIou, HistogramBin,
};
pub use keypoints::{
    default_thresholds, evaluate_keypoints, kps_similarity, FrameMatches, KpEvalReport,
    KpPredFrame, MatchedPair, ScoredKeypoint, ThresholdResult,
};

/// Identifies a frame across scenes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FrameKey {
    pub scene_id: u64,
    pub frame_id: u64,
}

/// Ground-truth keypoints of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameKeypoints {
    pub key: FrameKey,
    pub keypoints: Vec<Keypoint>,
}

/// Pairs predictions with ground truth by frame key, sorted by key so that
/// results never depend on input order. Both sides must cover exactly the
/// same frames.
fn align<'a, P, G>(
    pred: &'a [P],
    pred_key: impl Fn(&P) -> FrameKey,
    gt: &'a [G],
    gt_key: impl Fn(&G) -> FrameKey,
) -> Result<Vec<(FrameKey, &'a P, usize)>> {
    let mut by_key: BTreeMap<FrameKey, (Option<&P>, Option<usize>)> = BTreeMap::new();
    let mut dups = Vec::new();
    for p in pred {
        let slot = by_key.entry(pred_key(p)).or_default();
        if slot.0.replace(p).is_some() {
            dups.push(pred_key(p));
        }
    }
    for (i, g) in gt.iter().enumerate() {
        let slot = by_key.entry(gt_key(g)).or_default();
        if slot.1.replace(i).is_some() {
            dups.push(gt_key(g));
        }
    }
    if let Some(k) = dups.first() {
        return Err(Error::arg(format!(
            "frame scene {} / frame {} listed twice",
            k.scene_id, k.frame_id
        )));
    }
    by_key
        .into_iter()
        .map(|(key, slot)| match slot {
            (Some(p), Some(g)) => Ok((key, p, g)),
            (None, _) => Err(Error::arg(format!(
                "no predictions for scene {} / frame {}",
                key.scene_id, key.frame_id
            ))),
            (_, None) => Err(Error::arg(format!(
                "predictions for unknown scene {} / frame {}",
                key.scene_id, key.frame_id
            ))),
        })
        .collect()
}

/// `num / den`, or 1 when there is nothing to count.
fn ratio_or_one(num: usize, den: usize) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic_mean(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

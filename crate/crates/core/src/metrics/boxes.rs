use serde::Serialize;

use super::{align, harmonic_mean, ratio_or_one, FrameKey, FrameKeypoints};
use crate::annotations::{BoundingBox, Keypoint};
use crate::error::Result;

/// Half-open containment: `x1 <= x < x2` and `y1 <= y < y2`.
pub fn contains_kp(b: &BoundingBox, k: &Keypoint) -> bool {
    b.contains(k)
}

/// Predicted boxes of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameBoxes {
    pub key: FrameKey,
    pub boxes: Vec<BoundingBox>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameBoxStats {
    pub scene_id: u64,
    pub frame_id: u64,
    pub tp: usize,
    pub fp: usize,
    pub r#fn: usize,
    /// Σ 1/n_K(b) over true-positive boxes.
    pub q_k_sum: f64,
    /// Σ 1/n_B(k) over described keypoints.
    pub q_b_sum: f64,
    pub described: usize,
}

/// Recall restricted to keypoints of one direct/indirect class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassRecall {
    pub total: usize,
    pub described: usize,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoxEvalReport {
    pub tp: usize,
    pub fp: usize,
    pub r#fn: usize,
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
    /// Keypoints covered by at least one box.
    pub described: usize,
    /// `described / (described + fn)`: recall counted per keypoint rather
    /// than per true-positive box.
    pub kp_recall: f64,
    /// Mean of 1/n_K(b) over all true-positive boxes of the dataset.
    pub q_k: f64,
    /// Mean of 1/n_B(k) over all described keypoints of the dataset.
    pub q_b: f64,
    pub q: f64,
    pub q_k_std: f64,
    pub q_b_std: f64,
    /// No true positives: `q_k`, `q_b` and `q` are reported as 1.
    pub zero_tp: bool,
    pub direct: ClassRecall,
    pub indirect: ClassRecall,
    pub per_frame: Vec<FrameBoxStats>,
}

#[derive(Default)]
struct Totals {
    tp: usize,
    fp: usize,
    fn_: usize,
    described: usize,
    q_k: (f64, f64),
    q_b: (f64, f64),
    direct: (usize, usize),
    indirect: (usize, usize),
}

/// Scores predicted boxes against ground-truth keypoints.
///
/// A box is a true positive if it contains at least one keypoint, otherwise
/// a false positive; a keypoint no box contains is a false negative. The
/// quality factors are accumulated over the whole dataset before dividing.
/// Undefined ratios (nothing predicted, nothing to find) are reported as 1.
pub fn evaluate_boxes(pred: &[FrameBoxes], gt: &[FrameKeypoints]) -> Result<BoxEvalReport> {
    let frames = align(pred, |p| p.key, gt, |g| g.key)?;
    let mut t = Totals::default();
    let mut per_frame = Vec::with_capacity(frames.len());

    for (key, p, g) in frames {
        let kps = &gt[g].keypoints;
        let mut covered_by = vec![0usize; kps.len()];
        let mut s = FrameBoxStats {
            scene_id: key.scene_id,
            frame_id: key.frame_id,
            tp: 0,
            fp: 0,
            r#fn: 0,
            q_k_sum: 0.0,
            q_b_sum: 0.0,
            described: 0,
        };
        for b in &p.boxes {
            let mut n_k = 0usize;
            for (i, k) in kps.iter().enumerate() {
                if contains_kp(b, k) {
                    n_k += 1;
                    covered_by[i] += 1;
                }
            }
            if n_k == 0 {
                s.fp += 1;
            } else {
                s.tp += 1;
                let q = 1.0 / n_k as f64;
                s.q_k_sum += q;
                t.q_k.1 += q * q;
            }
        }
        for (k, &n_b) in kps.iter().zip(&covered_by) {
            let class = if k.direct {
                &mut t.direct
            } else {
                &mut t.indirect
            };
            class.0 += 1;
            if n_b == 0 {
                s.r#fn += 1;
            } else {
                class.1 += 1;
                s.described += 1;
                let q = 1.0 / n_b as f64;
                s.q_b_sum += q;
                t.q_b.1 += q * q;
            }
        }
        t.tp += s.tp;
        t.fp += s.fp;
        t.fn_ += s.r#fn;
        t.described += s.described;
        t.q_k.0 += s.q_k_sum;
        t.q_b.0 += s.q_b_sum;
        per_frame.push(s);
    }

    let precision = ratio_or_one(t.tp, t.tp + t.fp);
    let recall = ratio_or_one(t.tp, t.tp + t.fn_);
    let zero_tp = t.tp == 0;
    let mean_std = |(sum, sq): (f64, f64), n: usize| {
        if n == 0 {
            (1.0, 0.0)
        } else {
            let mean = sum / n as f64;
            (mean, (sq / n as f64 - mean * mean).max(0.0).sqrt())
        }
    };
    let (q_k, q_k_std) = mean_std(t.q_k, t.tp);
    let (q_b, q_b_std) = mean_std(t.q_b, t.described);
    let class = |(total, described): (usize, usize)| ClassRecall {
        total,
        described,
        recall: ratio_or_one(described, total),
    };

    Ok(BoxEvalReport {
        tp: t.tp,
        fp: t.fp,
        r#fn: t.fn_,
        precision,
        recall,
        f_score: harmonic_mean(precision, recall),
        described: t.described,
        kp_recall: ratio_or_one(t.described, t.described + t.fn_),
        q_k,
        q_b,
        q: q_k * q_b,
        q_k_std,
        q_b_std,
        zero_tp,
        direct: class(t.direct),
        indirect: class(t.indirect),
        per_frame,
    })
}

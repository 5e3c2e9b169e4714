use serde::{Deserialize, Serialize};

use super::{align, ratio_or_one, FrameKey, FrameKeypoints};
use crate::annotations::Keypoint;
use crate::assignment::{solve_max, WeightMatrix};
use crate::error::{Error, Result};
use crate::saliency::{saliency_at, SaliencyMap};

/// Similarity `exp(−‖p − g‖ · |s(p|g) − s(g|g)|)` of a predicted point `p`
/// to a ground-truth keypoint `g`, where `s(·|g)` is the saliency map seeded
/// at `g`. Distance only counts where the saliency differs from the seed's.
pub fn kps_similarity(p: &Keypoint, gt: &Keypoint, map: &SaliencyMap) -> Result<f64> {
    if !map.seed.same_position(gt) {
        return Err(Error::arg(format!(
            "saliency map seeded at ({}, {}) used for keypoint ({}, {})",
            map.seed.x, map.seed.y, gt.x, gt.y
        )));
    }
    let s_p = saliency_at(map, p)?;
    let s_gt = saliency_at(map, gt)?;
    Ok((-p.distance(gt) * (s_p - s_gt).abs()).exp())
}

/// The grid 0.50, 0.55, …, 0.95.
pub fn default_thresholds() -> Vec<f64> {
    (0..10).map(|i| f64::from(50 + 5 * i) / 100.0).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoredKeypoint {
    pub x: u32,
    pub y: u32,
    pub score: f64,
}

impl ScoredKeypoint {
    pub fn point(&self) -> Keypoint {
        Keypoint::new(self.x, self.y, false)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KpPredFrame {
    pub key: FrameKey,
    pub predictions: Vec<ScoredKeypoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MatchedPair {
    pub pred: usize,
    pub gt: usize,
    pub kps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameMatches {
    pub scene_id: u64,
    pub frame_id: u64,
    pub pairs: Vec<MatchedPair>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdResult {
    pub threshold: f64,
    pub tp: usize,
    pub fp: usize,
    pub r#fn: usize,
    pub precision: f64,
    pub recall: f64,
    pub ap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KpEvalReport {
    pub map: f64,
    pub mar: f64,
    pub per_threshold: Vec<ThresholdResult>,
    pub matches: Vec<FrameMatches>,
}

struct Detection {
    score: f64,
    matched_kps: Option<f64>,
}

/// Number of recall levels in the interpolated precision average.
const RECALL_LEVELS: usize = 101;

/// Matches predictions to ground truth per frame by maximum total
/// similarity, then scores the matching at each similarity threshold.
///
/// `maps[i][j]` is the saliency map of `gt[i].keypoints[j]`. Matching is
/// done once per frame; at threshold `t` a matched pair with similarity
/// `>= t` is a true positive. Average precision uses 101-point
/// interpolation over predictions ranked globally by confidence.
pub fn evaluate_keypoints(
    pred: &[KpPredFrame],
    gt: &[FrameKeypoints],
    maps: &[Vec<SaliencyMap>],
    thresholds: &[f64],
) -> Result<KpEvalReport> {
    if thresholds.is_empty() {
        return Err(Error::arg("threshold list is empty"));
    }
    if thresholds.iter().any(|t| !t.is_finite()) || thresholds.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::arg(
            "thresholds must be finite and strictly increasing",
        ));
    }
    if maps.len() != gt.len() {
        return Err(Error::arg(format!(
            "saliency maps given for {} frames, ground truth has {}",
            maps.len(),
            gt.len()
        )));
    }

    let frames = align(pred, |p| p.key, gt, |g| g.key)?;
    let mut detections = Vec::new();
    let mut matches = Vec::with_capacity(frames.len());
    let mut n_gt = 0usize;

    for (key, p, g) in frames {
        let kps = &gt[g].keypoints;
        let frame_maps = &maps[g];
        if frame_maps.len() != kps.len() {
            return Err(Error::arg(format!(
                "scene {} / frame {}: {} saliency maps for {} keypoints",
                key.scene_id,
                key.frame_id,
                frame_maps.len(),
                kps.len()
            )));
        }
        if let Some(bad) = p.predictions.iter().find(|d| !d.score.is_finite()) {
            return Err(Error::arg(format!(
                "non-finite prediction score {}",
                bad.score
            )));
        }
        n_gt += kps.len();

        let mut weights = Vec::with_capacity(p.predictions.len() * kps.len());
        for d in &p.predictions {
            for (k, m) in kps.iter().zip(frame_maps) {
                weights.push(kps_similarity(&d.point(), k, m)?);
            }
        }
        let w = WeightMatrix::new(p.predictions.len(), kps.len(), weights)?;
        let assignment = solve_max(&w)?;

        let mut matched = vec![None; p.predictions.len()];
        let pairs: Vec<MatchedPair> = assignment
            .pairs
            .iter()
            .map(|&(r, c)| {
                let kps = w.get(r, c);
                matched[r] = Some(kps);
                MatchedPair {
                    pred: r,
                    gt: c,
                    kps,
                }
            })
            .collect();
        detections.extend(
            p.predictions
                .iter()
                .zip(matched)
                .map(|(d, matched_kps)| Detection {
                    score: d.score,
                    matched_kps,
                }),
        );
        matches.push(FrameMatches {
            scene_id: key.scene_id,
            frame_id: key.frame_id,
            pairs,
        });
    }

    // Stable: equal scores keep frame-key then prediction order.
    detections.sort_by(|a, b| b.score.total_cmp(&a.score));

    let per_threshold: Vec<ThresholdResult> = thresholds
        .iter()
        .map(|&t| {
            let hits: Vec<bool> = detections
                .iter()
                .map(|d| d.matched_kps.is_some_and(|k| k >= t))
                .collect();
            let tp = hits.iter().filter(|&&h| h).count();
            let precision = ratio_or_one(tp, hits.len());
            let ap = if n_gt == 0 {
                precision
            } else {
                interpolated_ap(&hits, n_gt)
            };
            ThresholdResult {
                threshold: t,
                tp,
                fp: hits.len() - tp,
                r#fn: n_gt - tp,
                precision,
                recall: ratio_or_one(tp, n_gt),
                ap,
            }
        })
        .collect();

    let n = per_threshold.len() as f64;
    Ok(KpEvalReport {
        map: per_threshold.iter().map(|r| r.ap).sum::<f64>() / n,
        mar: per_threshold.iter().map(|r| r.recall).sum::<f64>() / n,
        per_threshold,
        matches,
    })
}

/// Mean over recall levels 0, 0.01, …, 1 of the best precision achieved at
/// or beyond that recall; levels never reached contribute 0.
fn interpolated_ap(ranked_hits: &[bool], n_gt: usize) -> f64 {
    let mut tp = 0usize;
    let mut recall = Vec::with_capacity(ranked_hits.len());
    let mut precision = Vec::with_capacity(ranked_hits.len());
    for (i, &hit) in ranked_hits.iter().enumerate() {
        tp += usize::from(hit);
        recall.push(tp as f64 / n_gt as f64);
        precision.push(tp as f64 / (i + 1) as f64);
    }
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut sum = 0.0;
    let mut ptr = 0;
    for level in 0..RECALL_LEVELS {
        let r = level as f64 / (RECALL_LEVELS - 1) as f64;
        while ptr < recall.len() && recall[ptr] < r {
            ptr += 1;
        }
        if ptr < recall.len() {
            sum += precision[ptr];
        }
    }
    sum / RECALL_LEVELS as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::{BitDepth, GrayImage};
    use crate::saliency::{saliency_map, BmsParams};

    fn kp(x: u32, y: u32) -> Keypoint {
        Keypoint::new(x, y, true)
    }

    fn key(frame_id: u64) -> FrameKey {
        FrameKey {
            scene_id: 1,
            frame_id,
        }
    }

    /// Saliency map with a hand-set value at the seed and one other pixel.
    fn synthetic_map(seed: Keypoint, at: (u32, u32, f64), seed_value: f64) -> SaliencyMap {
        let (w, h) = (32, 32);
        let mut values = vec![0.0; w * h];
        values[seed.y as usize * w + seed.x as usize] = seed_value;
        values[at.1 as usize * w + at.0 as usize] = at.2;
        SaliencyMap {
            width: w as u32,
            height: h as u32,
            values,
            seed,
            thresholds_used: 10,
            degenerate: false,
        }
    }

    #[test]
    fn identical_points_score_one() {
        let g = kp(4, 4);
        let m = synthetic_map(g, (0, 0, 0.0), 0.8);
        assert_eq!(kps_similarity(&g, &g, &m).unwrap(), 1.0);
    }

    #[test]
    fn equal_saliency_scores_one_at_any_distance() {
        let g = kp(4, 4);
        let m = synthetic_map(g, (30, 29, 0.8), 0.8);
        assert_eq!(kps_similarity(&kp(30, 29), &g, &m).unwrap(), 1.0);
    }

    #[test]
    fn distance_ten_difference_tenth() {
        let g = kp(5, 5);
        let m = synthetic_map(g, (15, 5, 0.4), 0.5);
        let v = kps_similarity(&kp(15, 5), &g, &m).unwrap();
        let diff: f64 = 0.5 - 0.4;
        assert!((v - (-10.0 * diff).exp()).abs() < 1e-15);
        assert!((v - 0.367_879_441_171_442_33).abs() < 1e-9);
    }

    #[test]
    fn out_of_bounds_or_wrong_map_rejected() {
        let g = kp(5, 5);
        let m = synthetic_map(g, (0, 0, 0.0), 1.0);
        assert!(kps_similarity(&kp(32, 0), &g, &m).is_err());
        assert!(kps_similarity(&kp(1, 1), &kp(6, 5), &m).is_err());
    }

    #[test]
    fn similarity_is_monotone() {
        let g = kp(0, 0);
        for d in 1..20u32 {
            for diff in [0.0, 0.05, 0.3, 1.0] {
                let near =
                    kps_similarity(&kp(d, 0), &g, &synthetic_map(g, (d, 0, 1.0 - diff), 1.0))
                        .unwrap();
                let far = kps_similarity(
                    &kp(d + 1, 0),
                    &g,
                    &synthetic_map(g, (d + 1, 0, 1.0 - diff), 1.0),
                )
                .unwrap();
                assert!(far <= near);
                let more =
                    kps_similarity(&kp(d, 0), &g, &synthetic_map(g, (d, 0, 0.9 - diff), 1.0))
                        .unwrap();
                assert!(more <= near);
            }
        }
    }

    #[test]
    fn default_grid() {
        let t = default_thresholds();
        assert_eq!(t.len(), 10);
        assert_eq!(t[0], 0.5);
        assert_eq!(t[9], 0.95);
    }

    fn spot_image() -> GrayImage {
        GrayImage::from_fn(32, 32, BitDepth::Eight, |x, y| {
            let d2 = (f64::from(x) - 10.0).powi(2) + (f64::from(y) - 10.0).powi(2);
            (220.0 * (-d2 / 8.0).exp()).round() as u16
        })
    }

    #[test]
    fn perfect_predictor_scores_one() {
        let img = spot_image();
        let gts = vec![kp(10, 10), kp(25, 25)];
        let maps: Vec<_> = gts
            .iter()
            .map(|g| saliency_map(&img, g, &BmsParams::default()).unwrap())
            .collect();
        let pred = KpPredFrame {
            key: key(0),
            predictions: gts
                .iter()
                .map(|g| ScoredKeypoint {
                    x: g.x,
                    y: g.y,
                    score: 1.0,
                })
                .collect(),
        };
        let gt = FrameKeypoints {
            key: key(0),
            keypoints: gts,
        };
        let r = evaluate_keypoints(&[pred], &[gt], &[maps], &default_thresholds()).unwrap();
        assert_eq!(r.map, 1.0);
        assert_eq!(r.mar, 1.0);
    }

    #[test]
    fn no_predictions_score_zero() {
        let img = spot_image();
        let g = kp(10, 10);
        let maps = vec![vec![saliency_map(&img, &g, &BmsParams::default()).unwrap()]];
        let r = evaluate_keypoints(
            &[KpPredFrame {
                key: key(0),
                predictions: vec![],
            }],
            &[FrameKeypoints {
                key: key(0),
                keypoints: vec![g],
            }],
            &maps,
            &default_thresholds(),
        )
        .unwrap();
        assert_eq!((r.map, r.mar), (0.0, 0.0));
    }

    /// One ground truth, an exact prediction and a distant one. Hand-walked
    /// PR curve: ranked [hit, miss] gives precision 1 at every recall level
    /// (AP 1); ranked [miss, hit] gives interpolated precision 1/2 (AP 1/2).
    #[test]
    fn hand_walked_pr_curve() {
        let img = spot_image();
        let g = kp(10, 10);
        let map = saliency_map(&img, &g, &BmsParams::default()).unwrap();
        let far_kps = kps_similarity(&kp(20, 10), &g, &map).unwrap();
        assert!(
            far_kps < 0.5,
            "distant prediction must fail every threshold"
        );

        for (near_score, far_score, expect_ap) in [(0.9, 0.8, 1.0), (0.6, 0.8, 0.5)] {
            let pred = KpPredFrame {
                key: key(0),
                predictions: vec![
                    ScoredKeypoint {
                        x: 10,
                        y: 10,
                        score: near_score,
                    },
                    ScoredKeypoint {
                        x: 20,
                        y: 10,
                        score: far_score,
                    },
                ],
            };
            let gt = FrameKeypoints {
                key: key(0),
                keypoints: vec![g],
            };
            let r = evaluate_keypoints(&[pred], &[gt], &[vec![map.clone()]], &default_thresholds())
                .unwrap();
            assert_eq!(
                r.matches[0].pairs,
                vec![MatchedPair {
                    pred: 0,
                    gt: 0,
                    kps: 1.0
                }]
            );
            for t in &r.per_threshold {
                assert_eq!((t.tp, t.fp, t.r#fn), (1, 1, 0));
                assert_eq!(t.precision, 0.5);
                assert_eq!(t.recall, 1.0);
                assert_eq!(t.ap, expect_ap);
            }
            assert_eq!(r.map, expect_ap);
            assert_eq!(r.mar, 1.0);
        }
    }

    #[test]
    fn missing_map_is_an_error() {
        let r = evaluate_keypoints(
            &[KpPredFrame {
                key: key(0),
                predictions: vec![],
            }],
            &[FrameKeypoints {
                key: key(0),
                keypoints: vec![kp(1, 1)],
            }],
            &[vec![]],
            &default_thresholds(),
        );
        assert!(matches!(r, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn thresholds_must_increase() {
        let r = evaluate_keypoints(&[], &[], &[], &[0.5, 0.5]);
        assert!(r.is_err());
    }
}

//! End-to-end properties on synthetic scenes: render → boxes → evaluation.

use std::time::Instant;

use lightkp::boxgen::{adaptive_boxes, kp_seeded_boxes, AdaptiveParams, SeededParams};
use lightkp::metrics::{evaluate_boxes, FrameBoxes, FrameKey, FrameKeypoints};
use lightkp::synth::{render, SeparatedBlobs};

fn evaluate_adaptive(
    cfg: &SeparatedBlobs,
    seed: u64,
    params: &AdaptiveParams,
) -> lightkp::metrics::BoxEvalReport {
    let scene = cfg.generate(0, seed).unwrap();
    let (images, ann) = render(&scene).unwrap();
    let mut pred = Vec::new();
    let mut gt = Vec::new();
    for (img, frame) in images.iter().zip(&ann.frames) {
        let key = FrameKey {
            scene_id: 0,
            frame_id: frame.frame_id,
        };
        let kps = frame.instance_keypoints();
        let (kept, _) = adaptive_boxes(img, &kps, params).unwrap();
        pred.push(FrameBoxes { key, boxes: kept });
        gt.push(FrameKeypoints {
            key,
            keypoints: kps,
        });
    }
    evaluate_boxes(&pred, &gt).unwrap()
}

#[test]
fn separated_blobs_are_recovered_exactly() {
    let cfg = SeparatedBlobs {
        frames: 10,
        blobs_per_frame: 3,
        ..SeparatedBlobs::default()
    };
    for seed in 0..5 {
        let r = evaluate_adaptive(&cfg, seed, &AdaptiveParams::default());
        assert_eq!(r.tp, 30, "seed {seed}");
        assert_eq!(
            (r.precision, r.recall, r.f_score, r.q),
            (1.0, 1.0, 1.0, 1.0),
            "seed {seed}"
        );
    }
}

#[test]
fn filtered_boxes_never_contain_false_positives() {
    let cfg = SeparatedBlobs {
        width: 256,
        height: 256,
        frames: 50,
        blobs_per_frame: 6,
        separation: 3.0,
        noise_sigma: 6.0,
        ..SeparatedBlobs::default()
    };
    let start = Instant::now();
    let r = evaluate_adaptive(&cfg, 7, &AdaptiveParams::default());
    let elapsed = start.elapsed();
    assert_eq!(r.fp, 0);
    assert_eq!(r.precision, 1.0);
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}");
}

#[test]
fn seeded_boxes_contain_their_keypoints() {
    let scene = SeparatedBlobs::default().generate(1, 3).unwrap();
    let (images, ann) = render(&scene).unwrap();
    for (img, frame) in images.iter().zip(&ann.frames) {
        let kps = frame.instance_keypoints();
        let boxes = kp_seeded_boxes(img, &kps, &SeededParams::default()).unwrap();
        for k in &kps {
            assert!(boxes.iter().any(|b| b.contains(k)));
        }
    }
}

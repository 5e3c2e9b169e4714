use anyhow::Context;
use serde::Serialize;

use crate::config::RunConfig;
use crate::frames::{
    frame_file, frame_refs, generate_boxes, load_frame, par_map, thread_pool, write_json, BoxMode,
    BoxSettings,
};
use crate::GenboxesArgs;
use lightkp::annotations::{load_dataset, BoundingBox};
use lightkp::boxgen::{AdaptiveParams, FrameBoxesFile, ScoredBox, SeededParams};

#[derive(Debug, Serialize)]
struct FrameSummary {
    scene_id: u64,
    frame_id: u64,
    kept: usize,
    rejected: Vec<BoundingBox>,
}

#[derive(Debug, Serialize)]
struct Summary {
    mode: BoxMode,
    half_res: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    adaptive: Option<AdaptiveParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seeded: Option<SeededParams>,
    total_kept: usize,
    total_rejected: usize,
    frames: Vec<FrameSummary>,
}

pub fn run(cfg: &mut RunConfig, args: GenboxesArgs) -> anyhow::Result<()> {
    args.data.apply(cfg);
    let a = &mut cfg.adaptive;
    a.window = args.window.unwrap_or(a.window);
    a.k = args.k.unwrap_or(a.k);
    a.min_area = args.min_area.unwrap_or(a.min_area);
    a.max_boxes = args.max_boxes.unwrap_or(a.max_boxes);
    cfg.seeded.rel_factor = args.rel_factor.unwrap_or(cfg.seeded.rel_factor);
    if let Some(c) = args.connectivity {
        match args.mode {
            BoxMode::Adaptive => cfg.adaptive.connectivity = c,
            BoxMode::Seeded => cfg.seeded.connectivity = c,
        }
    }
    cfg.validate()?;
    let root = cfg.dataset()?;
    let out = cfg.output()?.join("boxes");
    let scenes = load_dataset(root)?;
    let frames = frame_refs(&scenes);
    let settings = BoxSettings {
        mode: args.mode,
        adaptive: cfg.adaptive,
        seeded: cfg.seeded,
        half_res: cfg.half_res,
        resample: cfg.resample,
    };
    let pool = thread_pool(cfg.jobs)?;

    let per_frame = par_map(&pool, &frames, |f| {
        let img = load_frame(root, f)?;
        let kps = f.frame.instance_keypoints();
        let (kept, rejected) = generate_boxes(&img, &kps, &settings).with_context(|| f.label())?;
        for b in &rejected {
            log::debug!(
                "{}: rejected candidate [{}, {}, {}, {}] contains no keypoint",
                f.label(),
                b.x1,
                b.y1,
                b.x2,
                b.y2
            );
        }
        let file = FrameBoxesFile {
            frame_id: f.frame.frame_id,
            boxes: kept.iter().map(|&b| ScoredBox::new(b, 1.0)).collect(),
        };
        write_json(&frame_file(&out, f.key(), ".json"), &file)?;
        Ok(FrameSummary {
            scene_id: f.scene_id,
            frame_id: f.frame.frame_id,
            kept: kept.len(),
            rejected,
        })
    })?;

    let total_kept = per_frame.iter().map(|f| f.kept).sum();
    let total_rejected = per_frame.iter().map(|f| f.rejected.len()).sum();
    if total_rejected > 0 {
        log::info!("{total_rejected} candidate boxes rejected for containing no keypoint");
    }
    write_json(
        &out.join("summary.json"),
        &Summary {
            mode: args.mode,
            half_res: cfg.half_res,
            adaptive: (args.mode == BoxMode::Adaptive).then_some(cfg.adaptive),
            seeded: (args.mode == BoxMode::Seeded).then_some(cfg.seeded),
            total_kept,
            total_rejected,
            frames: per_frame,
        },
    )?;
    println!(
        "wrote boxes for {} frames ({total_kept} kept, {total_rejected} rejected) to {}",
        frames.len(),
        out.display()
    );
    Ok(())
}

use anyhow::Context;
use serde::Serialize;

use crate::config::RunConfig;
use crate::frames::{frame_file, frame_refs, load_frame, par_map, thread_pool, write_json};
use crate::SaliencyArgs;
use lightkp::annotations::load_dataset;
use lightkp::imaging::save_png;
use lightkp::saliency::{combine_max, saliency_map};

#[derive(Debug, Serialize)]
struct InstanceSummary {
    id: u64,
    x: u32,
    y: u32,
    direct: bool,
    thresholds_used: usize,
    degenerate: bool,
}

#[derive(Debug, Serialize)]
struct FrameSummary {
    scene_id: u64,
    frame_id: u64,
    instances: Vec<InstanceSummary>,
}

#[derive(Debug, Serialize)]
struct Summary {
    params: lightkp::saliency::BmsParams,
    maps: usize,
    degenerate: usize,
    frames: Vec<FrameSummary>,
}

pub fn run(cfg: &mut RunConfig, args: SaliencyArgs) -> anyhow::Result<()> {
    args.data.apply(cfg);
    if let Some(step) = args.step {
        cfg.bms.step = step;
    }
    if let Some(c) = args.cap_factor {
        cfg.bms.cap_factor = c;
    }
    if let Some(c) = args.connectivity {
        cfg.bms.connectivity = c;
    }
    cfg.validate()?;
    let root = cfg.dataset()?;
    let out = cfg.output()?.join("saliency");
    let scenes = load_dataset(root)?;
    let frames = frame_refs(&scenes);
    let pool = thread_pool(cfg.jobs)?;

    let per_frame = par_map(&pool, &frames, |f| {
        let img = load_frame(root, f)?;
        let mut maps = Vec::new();
        let mut instances = Vec::new();
        for inst in f.frame.instances() {
            let map = saliency_map(&img, &inst.kp, &cfg.bms)
                .with_context(|| format!("{}, instance {}", f.label(), inst.id))?;
            let path = frame_file(&out, f.key(), &format!("_kp{}.png", inst.id));
            std::fs::create_dir_all(path.parent().expect("frame file has a parent"))
                .with_context(|| format!("creating directory for {}", path.display()))?;
            save_png(&map.to_gray16(), &path)?;
            if args.raw {
                map.write_raw_f32(path.with_extension("f32"))?;
            }
            instances.push(InstanceSummary {
                id: inst.id,
                x: inst.kp.x,
                y: inst.kp.y,
                direct: inst.kp.direct,
                thresholds_used: map.thresholds_used,
                degenerate: map.degenerate,
            });
            maps.push(map);
        }
        if args.combined {
            let combined = combine_max(img.width(), img.height(), &maps);
            let path = frame_file(&out, f.key(), "_combined.png");
            std::fs::create_dir_all(path.parent().expect("frame file has a parent"))
                .with_context(|| format!("creating directory for {}", path.display()))?;
            save_png(&combined, &path)?;
        }
        Ok(FrameSummary {
            scene_id: f.scene_id,
            frame_id: f.frame.frame_id,
            instances,
        })
    })?;

    let maps = per_frame.iter().map(|f| f.instances.len()).sum();
    let degenerate = per_frame
        .iter()
        .flat_map(|f| &f.instances)
        .filter(|i| i.degenerate)
        .count();
    if degenerate > 0 {
        log::warn!("{degenerate} keypoints lie below the first threshold; their maps are empty");
    }
    write_json(
        &out.join("summary.json"),
        &Summary {
            params: cfg.bms,
            maps,
            degenerate,
            frames: per_frame,
        },
    )?;
    println!("wrote {maps} saliency maps to {}", out.display());
    Ok(())
}

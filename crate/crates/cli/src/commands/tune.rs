use std::cmp::Ordering;
use std::path::Path;

use anyhow::{bail, Context};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::synth::{ValidationSplit, VALIDATION_FILE};
use crate::config::RunConfig;
use crate::frames::{
    frame_refs, generate_boxes, load_frame, par_map, read_json, thread_pool, write_json,
    write_text, BoxMode, BoxSettings,
};
use crate::TuneArgs;
use lightkp::annotations::{load_dataset, Keypoint};
use lightkp::boxgen::{AdaptiveParams, SeededParams};
use lightkp::imaging::{Connectivity, GrayImage};
use lightkp::metrics::{evaluate_boxes, FrameBoxes, FrameKey, FrameKeypoints};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Score {
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
    pub q: f64,
}

impl Score {
    /// Higher F-score first, then higher q.
    fn better_than(&self, other: &Score) -> bool {
        self.f_score
            .total_cmp(&other.f_score)
            .then(self.q.total_cmp(&other.q))
            == Ordering::Greater
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Trial {
    pub draw: usize,
    pub adaptive: AdaptiveParams,
    pub adaptive_score: Score,
    pub seeded: SeededParams,
    pub seeded_score: Score,
}

#[derive(Debug, Serialize)]
struct Best<P> {
    draw: usize,
    params: P,
    score: Score,
}

#[derive(Debug, Serialize)]
struct Log<'a> {
    budget: usize,
    seed: u64,
    half_res: bool,
    validation_scenes: &'a [u64],
    trials: &'a [Trial],
}

/// One random draw from the search space.
pub fn sample(rng: &mut impl Rng) -> (AdaptiveParams, SeededParams) {
    let mut conn = || {
        if rng.random_bool(0.5) {
            Connectivity::Eight
        } else {
            Connectivity::Four
        }
    };
    let (c_a, c_s) = (conn(), conn());
    let adaptive = AdaptiveParams {
        window: 2 * rng.random_range(2..=25) + 1,
        k: rng.random_range(0.0..0.5),
        min_area: rng.random_range(1..=8),
        max_boxes: AdaptiveParams::default().max_boxes,
        connectivity: c_a,
    };
    let seeded = SeededParams {
        rel_factor: rng.random_range(0.3..=0.95),
        connectivity: c_s,
    };
    (adaptive, seeded)
}

struct Frame {
    key: FrameKey,
    img: GrayImage,
    kps: Vec<Keypoint>,
}

fn score(
    pool: &rayon::ThreadPool,
    frames: &[Frame],
    settings: &BoxSettings,
) -> anyhow::Result<Score> {
    let pred = par_map(pool, frames, |f| {
        let (kept, _) = generate_boxes(&f.img, &f.kps, settings)?;
        Ok(FrameBoxes {
            key: f.key,
            boxes: kept,
        })
    })?;
    let gt: Vec<_> = frames
        .iter()
        .map(|f| FrameKeypoints {
            key: f.key,
            keypoints: f.kps.clone(),
        })
        .collect();
    let r = evaluate_boxes(&pred, &gt)?;
    Ok(Score {
        precision: r.precision,
        recall: r.recall,
        f_score: r.f_score,
        q: r.q,
    })
}

fn read_split(root: &Path) -> anyhow::Result<ValidationSplit> {
    let path = root.join(VALIDATION_FILE);
    if !path.is_file() {
        bail!("dataset has no validation split marker ({VALIDATION_FILE})");
    }
    read_json(&path)
}

pub fn run(cfg: &mut RunConfig, args: TuneArgs) -> anyhow::Result<()> {
    args.data.apply(cfg);
    cfg.validate()?;
    if args.budget == 0 {
        bail!("budget must be >= 1");
    }
    let root = cfg.dataset()?;
    let split = read_split(root)?;
    let scenes = load_dataset(root)?;
    if let Some(id) = split
        .scenes
        .iter()
        .find(|id| !scenes.iter().any(|s| s.scene_id == **id))
    {
        bail!("validation split names unknown scene {id}");
    }
    let val: Vec<_> = scenes
        .into_iter()
        .filter(|s| split.scenes.contains(&s.scene_id))
        .collect();
    let refs = frame_refs(&val);
    let pool = thread_pool(cfg.jobs)?;
    let frames = par_map(&pool, &refs, |f| {
        Ok(Frame {
            key: f.key(),
            img: load_frame(root, f)?,
            kps: f.frame.instance_keypoints(),
        })
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut trials = Vec::with_capacity(args.budget);
    for draw in 0..args.budget {
        let (adaptive, seeded) = sample(&mut rng);
        let settings = |mode| BoxSettings {
            mode,
            adaptive,
            seeded,
            half_res: cfg.half_res,
            resample: cfg.resample,
        };
        let adaptive_score = score(&pool, &frames, &settings(BoxMode::Adaptive))
            .with_context(|| format!("draw {draw}"))?;
        let seeded_score = score(&pool, &frames, &settings(BoxMode::Seeded))
            .with_context(|| format!("draw {draw}"))?;
        log::info!(
            "draw {draw}: adaptive F {:.4} q {:.4}, seeded F {:.4} q {:.4}",
            adaptive_score.f_score,
            adaptive_score.q,
            seeded_score.f_score,
            seeded_score.q
        );
        trials.push(Trial {
            draw,
            adaptive,
            adaptive_score,
            seeded,
            seeded_score,
        });
    }

    let (best_a, best_s) = best_draws(&trials);
    let (a, s) = (&trials[best_a], &trials[best_s]);
    let out = cfg.output()?;
    write_json(
        &out.join("tune_log.json"),
        &Log {
            budget: args.budget,
            seed: cfg.seed,
            half_res: cfg.half_res,
            validation_scenes: &split.scenes,
            trials: &trials,
        },
    )?;
    write_json(
        &out.join("best_params.json"),
        &serde_json::json!({
            "adaptive": Best { draw: a.draw, params: a.adaptive, score: a.adaptive_score },
            "seeded": Best { draw: s.draw, params: s.seeded, score: s.seeded_score },
        }),
    )?;
    #[derive(Serialize)]
    struct Fragment {
        adaptive: AdaptiveParams,
        seeded: SeededParams,
    }
    let fragment = Fragment {
        adaptive: a.adaptive,
        seeded: s.seeded,
    };
    write_text(&out.join("best_config.toml"), &toml::to_string(&fragment)?)?;
    println!(
        "best adaptive: draw {} F {:.6} q {:.6}; best seeded: draw {} F {:.6} q {:.6}",
        a.draw,
        a.adaptive_score.f_score,
        a.adaptive_score.q,
        s.draw,
        s.seeded_score.f_score,
        s.seeded_score.q
    );
    Ok(())
}

/// Indices of the best adaptive and best seeded trial; the earliest draw
/// wins ties.
pub fn best_draws(trials: &[Trial]) -> (usize, usize) {
    let mut best = (0, 0);
    for (i, t) in trials.iter().enumerate().skip(1) {
        if t.adaptive_score.better_than(&trials[best.0].adaptive_score) {
            best.0 = i;
        }
        if t.seeded_score.better_than(&trials[best.1].seeded_score) {
            best.1 = i;
        }
    }
    best
}

//! Shared plumbing: per-frame work lists, image loading, parallel maps and
//! output files.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use rayon::prelude::*;
use serde::Serialize;

use lightkp::annotations::{BoundingBox, FrameAnnotation, Keypoint, SceneAnnotation};
use lightkp::boxgen::{adaptive_boxes, kp_seeded_boxes, AdaptiveParams, SeededParams};
use lightkp::imaging::{downscale_half, load_gray, GrayImage, Resample};
use lightkp::metrics::FrameKey;
use lightkp::Error;

/// One frame of a scene.
#[derive(Debug, Clone, Copy)]
pub struct FrameRef<'a> {
    pub scene_id: u64,
    pub frame: &'a FrameAnnotation,
}

impl FrameRef<'_> {
    pub fn key(&self) -> FrameKey {
        FrameKey {
            scene_id: self.scene_id,
            frame_id: self.frame.frame_id,
        }
    }

    pub fn label(&self) -> String {
        format!("scene {} / frame {}", self.scene_id, self.frame.frame_id)
    }
}

pub fn frame_refs(scenes: &[SceneAnnotation]) -> Vec<FrameRef<'_>> {
    scenes
        .iter()
        .flat_map(|s| {
            s.frames.iter().map(move |frame| FrameRef {
                scene_id: s.scene_id,
                frame,
            })
        })
        .collect()
}

/// Loads the frame's image and checks its keypoints against the image size.
pub fn load_frame(root: &Path, f: &FrameRef) -> anyhow::Result<GrayImage> {
    let img = load_gray(f.frame.image_path(root)).with_context(|| f.label())?;
    let violations: Vec<_> = f
        .frame
        .check_bounds(img.width(), img.height())
        .into_iter()
        .map(|v| v.in_scene(f.scene_id))
        .collect();
    if !violations.is_empty() {
        return Err(Error::Validation(violations)).with_context(|| f.label());
    }
    Ok(img)
}

pub fn thread_pool(jobs: usize) -> anyhow::Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| anyhow!("building worker pool: {e}"))
}

/// Maps `f` over `items` on `pool`, keeping input order. On failure the
/// error of the earliest failing item is returned, whatever the schedule.
pub fn par_map<T, R, F>(pool: &rayon::ThreadPool, items: &[T], f: F) -> anyhow::Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> anyhow::Result<R> + Sync,
{
    let results: Vec<anyhow::Result<R>> = pool.install(|| items.par_iter().map(&f).collect());
    results.into_iter().collect()
}

pub fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

pub fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .with_context(|| format!("creating {}", parent.display()))?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, &text, &e).into())
}

/// `<root>/scene_<id>/frame_<id><suffix>`.
pub fn frame_file(root: &Path, key: FrameKey, suffix: &str) -> PathBuf {
    root.join(format!("scene_{}", key.scene_id))
        .join(format!("frame_{}{suffix}", key.frame_id))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BoxMode {
    Adaptive,
    Seeded,
}

/// Box-generation settings shared by `genboxes` and `tune`.
#[derive(Debug, Clone, Copy)]
pub struct BoxSettings {
    pub mode: BoxMode,
    pub adaptive: AdaptiveParams,
    pub seeded: SeededParams,
    pub half_res: bool,
    pub resample: Resample,
}

/// Kept and rejected boxes for one frame, in full-resolution coordinates.
/// The seeded route has nothing to reject.
pub fn generate_boxes(
    img: &GrayImage,
    kps: &[Keypoint],
    s: &BoxSettings,
) -> lightkp::Result<(Vec<BoundingBox>, Vec<BoundingBox>)> {
    if !s.half_res {
        return run_mode(img, kps, s);
    }
    let small = downscale_half(img, s.resample);
    let small_kps: Vec<Keypoint> = kps
        .iter()
        .map(|k| Keypoint::new(k.x / 2, k.y / 2, k.direct))
        .collect();
    let (w, h) = (f64::from(img.width()), f64::from(img.height()));
    // Pixel `x` maps to `x / 2`, so a half-open box `[a, b)` at half size
    // covers exactly the full-size pixels `[2a, 2b)`.
    let up = |b: BoundingBox| {
        BoundingBox::new(
            2.0 * b.x1,
            2.0 * b.y1,
            (2.0 * b.x2).min(w),
            (2.0 * b.y2).min(h),
        )
    };
    let (kept, rejected) = run_mode(&small, &small_kps, s)?;
    Ok((
        kept.into_iter().map(up).collect(),
        rejected.into_iter().map(up).collect(),
    ))
}

fn run_mode(
    img: &GrayImage,
    kps: &[Keypoint],
    s: &BoxSettings,
) -> lightkp::Result<(Vec<BoundingBox>, Vec<BoundingBox>)> {
    match s.mode {
        BoxMode::Adaptive => adaptive_boxes(img, kps, &s.adaptive),
        BoxMode::Seeded => Ok((kp_seeded_boxes(img, kps, &s.seeded)?, Vec::new())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use lightkp::imaging::BitDepth;

    #[test]
    fn half_res_boxes_still_contain_keypoints() {
        let img = GrayImage::from_fn(33, 21, BitDepth::Eight, |x, y| {
            let d2 = (f64::from(x) - 17.0).powi(2) + (f64::from(y) - 9.0).powi(2);
            (230.0 * (-d2 / 18.0).exp()).round() as u16
        });
        let kps = [Keypoint::new(17, 9, true)];
        for mode in [BoxMode::Adaptive, BoxMode::Seeded] {
            let s = BoxSettings {
                mode,
                adaptive: AdaptiveParams {
                    window: 9,
                    ..AdaptiveParams::default()
                },
                seeded: SeededParams::default(),
                half_res: true,
                resample: Resample::BoxAverage,
            };
            let (kept, _) = generate_boxes(&img, &kps, &s).unwrap();
            assert_eq!(kept.len(), 1, "{mode:?}");
            assert!(kept[0].contains(&kps[0]));
            assert!(kept[0].x2 <= 33.0 && kept[0].y2 <= 21.0);
        }
    }

    #[test]
    fn first_error_wins() {
        let pool = thread_pool(4).unwrap();
        let items: Vec<u32> = (0..64).collect();
        let err = par_map(&pool, &items, |&i| {
            if i % 10 == 7 {
                Err(anyhow!("item {i}"))
            } else {
                Ok(i)
            }
        })
        .unwrap_err();
        assert_eq!(err.to_string(), "item 7");
    }
}

//! Bounding-box generation from images and keypoints.
//!
//! Two routes are provided. Candidates from locally adaptive binarization
//! are validated against the keypoints (`adaptive_mask` → `connected_boxes`
//! → `filter_by_kps`), or boxes are grown directly from each keypoint by
//! thresholding relative to its intensity (`kp_seeded_boxes`).

use std::collections::HashMap;
use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::annotations::{BoundingBox, Keypoint};
use crate::error::{Error, Result};
use crate::imaging::{local_stats_unchecked, resample_area, Connectivity, GrayImage, Mask};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptiveParams {
    pub window: u32,
    /// Bias of the threshold below the local mean in flat regions.
    pub k: f64,
    pub min_area: usize,
    pub max_boxes: usize,
    pub connectivity: Connectivity,
}

impl Default for AdaptiveParams {
    fn default() -> Self {
        AdaptiveParams {
            window: 25,
            k: 0.06,
            min_area: 4,
            max_boxes: 256,
            connectivity: Connectivity::Four,
        }
    }
}

impl AdaptiveParams {
    pub fn validate(&self) -> Result<()> {
        if self.window < 3 || self.window.is_multiple_of(2) {
            return Err(Error::arg(format!(
                "window must be odd and >= 3, got {}",
                self.window
            )));
        }
        if !self.k.is_finite() {
            return Err(Error::arg("k must be finite"));
        }
        if self.min_area == 0 {
            return Err(Error::arg("min_area must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeededParams {
    /// Blobs are grown over pixels at least `rel_factor` times the keypoint
    /// intensity.
    pub rel_factor: f64,
    pub connectivity: Connectivity,
}

impl Default for SeededParams {
    fn default() -> Self {
        SeededParams {
            rel_factor: 0.7,
            connectivity: Connectivity::Four,
        }
    }
}

impl SeededParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_factor > 0.0 && self.rel_factor <= 1.0) {
            return Err(Error::arg(format!(
                "rel_factor must be in (0, 1], got {}",
                self.rel_factor
            )));
        }
        Ok(())
    }
}

/// Per-pixel threshold `mean · (1 + k · (mean_dev / max_dev − 1))`, where
/// `max_dev` is the largest mean deviation in the image (`mean` alone when
/// the image has no variation).
pub fn adaptive_threshold(mean: f64, mean_dev: f64, max_dev: f64, k: f64) -> f64 {
    if max_dev == 0.0 {
        mean
    } else {
        mean * (1.0 + k * (mean_dev / max_dev - 1.0))
    }
}

/// Foreground where a pixel is strictly brighter than its adaptive
/// threshold. Windows larger than the image are reduced to the largest odd
/// size that fits.
pub fn adaptive_mask(img: &GrayImage, params: &AdaptiveParams) -> Result<Mask> {
    params.validate()?;
    let (w, h) = (img.width(), img.height());
    if w == 0 || h == 0 {
        return Ok(Mask::new(w, h));
    }
    let fit = {
        let m = w.min(h);
        if m % 2 == 0 {
            m - 1
        } else {
            m
        }
    };
    let stats = local_stats_unchecked(img, params.window.min(fit));
    let max_dev = stats.max_mean_dev();
    Ok(Mask::from_fn(w, h, |x, y| {
        let t = adaptive_threshold(
            stats.mean_at(x, y),
            stats.mean_dev_at(x, y),
            max_dev,
            params.k,
        );
        f64::from(img.get(x, y)) > t
    }))
}

/// Connected component summary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Blob {
    pub bbox: BoundingBox,
    pub area: usize,
}

/// Labels connected components with a two-pass union-find scan. Components
/// are returned in order of their first pixel in raster order.
pub fn label_components(mask: &Mask, connectivity: Connectivity) -> Vec<Blob> {
    let (w, h) = (mask.width(), mask.height());
    let mut labels = vec![0usize; w as usize * h as usize];
    let mut parent: Vec<usize> = vec![0];

    fn find(parent: &mut [usize], mut a: usize) -> usize {
        while parent[a] != a {
            parent[a] = parent[parent[a]];
            a = parent[a];
        }
        a
    }

    // Neighbours already visited in raster order.
    let back: &[(i64, i64)] = match connectivity {
        Connectivity::Four => &[(-1, 0), (0, -1)],
        Connectivity::Eight => &[(-1, 0), (-1, -1), (0, -1), (1, -1)],
    };

    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) {
                continue;
            }
            let mut label = 0;
            for &(dx, dy) in back {
                let (nx, ny) = (i64::from(x) + dx, i64::from(y) + dy);
                if nx < 0 || ny < 0 || nx >= i64::from(w) {
                    continue;
                }
                let l = labels[ny as usize * w as usize + nx as usize];
                if l == 0 {
                    continue;
                }
                if label == 0 {
                    label = l;
                } else {
                    let (ra, rb) = (find(&mut parent, label), find(&mut parent, l));
                    if ra != rb {
                        parent[ra.max(rb)] = ra.min(rb);
                    }
                }
            }
            if label == 0 {
                label = parent.len();
                parent.push(label);
            }
            labels[y as usize * w as usize + x as usize] = label;
        }
    }

    let mut order: HashMap<usize, usize> = HashMap::new();
    let mut blobs: Vec<(u32, u32, u32, u32, usize)> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let l = labels[y as usize * w as usize + x as usize];
            if l == 0 {
                continue;
            }
            let root = find(&mut parent, l);
            let slot = *order.entry(root).or_insert_with(|| {
                blobs.push((x, y, x + 1, y + 1, 0));
                blobs.len() - 1
            });
            let b = &mut blobs[slot];
            b.0 = b.0.min(x);
            b.1 = b.1.min(y);
            b.2 = b.2.max(x + 1);
            b.3 = b.3.max(y + 1);
            b.4 += 1;
        }
    }
    blobs
        .into_iter()
        .map(|(x1, y1, x2, y2, area)| Blob {
            bbox: BoundingBox::from_pixels(x1, y1, x2, y2),
            area,
        })
        .collect()
}

/// Tight boxes of components with at least `min_area` pixels, largest
/// first (ties by upper-left corner, row first), at most `max_boxes`.
pub fn connected_boxes(
    mask: &Mask,
    min_area: usize,
    max_boxes: usize,
    connectivity: Connectivity,
) -> Vec<BoundingBox> {
    let mut blobs: Vec<Blob> = label_components(mask, connectivity)
        .into_iter()
        .filter(|b| b.area >= min_area)
        .collect();
    // Stable sort keeps raster order for complete ties.
    blobs.sort_by(|a, b| {
        b.area
            .cmp(&a.area)
            .then(a.bbox.y1.total_cmp(&b.bbox.y1))
            .then(a.bbox.x1.total_cmp(&b.bbox.x1))
    });
    blobs.truncate(max_boxes);
    blobs.into_iter().map(|b| b.bbox).collect()
}

/// Splits candidates into those containing at least one keypoint and the
/// rest, preserving order.
pub fn filter_by_kps(
    candidates: &[BoundingBox],
    kps: &[Keypoint],
) -> (Vec<BoundingBox>, Vec<BoundingBox>) {
    candidates
        .iter()
        .partition(|b| kps.iter().any(|k| b.contains(k)))
}

/// Full adaptive route: binarize, box the components, and split the boxes
/// into those describing a keypoint and the rejected rest.
pub fn adaptive_boxes(
    img: &GrayImage,
    kps: &[Keypoint],
    params: &AdaptiveParams,
) -> Result<(Vec<BoundingBox>, Vec<BoundingBox>)> {
    let mask = adaptive_mask(img, params)?;
    let candidates = connected_boxes(
        &mask,
        params.min_area,
        params.max_boxes,
        params.connectivity,
    );
    Ok(filter_by_kps(&candidates, kps))
}

/// Grows one blob per keypoint over pixels at least `rel_factor` times the
/// keypoint intensity and returns the distinct enclosing boxes in keypoint
/// order. A keypoint on a zero pixel yields its own one-pixel box.
pub fn kp_seeded_boxes(
    img: &GrayImage,
    kps: &[Keypoint],
    params: &SeededParams,
) -> Result<Vec<BoundingBox>> {
    params.validate()?;
    if let Some(k) = kps.iter().find(|k| !img.contains(k)) {
        return Err(Error::arg(format!(
            "keypoint ({}, {}) outside {}x{} image",
            k.x,
            k.y,
            img.width(),
            img.height()
        )));
    }
    let (w, h) = (img.width(), img.height());
    let mut visited = vec![u32::MAX; w as usize * h as usize];
    let mut out: Vec<BoundingBox> = Vec::new();
    for (n, kp) in kps.iter().enumerate() {
        let seed_value = img.at(kp);
        let bbox = if seed_value == 0 {
            BoundingBox::from_pixels(kp.x, kp.y, kp.x + 1, kp.y + 1)
        } else {
            let threshold = params.rel_factor * f64::from(seed_value);
            let stamp = n as u32;
            let (mut x1, mut y1, mut x2, mut y2) = (kp.x, kp.y, kp.x + 1, kp.y + 1);
            let mut queue = VecDeque::from([(kp.x, kp.y)]);
            visited[kp.y as usize * w as usize + kp.x as usize] = stamp;
            while let Some((x, y)) = queue.pop_front() {
                x1 = x1.min(x);
                y1 = y1.min(y);
                x2 = x2.max(x + 1);
                y2 = y2.max(y + 1);
                for (nx, ny) in params.connectivity.neighbors(x, y, w, h) {
                    let i = ny as usize * w as usize + nx as usize;
                    if visited[i] != stamp && f64::from(img.get(nx, ny)) >= threshold {
                        visited[i] = stamp;
                        queue.push_back((nx, ny));
                    }
                }
            }
            BoundingBox::from_pixels(x1, y1, x2, y2)
        };
        if !out.contains(&bbox) {
            out.push(bbox);
        }
    }
    Ok(out)
}

/// Why a box produced no patch.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchSkipped {
    pub index: usize,
    pub reason: String,
}

impl fmt::Display for PatchSkipped {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "box {}: {}", self.index, self.reason)
    }
}

/// Pixel rectangle of `bbox` scaled about its centre, clamped to the image.
pub fn context_window(
    bbox: &BoundingBox,
    scale: f64,
    width: u32,
    height: u32,
) -> (u32, u32, u32, u32) {
    let clamp = |v: f64, hi: u32| v.clamp(0.0, f64::from(hi)) as u32;
    let (cx, cy) = ((bbox.x1 + bbox.x2) / 2.0, (bbox.y1 + bbox.y2) / 2.0);
    let (hw, hh) = (bbox.width() * scale / 2.0, bbox.height() * scale / 2.0);
    (
        clamp((cx - hw).floor(), width),
        clamp((cy - hh).floor(), height),
        clamp((cx + hw).ceil(), width),
        clamp((cy + hh).ceil(), height),
    )
}

/// Crops each box enlarged by `scale` about its centre and resamples it to
/// `out_size × out_size` by area averaging. One entry per box, in order.
pub fn extract_patches(
    img: &GrayImage,
    boxes: &[BoundingBox],
    scale: f64,
    out_size: u32,
) -> Result<Vec<Result<GrayImage, PatchSkipped>>> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::arg(format!("scale must be positive, got {scale}")));
    }
    if out_size == 0 {
        return Err(Error::arg("out_size must be positive"));
    }
    Ok(boxes
        .iter()
        .enumerate()
        .map(|(index, b)| {
            if !b.is_valid() {
                return Err(PatchSkipped {
                    index,
                    reason: format!("invalid box {b:?}"),
                });
            }
            let (x0, y0, x1, y1) = context_window(b, scale, img.width(), img.height());
            if x0 >= x1 || y0 >= y1 {
                return Err(PatchSkipped {
                    index,
                    reason: format!("zero area after clamping to image ({x0}, {y0}, {x1}, {y1})"),
                });
            }
            Ok(resample_area(img, (x0, y0, x1, y1), out_size, out_size))
        })
        .collect())
}

/// A box with a confidence score, as exchanged in per-frame box files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoredBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
    pub score: f64,
}

impl ScoredBox {
    pub fn new(bbox: BoundingBox, score: f64) -> Self {
        ScoredBox {
            x1: bbox.x1,
            y1: bbox.y1,
            x2: bbox.x2,
            y2: bbox.y2,
            score,
        }
    }

    pub fn bbox(&self) -> BoundingBox {
        BoundingBox::new(self.x1, self.y1, self.x2, self.y2)
    }
}

/// Per-frame box file: `{"frame_id": .., "boxes": [..]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameBoxesFile {
    pub frame_id: u64,
    pub boxes: Vec<ScoredBox>,
}

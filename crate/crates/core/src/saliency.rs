//! Keypoint-conditioned Boolean map saliency.
//!
//! The image is thresholded at a uniform sweep of intensities. In each
//! Boolean map only the region flood-filled from the keypoint survives, and
//! the saliency of a pixel is the fraction of sweep levels at which it is in
//! that region. The sweep stops at `cap_factor` times the keypoint
//! intensity so that the region cannot leak into unrelated bright areas.

use std::collections::BinaryHeap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::annotations::Keypoint;
use crate::error::{Error, Result};
use crate::imaging::{BitDepth, Connectivity, GrayImage, Mask};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BmsParams {
    /// Threshold increment on the 8-bit scale; multiplied by 256 for
    /// 16-bit images.
    pub step: u32,
    pub cap_factor: f64,
    pub connectivity: Connectivity,
}

impl Default for BmsParams {
    fn default() -> Self {
        BmsParams {
            step: 8,
            cap_factor: 1.2,
            connectivity: Connectivity::Four,
        }
    }
}

impl BmsParams {
    pub fn validate(&self) -> Result<()> {
        if self.step == 0 || self.step > 255 {
            return Err(Error::arg(format!(
                "step must be in 1..=255, got {}",
                self.step
            )));
        }
        if !(self.cap_factor.is_finite() && self.cap_factor > 1.0) {
            return Err(Error::arg(format!(
                "cap_factor must be > 1, got {}",
                self.cap_factor
            )));
        }
        Ok(())
    }

    pub fn step_for(&self, depth: BitDepth) -> u32 {
        match depth {
            BitDepth::Eight => self.step,
            BitDepth::Sixteen => self.step * 256,
        }
    }

    /// The swept thresholds `step, 2·step, …` for a seed of the given
    /// intensity: every multiple of the step not above
    /// `min(cap_factor · seed, max)`.
    pub fn thresholds(&self, seed_value: u16, depth: BitDepth) -> Vec<u32> {
        let step = self.step_for(depth);
        let cap = (self.cap_factor * f64::from(seed_value)).min(f64::from(depth.max_value()));
        let mut out = Vec::new();
        let mut t = step;
        while f64::from(t) <= cap {
            out.push(t);
            t += step;
        }
        out
    }
}

/// Saliency of every pixel with respect to one seed keypoint.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    pub width: u32,
    pub height: u32,
    pub values: Vec<f64>,
    pub seed: Keypoint,
    pub thresholds_used: usize,
    /// Set when the seed is darker than the first sweep level, in which
    /// case every value is zero.
    pub degenerate: bool,
}

impl SaliencyMap {
    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.values[y as usize * self.width as usize + x as usize]
    }

    pub fn seed_value(&self) -> f64 {
        self.get(self.seed.x, self.seed.y)
    }

    /// Values scaled by 65535 and rounded.
    pub fn to_gray16(&self) -> GrayImage {
        GrayImage::from_fn(self.width, self.height, BitDepth::Sixteen, |x, y| {
            (self.get(x, y) * 65535.0).round() as u16
        })
    }

    /// Little-endian `u32` width and height followed by row-major `f32`
    /// values.
    pub fn to_raw_f32(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 4 * self.values.len());
        out.extend(self.width.to_le_bytes());
        out.extend(self.height.to_le_bytes());
        for &v in &self.values {
            out.extend((v as f32).to_le_bytes());
        }
        out
    }

    pub fn write_raw_f32(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_raw_f32()).map_err(|e| Error::io(path, e))
    }
}

/// Decodes the raw float32 export back into `(width, height, values)`.
pub fn read_raw_f32(bytes: &[u8]) -> Result<(u32, u32, Vec<f32>)> {
    if bytes.len() < 8 {
        return Err(Error::arg("raw saliency buffer shorter than its header"));
    }
    let width = u32::from_le_bytes(bytes[0..4].try_into().unwrap());
    let height = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let body = &bytes[8..];
    if body.len() != 4 * width as usize * height as usize {
        return Err(Error::arg(format!(
            "raw saliency body has {} bytes, expected {}",
            body.len(),
            4 * width as usize * height as usize
        )));
    }
    let values = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((width, height, values))
}

/// Pixel-wise maximum over several maps of the same frame, as a 16-bit
/// image.
pub fn combine_max(width: u32, height: u32, maps: &[SaliencyMap]) -> GrayImage {
    GrayImage::from_fn(width, height, BitDepth::Sixteen, |x, y| {
        let v = maps.iter().map(|m| m.get(x, y)).fold(0.0, f64::max);
        (v * 65535.0).round() as u16
    })
}

/// `mask[p]` set iff `img[p] >= threshold`.
pub fn boolean_map(img: &GrayImage, threshold: u32) -> Mask {
    Mask::from_fn(img.width(), img.height(), |x, y| {
        u32::from(img.get(x, y)) >= threshold
    })
}

/// The connected component of `mask` containing `seed`.
pub fn flood_region(mask: &Mask, seed: &Keypoint, connectivity: Connectivity) -> Mask {
    mask.component_at(seed.x, seed.y, connectivity)
}

pub fn saliency_map(img: &GrayImage, seed: &Keypoint, params: &BmsParams) -> Result<SaliencyMap> {
    params.validate()?;
    if !img.contains(seed) {
        return Err(Error::arg(format!(
            "seed ({}, {}) outside {}x{} image",
            seed.x,
            seed.y,
            img.width(),
            img.height()
        )));
    }
    let seed_value = img.at(seed);
    let step = params.step_for(img.bit_depth());
    let levels = params.thresholds(seed_value, img.bit_depth()).len();
    let degenerate = u32::from(seed_value) < step;
    let n_px = img.width() as usize * img.height() as usize;

    let values = if degenerate || levels == 0 {
        vec![0.0; n_px]
    } else {
        // A pixel is in the flooded region at level t iff some path from the
        // seed stays at or above t, i.e. iff its widest-path bottleneck
        // intensity reaches t.
        let bottleneck = widest_path(img, seed, params.connectivity);
        bottleneck
            .into_iter()
            .map(|b| {
                let hits = (u32::from(b) / step).min(levels as u32);
                f64::from(hits) / levels as f64
            })
            .collect()
    };

    Ok(SaliencyMap {
        width: img.width(),
        height: img.height(),
        values,
        seed: *seed,
        thresholds_used: levels,
        degenerate,
    })
}

/// Max-min path value from the seed to every pixel.
fn widest_path(img: &GrayImage, seed: &Keypoint, connectivity: Connectivity) -> Vec<u16> {
    let (w, h) = (img.width(), img.height());
    let mut best = vec![0u16; w as usize * h as usize];
    let mut done = vec![false; best.len()];
    let idx = |x: u32, y: u32| y as usize * w as usize + x as usize;

    let mut heap = BinaryHeap::new();
    best[idx(seed.x, seed.y)] = img.at(seed);
    heap.push((img.at(seed), std::cmp::Reverse((seed.y, seed.x))));
    while let Some((value, std::cmp::Reverse((y, x)))) = heap.pop() {
        let i = idx(x, y);
        if done[i] {
            continue;
        }
        done[i] = true;
        for (nx, ny) in connectivity.neighbors(x, y, w, h) {
            let j = idx(nx, ny);
            let through = value.min(img.get(nx, ny));
            if !done[j] && through > best[j] {
                best[j] = through;
                heap.push((through, std::cmp::Reverse((ny, nx))));
            }
        }
    }
    best
}

/// Saliency stored at `p`.
pub fn saliency_at(map: &SaliencyMap, p: &Keypoint) -> Result<f64> {
    if !p.in_bounds(map.width, map.height) {
        return Err(Error::arg(format!(
            "point ({}, {}) outside {}x{} saliency map",
            p.x, p.y, map.width, map.height
        )));
    }
    Ok(map.get(p.x, p.y))
}

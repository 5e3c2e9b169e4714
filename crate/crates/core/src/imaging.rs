//! Grayscale images, binary masks, and windowed local statistics.

use std::collections::VecDeque;
use std::path::Path;

use image::{DynamicImage, ImageBuffer, ImageReader, Luma};
use serde::{Deserialize, Serialize};

use crate::annotations::Keypoint;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum BitDepth {
    Eight,
    Sixteen,
}

impl TryFrom<u8> for BitDepth {
    type Error = String;

    fn try_from(bits: u8) -> Result<Self, String> {
        match bits {
            8 => Ok(BitDepth::Eight),
            16 => Ok(BitDepth::Sixteen),
            other => Err(format!("bit depth must be 8 or 16, got {other}")),
        }
    }
}

impl From<BitDepth> for u8 {
    fn from(d: BitDepth) -> u8 {
        d.bits() as u8
    }
}

impl BitDepth {
    pub fn max_value(self) -> u16 {
        match self {
            BitDepth::Eight => u8::MAX as u16,
            BitDepth::Sixteen => u16::MAX,
        }
    }

    pub fn bits(self) -> u32 {
        match self {
            BitDepth::Eight => 8,
            BitDepth::Sixteen => 16,
        }
    }
}

/// Single-channel image stored as 16-bit samples regardless of source depth.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: u32,
    height: u32,
    pixels: Vec<u16>,
    bit_depth: BitDepth,
}

impl GrayImage {
    pub fn new(width: u32, height: u32, bit_depth: BitDepth) -> Self {
        GrayImage {
            width,
            height,
            pixels: vec![0; width as usize * height as usize],
            bit_depth,
        }
    }

    /// Row-major pixels; fails if the length or any value does not fit.
    pub fn from_vec(
        width: u32,
        height: u32,
        bit_depth: BitDepth,
        pixels: Vec<u16>,
    ) -> Result<Self> {
        if pixels.len() != width as usize * height as usize {
            return Err(Error::arg(format!(
                "{} pixels given for a {width}x{height} image",
                pixels.len()
            )));
        }
        if let Some(v) = pixels.iter().find(|&&v| v > bit_depth.max_value()) {
            return Err(Error::arg(format!(
                "pixel value {v} exceeds {}-bit range",
                bit_depth.bits()
            )));
        }
        Ok(GrayImage {
            width,
            height,
            pixels,
            bit_depth,
        })
    }

    pub fn from_fn(
        width: u32,
        height: u32,
        bit_depth: BitDepth,
        mut f: impl FnMut(u32, u32) -> u16,
    ) -> Self {
        let max = bit_depth.max_value();
        let mut pixels = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y).min(max));
            }
        }
        GrayImage {
            width,
            height,
            pixels,
            bit_depth,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn bit_depth(&self) -> BitDepth {
        self.bit_depth
    }

    pub fn max_value(&self) -> u16 {
        self.bit_depth.max_value()
    }

    pub fn pixels(&self) -> &[u16] {
        &self.pixels
    }

    pub fn get(&self, x: u32, y: u32) -> u16 {
        self.pixels[self.index(x, y)]
    }

    pub fn at(&self, kp: &Keypoint) -> u16 {
        self.get(kp.x, kp.y)
    }

    pub fn set(&mut self, x: u32, y: u32, value: u16) {
        let i = self.index(x, y);
        self.pixels[i] = value.min(self.max_value());
    }

    pub fn contains(&self, kp: &Keypoint) -> bool {
        kp.in_bounds(self.width, self.height)
    }

    pub fn row(&self, y: u32) -> &[u16] {
        let start = y as usize * self.width as usize;
        &self.pixels[start..start + self.width as usize]
    }

    fn index(&self, x: u32, y: u32) -> usize {
        assert!(
            x < self.width && y < self.height,
            "pixel ({x}, {y}) out of bounds"
        );
        y as usize * self.width as usize + x as usize
    }
}

/// Reads an 8- or 16-bit single-channel PNG or binary PGM.
pub fn load_gray(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let reader = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    let decoded = reader.decode().map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Format {
            path: path.to_path_buf(),
            reason: other.to_string(),
        },
    })?;
    let (width, height) = (decoded.width(), decoded.height());
    match decoded {
        DynamicImage::ImageLuma8(buf) => Ok(GrayImage {
            width,
            height,
            pixels: buf.into_raw().into_iter().map(u16::from).collect(),
            bit_depth: BitDepth::Eight,
        }),
        DynamicImage::ImageLuma16(buf) => Ok(GrayImage {
            width,
            height,
            pixels: buf.into_raw(),
            bit_depth: BitDepth::Sixteen,
        }),
        other => Err(Error::Format {
            path: path.to_path_buf(),
            reason: format!(
                "expected single-channel 8/16-bit image, found {:?}",
                other.color()
            ),
        }),
    }
}

fn encode_error(path: &Path, e: image::ImageError) -> Error {
    match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Format {
            path: path.to_path_buf(),
            reason: other.to_string(),
        },
    }
}

fn to_dynamic(img: &GrayImage) -> DynamicImage {
    match img.bit_depth {
        BitDepth::Eight => {
            let raw = img.pixels.iter().map(|&v| v as u8).collect();
            DynamicImage::ImageLuma8(
                ImageBuffer::<Luma<u8>, Vec<u8>>::from_raw(img.width, img.height, raw)
                    .expect("buffer length matches dimensions"),
            )
        }
        BitDepth::Sixteen => DynamicImage::ImageLuma16(
            ImageBuffer::<Luma<u16>, Vec<u16>>::from_raw(img.width, img.height, img.pixels.clone())
                .expect("buffer length matches dimensions"),
        ),
    }
}

/// Writes a grayscale PNG at the image's own bit depth.
pub fn save_png(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    to_dynamic(img)
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| encode_error(path, e))
}

/// Writes a binary (P5) PGM at the image's own bit depth.
pub fn save_pgm(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    to_dynamic(img)
        .save_with_format(path, image::ImageFormat::Pnm)
        .map_err(|e| encode_error(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Connectivity {
    #[default]
    Four,
    Eight,
}

impl Connectivity {
    fn offsets(self) -> &'static [(i32, i32)] {
        const FOUR: [(i32, i32); 4] = [(0, -1), (-1, 0), (1, 0), (0, 1)];
        const EIGHT: [(i32, i32); 8] = [
            (-1, -1),
            (0, -1),
            (1, -1),
            (-1, 0),
            (1, 0),
            (-1, 1),
            (0, 1),
            (1, 1),
        ];
        match self {
            Connectivity::Four => &FOUR,
            Connectivity::Eight => &EIGHT,
        }
    }

    /// In-bounds neighbours of `(x, y)`.
    pub fn neighbors(
        self,
        x: u32,
        y: u32,
        width: u32,
        height: u32,
    ) -> impl Iterator<Item = (u32, u32)> {
        self.offsets().iter().filter_map(move |&(dx, dy)| {
            let nx = x as i64 + dx as i64;
            let ny = y as i64 + dy as i64;
            (nx >= 0 && ny >= 0 && nx < width as i64 && ny < height as i64)
                .then_some((nx as u32, ny as u32))
        })
    }
}

impl TryFrom<u8> for Connectivity {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            4 => Ok(Connectivity::Four),
            8 => Ok(Connectivity::Eight),
            other => Err(format!("connectivity must be 4 or 8, got {other}")),
        }
    }
}

impl From<Connectivity> for u8 {
    fn from(c: Connectivity) -> u8 {
        match c {
            Connectivity::Four => 4,
            Connectivity::Eight => 8,
        }
    }
}

/// Binary mask with the dimensions of the image it was derived from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(width: u32, height: u32) -> Self {
        Mask {
            width,
            height,
            bits: vec![false; width as usize * height as usize],
        }
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Mask {
            width,
            height,
            bits,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        let w = self.width as usize;
        self.bits[y as usize * w + x as usize] = value;
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// The connected component of set pixels containing `(x, y)`; empty if
    /// the seed itself is unset.
    pub fn component_at(&self, x: u32, y: u32, connectivity: Connectivity) -> Mask {
        let mut out = Mask::new(self.width, self.height);
        if !self.get(x, y) {
            return out;
        }
        let mut queue = VecDeque::from([(x, y)]);
        out.set(x, y, true);
        while let Some((cx, cy)) = queue.pop_front() {
            for (nx, ny) in connectivity.neighbors(cx, cy, self.width, self.height) {
                if self.get(nx, ny) && !out.get(nx, ny) {
                    out.set(nx, ny, true);
                    queue.push_back((nx, ny));
                }
            }
        }
        out
    }

    /// Tight half-open pixel bounds `(x1, y1, x2, y2)` of the set pixels.
    pub fn bounds(&self) -> Option<(u32, u32, u32, u32)> {
        let mut bounds: Option<(u32, u32, u32, u32)> = None;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    bounds = Some(match bounds {
                        None => (x, y, x + 1, y + 1),
                        Some((x1, y1, x2, y2)) => {
                            (x1.min(x), y1.min(y), x2.max(x + 1), y2.max(y + 1))
                        }
                    });
                }
            }
        }
        bounds
    }
}

/// Summed-area table with a zero first row and column; exact for any
/// 16-bit image up to 2^16 × 2^16.
#[derive(Debug, Clone)]
pub struct IntegralImage {
    width: u32,
    height: u32,
    sums: Vec<u64>,
}

impl IntegralImage {
    pub fn new(img: &GrayImage) -> Self {
        let (w, h) = (img.width as usize, img.height as usize);
        let stride = w + 1;
        let mut sums = vec![0u64; stride * (h + 1)];
        for y in 0..h {
            let mut row_sum = 0u64;
            for x in 0..w {
                row_sum += u64::from(img.pixels[y * w + x]);
                sums[(y + 1) * stride + x + 1] = sums[y * stride + x + 1] + row_sum;
            }
        }
        IntegralImage {
            width: img.width,
            height: img.height,
            sums,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    /// Sum over the half-open rectangle `[x0, x1) × [y0, y1)`.
    pub fn sum(&self, x0: u32, y0: u32, x1: u32, y1: u32) -> u64 {
        assert!(x0 <= x1 && y0 <= y1 && x1 <= self.width && y1 <= self.height);
        let stride = self.width as usize + 1;
        let at = |x: u32, y: u32| self.sums[y as usize * stride + x as usize];
        at(x1, y1) + at(x0, y0) - at(x1, y0) - at(x0, y1)
    }
}

/// Window of side `window` centred at `(x, y)`, shrunk at the image borders.
pub fn clamped_window(
    x: u32,
    y: u32,
    window: u32,
    width: u32,
    height: u32,
) -> (u32, u32, u32, u32) {
    let r = window / 2;
    (
        x.saturating_sub(r),
        y.saturating_sub(r),
        (x + r + 1).min(width),
        (y + r + 1).min(height),
    )
}

/// Per-pixel mean and mean absolute deviation over a border-clamped window.
#[derive(Debug, Clone)]
pub struct LocalStats {
    pub window: u32,
    pub width: u32,
    pub height: u32,
    pub mean: Vec<f64>,
    /// Average of `|I(q) - mean(p)|` over the window of `p`.
    pub mean_dev: Vec<f64>,
}

impl LocalStats {
    pub fn mean_at(&self, x: u32, y: u32) -> f64 {
        self.mean[y as usize * self.width as usize + x as usize]
    }

    pub fn mean_dev_at(&self, x: u32, y: u32) -> f64 {
        self.mean_dev[y as usize * self.width as usize + x as usize]
    }

    pub fn max_mean_dev(&self) -> f64 {
        self.mean_dev.iter().copied().fold(0.0, f64::max)
    }
}

pub fn local_stats(img: &GrayImage, window: u32) -> Result<LocalStats> {
    if window < 3 || window.is_multiple_of(2) {
        return Err(Error::arg(format!(
            "window must be odd and >= 3, got {window}"
        )));
    }
    if window > img.width.min(img.height) {
        return Err(Error::arg(format!(
            "window {window} exceeds {}x{} image",
            img.width, img.height
        )));
    }
    Ok(local_stats_unchecked(img, window))
}

/// Computes the statistics for any odd window, including 1 and windows
/// larger than the image.
///
/// Each row slides an intensity histogram across the image. With
/// `m = floor(S / n)`, pixels `v <= m` satisfy `n·v <= S` and the rest
/// `n·v > S`, so `Σ|n·v − S|` follows exactly from the count and sum of
/// the pixels at or below `m`, which are kept up to date as `m` moves.
pub(crate) fn local_stats_unchecked(img: &GrayImage, window: u32) -> LocalStats {
    let (w, h) = (img.width, img.height);
    let n_px = w as usize * h as usize;
    let mut mean = Vec::with_capacity(n_px);
    let mut mean_dev = Vec::with_capacity(n_px);
    let mut hist = SlidingHistogram::new(img.max_value());
    for y in 0..h {
        let (_, y0, _, y1) = clamped_window(0, y, window, w, h);
        let column = |x: u32| (y0..y1).map(move |yy| img.get(x, yy));
        let (mut xa, mut xb) = (0, 0);
        for x in 0..w {
            let (x0, _, x1, _) = clamped_window(x, y, window, w, h);
            for c in xb..x1 {
                column(c).for_each(|v| hist.add(v));
            }
            for c in xa..x0 {
                column(c).for_each(|v| hist.remove(v));
            }
            (xa, xb) = (x0, x1);
            hist.settle();
            let n = hist.n;
            mean.push(hist.sum as f64 / n as f64);
            mean_dev.push(hist.scaled_dev() as f64 / (n * n) as f64);
        }
        for c in xa..xb {
            column(c).for_each(|v| hist.remove(v));
        }
    }
    LocalStats {
        window,
        width: w,
        height: h,
        mean,
        mean_dev,
    }
}

struct SlidingHistogram {
    counts: Vec<u32>,
    n: i64,
    sum: i64,
    /// Split level; `cnt_le` and `sum_le` cover the pixels `<= m`.
    m: usize,
    cnt_le: i64,
    sum_le: i64,
}

impl SlidingHistogram {
    fn new(max_value: u16) -> Self {
        SlidingHistogram {
            counts: vec![0; usize::from(max_value) + 1],
            n: 0,
            sum: 0,
            m: 0,
            cnt_le: 0,
            sum_le: 0,
        }
    }

    fn add(&mut self, v: u16) {
        self.update(v, 1);
    }

    fn remove(&mut self, v: u16) {
        self.update(v, -1);
    }

    fn update(&mut self, v: u16, sign: i64) {
        let i = usize::from(v);
        self.counts[i] = (i64::from(self.counts[i]) + sign) as u32;
        self.n += sign;
        self.sum += sign * i64::from(v);
        if i <= self.m {
            self.cnt_le += sign;
            self.sum_le += sign * i64::from(v);
        }
    }

    /// Moves the split level to `floor(sum / n)`.
    fn settle(&mut self) {
        let target = (self.sum / self.n) as usize;
        while self.m < target {
            self.m += 1;
            let c = i64::from(self.counts[self.m]);
            self.cnt_le += c;
            self.sum_le += c * self.m as i64;
        }
        while self.m > target {
            let c = i64::from(self.counts[self.m]);
            self.cnt_le -= c;
            self.sum_le -= c * self.m as i64;
            self.m -= 1;
        }
    }

    /// `Σ|n·v − S|` over the window; requires `settle` first.
    fn scaled_dev(&self) -> i64 {
        let (n, s) = (self.n, self.sum);
        let low = self.cnt_le * s - n * self.sum_le;
        let high = n * (s - self.sum_le) - (n - self.cnt_le) * s;
        low + high
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Resample {
    Nearest,
    #[default]
    BoxAverage,
}

/// Halves both dimensions (rounding up). Box-average takes the rounded mean
/// of each available 2×2 block; nearest keeps the block's top-left pixel.
pub fn downscale_half(img: &GrayImage, resample: Resample) -> GrayImage {
    let (w, h) = (img.width.div_ceil(2), img.height.div_ceil(2));
    GrayImage::from_fn(w, h, img.bit_depth, |x, y| match resample {
        Resample::Nearest => img.get(2 * x, 2 * y),
        Resample::BoxAverage => {
            let (x0, y0) = (2 * x, 2 * y);
            let (x1, y1) = ((x0 + 2).min(img.width), (y0 + 2).min(img.height));
            let mut sum = 0u32;
            let mut n = 0u32;
            for yy in y0..y1 {
                for xx in x0..x1 {
                    sum += u32::from(img.get(xx, yy));
                    n += 1;
                }
            }
            ((sum + n / 2) / n) as u16
        }
    })
}

/// Resamples the pixel rectangle `[x0, x1) × [y0, y1)` to `out_w × out_h`
/// by area-weighted averaging. A rectangle already of the output size is
/// copied unchanged.
pub fn resample_area(
    img: &GrayImage,
    (x0, y0, x1, y1): (u32, u32, u32, u32),
    out_w: u32,
    out_h: u32,
) -> GrayImage {
    assert!(x0 < x1 && y0 < y1 && x1 <= img.width && y1 <= img.height);
    assert!(out_w > 0 && out_h > 0);
    let xs = area_weights(x0, x1, out_w);
    let ys = area_weights(y0, y1, out_h);
    GrayImage::from_fn(out_w, out_h, img.bit_depth, |ox, oy| {
        let mut acc = 0.0;
        let mut total = 0.0;
        for &(sy, wy) in &ys[oy as usize] {
            for &(sx, wx) in &xs[ox as usize] {
                let wgt = wx * wy;
                acc += wgt * f64::from(img.get(sx, sy));
                total += wgt;
            }
        }
        (acc / total).round() as u16
    })
}

/// For each output cell, the source pixels it overlaps and the overlap
/// lengths (in source-pixel units).
fn area_weights(start: u32, end: u32, out: u32) -> Vec<Vec<(u32, f64)>> {
    let src_len = f64::from(end - start);
    let scale = src_len / f64::from(out);
    (0..out)
        .map(|o| {
            let lo = f64::from(o) * scale;
            let hi = f64::from(o + 1) * scale;
            let first = lo.floor() as u32;
            let last = (hi.ceil() as u32).min(end - start);
            (first..last)
                .filter_map(|s| {
                    let overlap = hi.min(f64::from(s + 1)) - lo.max(f64::from(s));
                    (overlap > 0.0).then_some((start + s, overlap))
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(rng: &mut ChaCha8Rng, w: u32, h: u32, depth: BitDepth) -> GrayImage {
        let max = depth.max_value();
        GrayImage::from_fn(w, h, depth, |_, _| rng.random_range(0..=max))
    }

    fn naive_sum(img: &GrayImage, x0: u32, y0: u32, x1: u32, y1: u32) -> u64 {
        let mut s = 0;
        for y in y0..y1 {
            for x in x0..x1 {
                s += u64::from(img.get(x, y));
            }
        }
        s
    }

    /// Straight double loop over the clamped window, in floating point.
    fn naive_stats(img: &GrayImage, window: u32, x: u32, y: u32) -> (f64, f64) {
        let (x0, y0, x1, y1) = clamped_window(x, y, window, img.width(), img.height());
        let mut vals = Vec::new();
        for yy in y0..y1 {
            for xx in x0..x1 {
                vals.push(f64::from(img.get(xx, yy)));
            }
        }
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let dev = vals.iter().map(|v| (v - mean).abs()).sum::<f64>() / n;
        (mean, dev)
    }

    #[test]
    fn integral_of_ones() {
        let img = GrayImage::from_fn(4, 4, BitDepth::Eight, |_, _| 1);
        assert_eq!(IntegralImage::new(&img).sum(0, 0, 4, 4), 16);
    }

    #[test]
    fn integral_of_single_pixel() {
        let img = GrayImage::from_vec(1, 1, BitDepth::Sixteen, vec![4242]).unwrap();
        assert_eq!(IntegralImage::new(&img).sum(0, 0, 1, 1), 4242);
    }

    #[test]
    fn integral_matches_naive_windows() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let w = rng.random_range(1..=12);
            let h = rng.random_range(1..=12);
            let img = random_image(&mut rng, w, h, BitDepth::Sixteen);
            let table = IntegralImage::new(&img);
            let x0 = rng.random_range(0..=w);
            let x1 = rng.random_range(x0..=w);
            let y0 = rng.random_range(0..=h);
            let y1 = rng.random_range(y0..=h);
            assert_eq!(table.sum(x0, y0, x1, y1), naive_sum(&img, x0, y0, x1, y1));
        }
    }

    #[test]
    fn integral_does_not_overflow_at_full_scale() {
        let img = GrayImage::from_fn(1024, 1024, BitDepth::Sixteen, |_, _| u16::MAX);
        let expected = 1024u64 * 1024 * u64::from(u16::MAX);
        assert_eq!(IntegralImage::new(&img).sum(0, 0, 1024, 1024), expected);
    }

    #[test]
    fn constant_image_has_zero_deviation() {
        let img = GrayImage::from_fn(7, 5, BitDepth::Eight, |_, _| 77);
        let stats = local_stats(&img, 3).unwrap();
        assert!(stats.mean.iter().all(|&m| m == 77.0));
        assert!(stats.mean_dev.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn center_and_corner_match_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let img = random_image(&mut rng, 5, 5, BitDepth::Eight);
        let stats = local_stats(&img, 3).unwrap();
        for (x, y) in [(2, 2), (0, 0), (4, 4), (0, 3)] {
            let (m, d) = naive_stats(&img, 3, x, y);
            assert!((stats.mean_at(x, y) - m).abs() < 1e-12);
            assert!((stats.mean_dev_at(x, y) - d).abs() < 1e-9);
        }

        let small = random_image(&mut rng, 3, 3, BitDepth::Eight);
        let (x0, y0, x1, y1) = clamped_window(0, 0, 3, 3, 3);
        assert_eq!((x1 - x0) * (y1 - y0), 4);
        let stats = local_stats(&small, 3).unwrap();
        let (m, d) = naive_stats(&small, 3, 0, 0);
        assert!((stats.mean_at(0, 0) - m).abs() < 1e-12);
        assert!((stats.mean_dev_at(0, 0) - d).abs() < 1e-9);
    }

    #[test]
    fn every_pixel_matches_exact_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for depth in [BitDepth::Eight, BitDepth::Sixteen] {
            for _ in 0..60 {
                let w = rng.random_range(1..=14);
                let h = rng.random_range(1..=14);
                let window = 2 * rng.random_range(0..=8) + 1;
                let img = random_image(&mut rng, w, h, depth);
                let stats = local_stats_unchecked(&img, window);
                for y in 0..h {
                    for x in 0..w {
                        let (x0, y0, x1, y1) = clamped_window(x, y, window, w, h);
                        let n = i64::from((x1 - x0) * (y1 - y0));
                        let s = naive_sum(&img, x0, y0, x1, y1) as i64;
                        let mut dev = 0i64;
                        for yy in y0..y1 {
                            for xx in x0..x1 {
                                dev += (n * i64::from(img.get(xx, yy)) - s).abs();
                            }
                        }
                        assert_eq!(stats.mean_at(x, y), s as f64 / n as f64);
                        assert_eq!(stats.mean_dev_at(x, y), dev as f64 / (n * n) as f64);
                    }
                }
            }
        }
    }

    #[test]
    fn bad_windows_are_rejected() {
        let img = GrayImage::new(5, 5, BitDepth::Eight);
        for w in [0, 1, 2, 4, 7] {
            assert!(
                matches!(local_stats(&img, w), Err(Error::InvalidArgument(_))),
                "{w}"
            );
        }
    }

    #[test]
    fn zero_deviation_iff_constant_window() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let img = GrayImage::from_fn(8, 8, BitDepth::Eight, |_, _| rng.random_range(0..3));
            let stats = local_stats(&img, 3).unwrap();
            for y in 0..8 {
                for x in 0..8 {
                    let (x0, y0, x1, y1) = clamped_window(x, y, 3, 8, 8);
                    let first = img.get(x0, y0);
                    let constant = (y0..y1).all(|yy| (x0..x1).all(|xx| img.get(xx, yy) == first));
                    assert_eq!(stats.mean_dev_at(x, y) == 0.0, constant);
                }
            }
        }
    }

    #[test]
    fn interior_stats_are_translation_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let img = random_image(&mut rng, 12, 12, BitDepth::Eight);
        let shifted = GrayImage::from_fn(12, 12, BitDepth::Eight, |x, y| {
            if x >= 2 && y >= 1 {
                img.get(x - 2, y - 1)
            } else {
                0
            }
        });
        let a = local_stats(&img, 3).unwrap();
        let b = local_stats(&shifted, 3).unwrap();
        for y in 1..9 {
            for x in 1..9 {
                assert_eq!(a.mean_at(x, y), b.mean_at(x + 2, y + 1));
                assert_eq!(a.mean_dev_at(x, y), b.mean_dev_at(x + 2, y + 1));
            }
        }
    }

    #[test]
    fn pgm_fixture_loads_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.pgm");
        let mut bytes = b"P5\n2 2\n255\n".to_vec();
        bytes.extend([0u8, 1, 2, 3]);
        std::fs::write(&path, bytes).unwrap();
        let img = load_gray(&path).unwrap();
        assert_eq!((img.width(), img.height()), (2, 2));
        assert_eq!(img.pixels(), &[0, 1, 2, 3]);
        assert_eq!(img.bit_depth(), BitDepth::Eight);
    }

    #[test]
    fn png_round_trips_both_depths() {
        let dir = tempfile::tempdir().unwrap();
        let white = GrayImage::from_fn(3, 2, BitDepth::Eight, |_, _| 255);
        save_png(&white, dir.path().join("w.png")).unwrap();
        let back = load_gray(dir.path().join("w.png")).unwrap();
        assert_eq!(back, white);

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let deep = random_image(&mut rng, 5, 4, BitDepth::Sixteen);
        save_png(&deep, dir.path().join("d.png")).unwrap();
        assert_eq!(load_gray(dir.path().join("d.png")).unwrap(), deep);
        save_pgm(&deep, dir.path().join("d.pgm")).unwrap();
        assert_eq!(load_gray(dir.path().join("d.pgm")).unwrap(), deep);
    }

    #[test]
    fn rgb_png_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rgb.png");
        image::RgbImage::new(2, 2).save(&path).unwrap();
        assert!(matches!(load_gray(&path), Err(Error::Format { .. })));
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            load_gray("/nonexistent/x.png"),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn identity_resample_copies() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let img = random_image(&mut rng, 10, 8, BitDepth::Eight);
        let out = resample_area(&img, (2, 1, 8, 7), 6, 6);
        for y in 0..6 {
            for x in 0..6 {
                assert_eq!(out.get(x, y), img.get(x + 2, y + 1));
            }
        }
    }

    #[test]
    fn halving_averages_blocks() {
        let img = GrayImage::from_vec(3, 2, BitDepth::Eight, vec![0, 2, 9, 4, 6, 9]).unwrap();
        let half = downscale_half(&img, Resample::BoxAverage);
        assert_eq!((half.width(), half.height()), (2, 1));
        assert_eq!(half.pixels(), &[3, 9]);
        let nn = downscale_half(&img, Resample::Nearest);
        assert_eq!(nn.pixels(), &[0, 9]);
    }

    #[test]
    fn component_at_unset_seed_is_empty() {
        let m = Mask::from_fn(3, 3, |x, _| x == 2);
        assert!(m.component_at(0, 0, Connectivity::Four).is_empty());
        assert_eq!(m.component_at(2, 1, Connectivity::Four).count(), 3);
    }
}

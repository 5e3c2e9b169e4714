//! Synthetic night scenes: Gaussian light blobs at known keypoints.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::annotations::{
    Exposure, FrameAnnotation, InstanceAnnotation, Keypoint, SceneAnnotation, VehicleAnnotation,
};
use crate::error::{Error, Result};
use crate::imaging::{BitDepth, GrayImage};

/// Beyond this many sigmas a blob contributes less than `e^-32` of its
/// amplitude and is not rendered.
const RENDER_RADIUS_SIGMAS: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlobSpec {
    pub center: (f64, f64),
    pub amplitude: f64,
    pub sigma: f64,
    pub direct: bool,
}

impl BlobSpec {
    pub fn new(x: f64, y: f64, amplitude: f64, sigma: f64, direct: bool) -> Self {
        BlobSpec {
            center: (x, y),
            amplitude,
            sigma,
            direct,
        }
    }

    /// Annotated keypoint: the pixel nearest the center.
    pub fn keypoint(&self) -> Keypoint {
        Keypoint::new(
            self.center.0.round() as u32,
            self.center.1.round() as u32,
            self.direct,
        )
    }

    fn check(&self, width: u32, height: u32) -> Result<()> {
        if !(self.amplitude > 0.0 && self.amplitude.is_finite()) {
            return Err(Error::arg(format!(
                "blob amplitude {} must be > 0",
                self.amplitude
            )));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::arg(format!("blob sigma {} must be > 0", self.sigma)));
        }
        let (x, y) = self.center;
        let inside = |c: f64, n: u32| c.is_finite() && c >= 0.0 && c.round() < f64::from(n);
        if !inside(x, width) || !inside(y, height) {
            return Err(Error::arg(format!(
                "blob center ({x}, {y}) outside {width}x{height} image"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthScene {
    pub scene_id: u64,
    pub width: u32,
    pub height: u32,
    pub bit_depth: BitDepth,
    /// Blobs of each frame; index `i` in every frame is the same light.
    pub frames: Vec<Vec<BlobSpec>>,
    pub noise_sigma: f64,
    pub rng_seed: u64,
}

impl SynthScene {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::arg("synthetic image must be non-empty"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::arg(format!(
                "noise sigma {} must be >= 0",
                self.noise_sigma
            )));
        }
        for blob in self.frames.iter().flatten() {
            blob.check(self.width, self.height)?;
        }
        Ok(())
    }

    /// Image path of frame `frame_id`, relative to the dataset root.
    pub fn image_name(&self, frame_id: u64) -> String {
        format!("scene_{}/frame_{frame_id}.png", self.scene_id)
    }
}

/// Renders frame `index` alone. Each frame draws its noise from its own
/// ChaCha stream, so frames can be rendered in any order or in parallel.
pub fn render_frame(scene: &SynthScene, index: usize) -> Result<GrayImage> {
    scene.validate()?;
    let blobs = scene
        .frames
        .get(index)
        .ok_or_else(|| Error::arg(format!("frame index {index} out of range")))?;
    let (w, h) = (scene.width as usize, scene.height as usize);
    let mut acc = vec![0.0f64; w * h];
    for b in blobs {
        let r = RENDER_RADIUS_SIGMAS * b.sigma;
        let (cx, cy) = b.center;
        let x0 = (cx - r).floor().max(0.0) as usize;
        let y0 = (cy - r).floor().max(0.0) as usize;
        let x1 = ((cx + r).ceil() as usize + 1).min(w);
        let y1 = ((cy + r).ceil() as usize + 1).min(h);
        let two_s2 = 2.0 * b.sigma * b.sigma;
        for y in y0..y1 {
            let dy = y as f64 - cy;
            for x in x0..x1 {
                let dx = x as f64 - cx;
                acc[y * w + x] += b.amplitude * (-(dx * dx + dy * dy) / two_s2).exp();
            }
        }
    }

    if scene.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(scene.rng_seed);
        rng.set_stream(index as u64);
        let noise = Normal::new(0.0, scene.noise_sigma)
            .map_err(|e| Error::arg(format!("noise distribution: {e}")))?;
        for v in &mut acc {
            *v += rng.sample(noise);
        }
    }

    let max = f64::from(scene.bit_depth.max_value());
    let pixels = acc
        .iter()
        .map(|v| v.clamp(0.0, max).round() as u16)
        .collect();
    GrayImage::from_vec(scene.width, scene.height, scene.bit_depth, pixels)
}

/// Groups the blobs of one frame into vehicles.
///
/// Every direct blob leads a vehicle; each indirect blob joins the vehicle
/// of its nearest direct blob (lowest index on ties). Without any direct
/// blob, each indirect blob forms its own indirect vehicle. Blob indices
/// serve as instance ids and the leading blob's index as vehicle id.
pub fn annotate_frame(blobs: &[BlobSpec]) -> Vec<VehicleAnnotation> {
    let leaders: Vec<usize> = (0..blobs.len()).filter(|&i| blobs[i].direct).collect();
    let mut vehicles: Vec<VehicleAnnotation> = Vec::new();
    if leaders.is_empty() {
        for (i, b) in blobs.iter().enumerate() {
            vehicles.push(VehicleAnnotation {
                id: i as u64,
                position: b.keypoint(),
                instances: vec![InstanceAnnotation {
                    id: i as u64,
                    kp: b.keypoint(),
                }],
            });
        }
        return vehicles;
    }
    let dist2 = |a: &BlobSpec, b: &BlobSpec| {
        (a.center.0 - b.center.0).powi(2) + (a.center.1 - b.center.1).powi(2)
    };
    let mut members: Vec<Vec<usize>> = leaders.iter().map(|&i| vec![i]).collect();
    for (i, b) in blobs.iter().enumerate().filter(|(_, b)| !b.direct) {
        let nearest = (0..leaders.len())
            .min_by(|&p, &q| dist2(b, &blobs[leaders[p]]).total_cmp(&dist2(b, &blobs[leaders[q]])))
            .expect("at least one leader");
        members[nearest].push(i);
    }
    for (&lead, group) in leaders.iter().zip(members) {
        vehicles.push(VehicleAnnotation {
            id: lead as u64,
            position: blobs[lead].keypoint(),
            instances: group
                .into_iter()
                .map(|i| InstanceAnnotation {
                    id: i as u64,
                    kp: blobs[i].keypoint(),
                })
                .collect(),
        });
    }
    vehicles
}

/// Renders every frame and derives the matching night-time annotation.
pub fn render(scene: &SynthScene) -> Result<(Vec<GrayImage>, SceneAnnotation)> {
    scene.validate()?;
    let images = (0..scene.frames.len())
        .map(|i| render_frame(scene, i))
        .collect::<Result<Vec<_>>>()?;
    Ok((images, annotate(scene)))
}

/// The annotation `render` would produce, without rendering.
pub fn annotate(scene: &SynthScene) -> SceneAnnotation {
    SceneAnnotation {
        scene_id: scene.scene_id,
        exposure: Exposure::Night,
        frames: scene
            .frames
            .iter()
            .enumerate()
            .map(|(f, blobs)| FrameAnnotation {
                frame_id: f as u64,
                image: scene.image_name(f as u64),
                vehicles: annotate_frame(blobs),
            })
            .collect(),
    }
}

/// Moves blob `i` by `f · velocities[i]` in frame `f`.
pub fn drift(scene: &SynthScene, velocities: &[(f64, f64)]) -> Result<SynthScene> {
    let mut out = scene.clone();
    for (f, blobs) in out.frames.iter_mut().enumerate() {
        if blobs.len() != velocities.len() {
            return Err(Error::arg(format!(
                "frame {f} has {} blobs but {} velocities were given",
                blobs.len(),
                velocities.len()
            )));
        }
        for (b, &(vx, vy)) in blobs.iter_mut().zip(velocities) {
            b.center.0 += f as f64 * vx;
            b.center.1 += f as f64 * vy;
        }
    }
    out.validate()?;
    Ok(out)
}

/// Random scenes of well-separated, high-contrast blobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeparatedBlobs {
    pub width: u32,
    pub height: u32,
    pub frames: usize,
    pub blobs_per_frame: usize,
    pub sigma: (f64, f64),
    pub amplitude: (f64, f64),
    pub indirect_probability: f64,
    /// Minimum center distance in units of the largest sigma.
    pub separation: f64,
    pub noise_sigma: f64,
}

impl Default for SeparatedBlobs {
    fn default() -> Self {
        SeparatedBlobs {
            width: 128,
            height: 128,
            frames: 10,
            blobs_per_frame: 3,
            sigma: (1.5, 2.5),
            amplitude: (180.0, 250.0),
            indirect_probability: 0.5,
            separation: 8.0,
            noise_sigma: 0.0,
        }
    }
}

const PLACEMENT_ATTEMPTS: usize = 10_000;

impl SeparatedBlobs {
    /// Draws a scene; blob placement is by rejection sampling.
    pub fn generate(&self, scene_id: u64, rng_seed: u64) -> Result<SynthScene> {
        let (s_lo, s_hi) = self.sigma;
        let (a_lo, a_hi) = self.amplitude;
        if !(0.0 < s_lo && s_lo <= s_hi && 0.0 < a_lo && a_lo <= a_hi) {
            return Err(Error::arg(
                "sigma and amplitude ranges must be positive and ordered",
            ));
        }
        if !(0.0..=1.0).contains(&self.indirect_probability) {
            return Err(Error::arg("indirect probability must lie in [0, 1]"));
        }
        let margin = (3.0 * s_hi).ceil() + 1.0;
        let (w, h) = (f64::from(self.width), f64::from(self.height));
        if w <= 2.0 * margin + 1.0 || h <= 2.0 * margin + 1.0 {
            return Err(Error::arg("image too small for the blob size"));
        }
        let min_d2 = (self.separation * s_hi).powi(2);
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);

        let mut frames = Vec::with_capacity(self.frames);
        for f in 0..self.frames {
            let mut blobs: Vec<BlobSpec> = Vec::with_capacity(self.blobs_per_frame);
            let mut attempts = 0;
            while blobs.len() < self.blobs_per_frame {
                attempts += 1;
                if attempts > PLACEMENT_ATTEMPTS {
                    return Err(Error::arg(format!(
                        "could not place {} separated blobs in frame {f}",
                        self.blobs_per_frame
                    )));
                }
                let x = rng.random_range(margin..w - margin).round();
                let y = rng.random_range(margin..h - margin).round();
                if blobs
                    .iter()
                    .any(|b| (b.center.0 - x).powi(2) + (b.center.1 - y).powi(2) <= min_d2)
                {
                    continue;
                }
                let sigma = rng.random_range(s_lo..=s_hi);
                let amplitude = rng.random_range(a_lo..=a_hi);
                let direct = !rng.random_bool(self.indirect_probability);
                blobs.push(BlobSpec::new(x, y, amplitude, sigma, direct));
            }
            frames.push(blobs);
        }
        let scene = SynthScene {
            scene_id,
            width: self.width,
            height: self.height,
            bit_depth: BitDepth::Eight,
            frames,
            noise_sigma: self.noise_sigma,
            rng_seed,
        };
        scene.validate()?;
        Ok(scene)
    }
}

//! Annotation data model: scenes hold frames, frames hold vehicles, and each
//! vehicle has one position keypoint plus any number of instance keypoints
//! marking its light artifacts (headlights, halos, reflections).
//!
//! On disk a dataset is a directory with one `scene_<id>.json` per scene.

use std::collections::HashSet;
use std::fs;
use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Violation};

/// A single annotated pixel. `direct` distinguishes light sources in direct
/// sight from indirect ones (reflections, illuminated surroundings).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Keypoint {
    pub x: u32,
    pub y: u32,
    pub direct: bool,
}

impl Keypoint {
    pub const fn new(x: u32, y: u32, direct: bool) -> Self {
        Keypoint { x, y, direct }
    }

    /// Same pixel, regardless of the direct flag.
    pub fn same_position(&self, other: &Keypoint) -> bool {
        self.x == other.x && self.y == other.y
    }

    pub fn in_bounds(&self, width: u32, height: u32) -> bool {
        self.x < width && self.y < height
    }

    pub fn distance(&self, other: &Keypoint) -> f64 {
        let dx = f64::from(self.x) - f64::from(other.x);
        let dy = f64::from(self.y) - f64::from(other.y);
        dx.hypot(dy)
    }
}

/// Axis-aligned box with upper-left `(x1, y1)` and lower-right `(x2, y2)`.
///
/// The covered pixel set is half-open, `[x1, x2) × [y1, y2)`. Corners are
/// real-valued so that averaged boxes can be represented without rounding.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BoundingBox {
    pub const fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        BoundingBox { x1, y1, x2, y2 }
    }

    /// Box covering the integer pixel range `[x1, x2) × [y1, y2)`.
    pub fn from_pixels(x1: u32, y1: u32, x2: u32, y2: u32) -> Self {
        BoundingBox::new(f64::from(x1), f64::from(y1), f64::from(x2), f64::from(y2))
    }

    pub fn is_valid(&self) -> bool {
        [self.x1, self.y1, self.x2, self.y2]
            .iter()
            .all(|v| v.is_finite())
            && self.x1 <= self.x2
            && self.y1 <= self.y2
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// Half-open containment of a keypoint's pixel.
    pub fn contains(&self, kp: &Keypoint) -> bool {
        let (x, y) = (f64::from(kp.x), f64::from(kp.y));
        self.x1 <= x && x < self.x2 && self.y1 <= y && y < self.y2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Exposure {
    Day,
    Night,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstanceAnnotation {
    pub id: u64,
    /// Location and direct/indirect flag of the light artifact.
    pub kp: Keypoint,
}

impl InstanceAnnotation {
    pub fn direct(&self) -> bool {
        self.kp.direct
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VehicleAnnotation {
    pub id: u64,
    /// Position keypoint; its `direct` flag is the vehicle's flag.
    pub position: Keypoint,
    pub instances: Vec<InstanceAnnotation>,
}

impl VehicleAnnotation {
    pub fn direct(&self) -> bool {
        self.position.direct
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameAnnotation {
    pub frame_id: u64,
    /// Image path relative to the dataset root.
    pub image: String,
    pub vehicles: Vec<VehicleAnnotation>,
}

impl FrameAnnotation {
    pub fn image_path(&self, root: &Path) -> PathBuf {
        root.join(&self.image)
    }

    /// All instance keypoints, in vehicle order then instance order.
    pub fn instance_keypoints(&self) -> Vec<Keypoint> {
        self.instances().map(|inst| inst.kp).collect()
    }

    pub fn instances(&self) -> impl Iterator<Item = &InstanceAnnotation> {
        self.vehicles.iter().flat_map(|v| v.instances.iter())
    }

    /// Checks that every keypoint lies inside a `width × height` image.
    pub fn check_bounds(&self, width: u32, height: u32) -> Vec<Violation> {
        let mut out = Vec::new();
        for v in &self.vehicles {
            if !v.position.in_bounds(width, height) {
                out.push(
                    Violation::new(
                        format!("vehicles[id={}].position", v.id),
                        format!(
                            "({}, {}) outside {width}x{height} image",
                            v.position.x, v.position.y
                        ),
                    )
                    .in_frame(self.frame_id),
                );
            }
            for inst in &v.instances {
                if !inst.kp.in_bounds(width, height) {
                    out.push(
                        Violation::new(
                            format!("instances[id={}]", inst.id),
                            format!(
                                "({}, {}) outside {width}x{height} image",
                                inst.kp.x, inst.kp.y
                            ),
                        )
                        .in_frame(self.frame_id),
                    );
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SceneAnnotation {
    pub scene_id: u64,
    pub exposure: Exposure,
    pub frames: Vec<FrameAnnotation>,
}

impl SceneAnnotation {
    pub fn file_name(&self) -> String {
        scene_file_name(self.scene_id)
    }

    /// Structural invariants that can be checked without the images.
    pub fn validate(&self) -> Vec<Violation> {
        let scene = self.scene_id;
        let mut out = Vec::new();
        if self.frames.is_empty() {
            out.push(Violation::new("frames", "scene has no frames").in_scene(scene));
        }
        let mut prev: Option<u64> = None;
        for frame in &self.frames {
            let at = |v: Violation| v.in_scene(scene).in_frame(frame.frame_id);
            if let Some(p) = prev {
                if frame.frame_id <= p {
                    out.push(at(Violation::new(
                        "frame_id",
                        format!("not strictly increasing (follows {p})"),
                    )));
                }
            }
            prev = Some(frame.frame_id);

            if let Some(reason) = image_path_problem(&frame.image) {
                out.push(at(Violation::new("image", reason)));
            }

            let mut vehicle_ids = HashSet::new();
            let mut instance_ids = HashSet::new();
            for v in &frame.vehicles {
                if !vehicle_ids.insert(v.id) {
                    out.push(at(Violation::new(
                        "vehicles.id",
                        format!("duplicate vehicle id {}", v.id),
                    )));
                }
                for inst in &v.instances {
                    if !instance_ids.insert(inst.id) {
                        out.push(at(Violation::new(
                            "instances.id",
                            format!("duplicate instance id {}", inst.id),
                        )));
                    }
                }
            }
        }
        out
    }
}

pub fn scene_file_name(scene_id: u64) -> String {
    format!("scene_{scene_id}.json")
}

fn image_path_problem(image: &str) -> Option<String> {
    if image.is_empty() {
        return Some("empty image path".into());
    }
    let path = Path::new(image);
    if path.is_absolute() {
        return Some(format!(
            "{image:?} is absolute; must be relative to the dataset root"
        ));
    }
    if path
        .components()
        .any(|c| matches!(c, Component::ParentDir | Component::Prefix(_)))
    {
        return Some(format!("{image:?} escapes the dataset root"));
    }
    None
}

// On-disk schema.

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneFile {
    scene_id: u64,
    exposure: Exposure,
    frames: Vec<FrameFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameFile {
    frame_id: u64,
    image: String,
    vehicles: Vec<VehicleFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VehicleFile {
    id: u64,
    direct: bool,
    position: PointFile,
    instances: Vec<InstanceFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PointFile {
    x: u32,
    y: u32,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceFile {
    id: u64,
    direct: bool,
    x: u32,
    y: u32,
}

impl From<SceneFile> for SceneAnnotation {
    fn from(s: SceneFile) -> Self {
        SceneAnnotation {
            scene_id: s.scene_id,
            exposure: s.exposure,
            frames: s
                .frames
                .into_iter()
                .map(|f| FrameAnnotation {
                    frame_id: f.frame_id,
                    image: f.image,
                    vehicles: f
                        .vehicles
                        .into_iter()
                        .map(|v| VehicleAnnotation {
                            id: v.id,
                            position: Keypoint::new(v.position.x, v.position.y, v.direct),
                            instances: v
                                .instances
                                .into_iter()
                                .map(|i| InstanceAnnotation {
                                    id: i.id,
                                    kp: Keypoint::new(i.x, i.y, i.direct),
                                })
                                .collect(),
                        })
                        .collect(),
                })
                .collect(),
        }
    }
}

impl From<&SceneAnnotation> for SceneFile {
    fn from(s: &SceneAnnotation) -> Self {
        SceneFile {
            scene_id: s.scene_id,
            exposure: s.exposure,
            frames: s
                .frames
                .iter()
                .map(|f| FrameFile {
                    frame_id: f.frame_id,
                    image: f.image.clone(),
                    vehicles: f
                        .vehicles
                        .iter()
                        .map(|v| VehicleFile {
                            id: v.id,
                            direct: v.direct(),
                            position: PointFile {
                                x: v.position.x,
                                y: v.position.y,
                            },
                            instances: v
                                .instances
                                .iter()
                                .map(|i| InstanceFile {
                                    id: i.id,
                                    direct: i.kp.direct,
                                    x: i.kp.x,
                                    y: i.kp.y,
                                })
                                .collect(),
                        })
                        .collect(),
                })
                .collect(),
        }
    }
}

fn parse_scene_file_name(name: &str) -> Option<u64> {
    name.strip_prefix("scene_")?
        .strip_suffix(".json")?
        .parse()
        .ok()
}

/// Parses one scene document. `path` is only used for error reporting.
pub fn parse_scene(path: &Path, text: &str) -> Result<SceneAnnotation> {
    let file: SceneFile = serde_json::from_str(text).map_err(|e| Error::json(path, text, &e))?;
    Ok(file.into())
}

/// Loads every `scene_<id>.json` under `root`, ordered by scene id.
///
/// All structural violations across all scenes are collected and returned
/// together; nothing is repaired.
pub fn load_dataset(root: impl AsRef<Path>) -> Result<Vec<SceneAnnotation>> {
    let root = root.as_ref();
    let entries = fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        let name = entry.file_name();
        if let Some(id) = name.to_str().and_then(parse_scene_file_name) {
            files.push((id, entry.path()));
        }
    }
    files.sort();

    let mut scenes = Vec::with_capacity(files.len());
    let mut violations = Vec::new();
    for (id, path) in files {
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let scene = parse_scene(&path, &text)?;
        if scene.scene_id != id {
            violations.push(
                Violation::new(
                    "scene_id",
                    format!("file {} holds scene_id {}", path.display(), scene.scene_id),
                )
                .in_scene(id),
            );
        }
        violations.extend(scene.validate());
        scenes.push(scene);
    }
    if violations.is_empty() {
        Ok(scenes)
    } else {
        Err(Error::Validation(violations))
    }
}

/// Writes one `scene_<id>.json` per scene into `root`, creating it if needed.
pub fn save_dataset(scenes: &[SceneAnnotation], root: impl AsRef<Path>) -> Result<()> {
    let root = root.as_ref();
    let violations: Vec<_> = scenes.iter().flat_map(SceneAnnotation::validate).collect();
    if !violations.is_empty() {
        return Err(Error::Validation(violations));
    }
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    for scene in scenes {
        let path = root.join(scene.file_name());
        let mut text = serde_json::to_string_pretty(&SceneFile::from(scene))
            .expect("scene serialization is infallible");
        text.push('\n');
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// Minimal enclosing box of a vehicle position and its headlight keypoints.
///
/// Points are enclosed inclusively, so the lower-right corner is stored one
/// pixel past the extreme coordinates.
pub fn envelope_vehicle_bb(position: &Keypoint, headlights: &[Keypoint]) -> Result<BoundingBox> {
    if headlights.is_empty() {
        return Err(Error::arg(
            "envelope_vehicle_bb needs at least one headlight",
        ));
    }
    let points = std::iter::once(position).chain(headlights);
    let (mut x1, mut y1, mut x2, mut y2) = (u32::MAX, u32::MAX, 0, 0);
    for p in points {
        x1 = x1.min(p.x);
        y1 = y1.min(p.y);
        x2 = x2.max(p.x);
        y2 = y2.max(p.y);
    }
    Ok(BoundingBox::new(
        f64::from(x1),
        f64::from(y1),
        f64::from(x2) + 1.0,
        f64::from(y2) + 1.0,
    ))
}

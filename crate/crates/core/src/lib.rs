//! Light-artifact annotation tooling for night-time vehicle detection:
//! keypoint annotations, saliency maps seeded at keypoints, bounding-box
//! generation, assignment-based matching and the evaluation metrics built
//! on top of them, plus a synthetic scene generator with known ground truth.

pub mod annotations;
pub mod assignment;
pub mod boxgen;
pub mod error;
pub mod imaging;
pub mod metrics;
pub mod saliency;
pub mod synth;

pub use error::{Error, Result, Violation};

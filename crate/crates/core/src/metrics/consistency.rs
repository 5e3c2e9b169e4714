use std::fmt::Write as _;

use serde::Serialize;

use crate::annotations::BoundingBox;
use crate::error::{Error, Result};

/// Corner-wise average of `boxes`.
pub fn mean_bb(boxes: &[BoundingBox]) -> Result<BoundingBox> {
    if boxes.is_empty() {
        return Err(Error::arg("mean of zero boxes"));
    }
    let n = boxes.len() as f64;
    let sum = boxes.iter().fold([0.0; 4], |acc, b| {
        [acc[0] + b.x1, acc[1] + b.y1, acc[2] + b.x2, acc[3] + b.y2]
    });
    Ok(BoundingBox::new(
        sum[0] / n,
        sum[1] / n,
        sum[2] / n,
        sum[3] / n,
    ))
}

/// Intersection over union; 0 when both boxes are empty.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let iw = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let ih = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HistogramBin {
    pub left: f64,
    pub right: f64,
    pub count: usize,
}

/// IoUs of one frame, one entry per annotator in input order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameIou {
    pub index: usize,
    pub ious: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsistencyReport {
    pub annotators: usize,
    pub per_frame_iou: Vec<FrameIou>,
    /// `None` when no frame had any annotation.
    pub median_iou: Option<f64>,
    pub zero_count: usize,
    pub histogram: Vec<HistogramBin>,
}

impl ConsistencyReport {
    /// `bin_left,bin_right,count` rows with a header line.
    pub fn histogram_csv(&self) -> String {
        let mut out = String::from("bin_left,bin_right,count\n");
        for b in &self.histogram {
            let _ = writeln!(out, "{},{},{}", b.left, b.right, b.count);
        }
        out
    }
}

/// Agreement of several annotators on one instance stream.
///
/// `annotations[f][a]` is annotator `a`'s box in frame `f`, if any. In each
/// frame with at least one box, every present box is compared with the mean
/// of the present boxes and every absent annotator scores 0. Frames nobody
/// annotated are skipped.
pub fn consistency_report(
    annotations: &[Vec<Option<BoundingBox>>],
    bins: usize,
) -> Result<ConsistencyReport> {
    if bins == 0 {
        return Err(Error::arg("histogram needs at least one bin"));
    }
    let annotators = annotations.first().map_or(0, Vec::len);
    if annotators < 2 {
        return Err(Error::arg(format!(
            "consistency needs at least 2 annotators, got {annotators}"
        )));
    }
    if let Some(f) = annotations.iter().position(|a| a.len() != annotators) {
        return Err(Error::arg(format!(
            "frame {f} has {} annotators, expected {annotators}",
            annotations[f].len()
        )));
    }

    let mut per_frame_iou = Vec::new();
    for (index, frame) in annotations.iter().enumerate() {
        let present: Vec<BoundingBox> = frame.iter().flatten().copied().collect();
        if present.is_empty() {
            continue;
        }
        let mean = mean_bb(&present)?;
        let ious = frame
            .iter()
            .map(|b| b.as_ref().map_or(0.0, |b| iou(b, &mean)))
            .collect();
        per_frame_iou.push(FrameIou { index, ious });
    }

    let mut all: Vec<f64> = per_frame_iou
        .iter()
        .flat_map(|f| f.ious.iter().copied())
        .collect();
    all.sort_by(f64::total_cmp);
    let median_iou = match all.len() {
        0 => None,
        n if n % 2 == 1 => Some(all[n / 2]),
        n => Some((all[n / 2 - 1] + all[n / 2]) / 2.0),
    };

    let width = 1.0 / bins as f64;
    let mut histogram: Vec<HistogramBin> = (0..bins)
        .map(|i| HistogramBin {
            left: i as f64 * width,
            right: if i + 1 == bins {
                1.0
            } else {
                (i + 1) as f64 * width
            },
            count: 0,
        })
        .collect();
    for &v in &all {
        let i = ((v * bins as f64) as usize).min(bins - 1);
        histogram[i].count += 1;
    }

    Ok(ConsistencyReport {
        annotators,
        per_frame_iou,
        median_iou,
        zero_count: all.iter().filter(|&&v| v == 0.0).count(),
        histogram,
    })
}

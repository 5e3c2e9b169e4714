use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::bail;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::frames::{read_json, write_json, write_text};
use crate::ConsistencyArgs;
use lightkp::annotations::BoundingBox;
use lightkp::metrics::{consistency_report, ConsistencyReport};

/// One annotator's boxes: `{"annotator": .., "frames": [{"scene_id",
/// "frame_id", "instances": [{"id", "direct", "box": [x1, y1, x2, y2]}]}]}`.
/// An instance missing from a frame counts as not annotated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotatorFile {
    pub annotator: String,
    #[serde(default)]
    pub frames: Vec<AnnotatorFrame>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotatorFrame {
    pub scene_id: u64,
    pub frame_id: u64,
    pub instances: Vec<AnnotatorBox>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotatorBox {
    pub id: u64,
    pub direct: bool,
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
}

/// Instance identity across annotators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct InstanceKey {
    pub scene_id: u64,
    pub frame_id: u64,
    pub id: u64,
}

#[derive(Debug, Serialize)]
pub struct Section {
    /// Row `i` of the report's per-frame IoUs belongs to `instances[i]`.
    pub instances: Vec<InstanceKey>,
    pub report: ConsistencyReport,
}

#[derive(Debug, Serialize)]
pub struct Output {
    pub annotators: Vec<String>,
    pub direct: Option<Section>,
    pub indirect: Option<Section>,
}

type Rows = BTreeMap<InstanceKey, (bool, Vec<Option<BoundingBox>>)>;

/// Lines up every annotator's box for each instance.
pub fn collect_rows(files: &[AnnotatorFile]) -> anyhow::Result<Rows> {
    let n = files.len();
    let mut rows: Rows = BTreeMap::new();
    for (a, file) in files.iter().enumerate() {
        for frame in &file.frames {
            for inst in &frame.instances {
                let key = InstanceKey {
                    scene_id: frame.scene_id,
                    frame_id: frame.frame_id,
                    id: inst.id,
                };
                let [x1, y1, x2, y2] = inst.bbox;
                let b = BoundingBox::new(x1, y1, x2, y2);
                if !b.is_valid() {
                    bail!(
                        "{}: invalid box {:?} for {key:?}",
                        file.annotator,
                        inst.bbox
                    );
                }
                let row = match rows.entry(key) {
                    Entry::Vacant(e) => &mut e.insert((inst.direct, vec![None; n])).1,
                    Entry::Occupied(e) => {
                        let (direct, row) = e.into_mut();
                        if *direct != inst.direct {
                            bail!("annotators disagree on whether {key:?} is direct");
                        }
                        row
                    }
                };
                if row[a].replace(b).is_some() {
                    bail!("{}: {key:?} annotated twice", file.annotator);
                }
            }
        }
    }
    Ok(rows)
}

fn section(rows: &Rows, direct: bool, bins: usize) -> anyhow::Result<Option<Section>> {
    let (instances, boxes): (Vec<_>, Vec<_>) = rows
        .iter()
        .filter(|(_, (d, _))| *d == direct)
        .map(|(k, (_, row))| (*k, row.clone()))
        .unzip();
    if instances.is_empty() {
        return Ok(None);
    }
    let report = consistency_report(&boxes, bins)?;
    Ok(Some(Section { instances, report }))
}

pub fn run(cfg: &mut RunConfig, args: ConsistencyArgs) -> anyhow::Result<()> {
    if let Some(out) = args.out {
        cfg.output = Some(out);
    }
    if let Some(bins) = args.bins {
        cfg.bins = bins;
    }
    cfg.validate()?;
    if args.files.len() < 2 {
        bail!(
            "consistency needs at least 2 annotator files, got {}",
            args.files.len()
        );
    }
    let files = args
        .files
        .iter()
        .map(|p| read_json::<AnnotatorFile>(p))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let rows = collect_rows(&files)?;
    let output = Output {
        annotators: files.iter().map(|f| f.annotator.clone()).collect(),
        direct: section(&rows, true, cfg.bins)?,
        indirect: section(&rows, false, cfg.bins)?,
    };

    let out = cfg.output()?;
    write_json(&out.join("consistency.json"), &output)?;
    let mut table = String::new();
    for (name, sec) in [("direct", &output.direct), ("indirect", &output.indirect)] {
        match sec {
            Some(sec) => {
                write_csv(out, name, &sec.report)?;
                let median = sec
                    .report
                    .median_iou
                    .map_or("n/a".into(), |m| format!("{m:.6}"));
                let _ = writeln!(
                    table,
                    "{name:<9} instances {:>5}  median IoU {median}  zero entries {}",
                    sec.instances.len(),
                    sec.report.zero_count
                );
            }
            None => {
                let _ = writeln!(table, "{name:<9} no instances");
            }
        }
    }
    print!("{table}");
    Ok(())
}

fn write_csv(out: &Path, name: &str, report: &ConsistencyReport) -> anyhow::Result<()> {
    write_text(
        &out.join(format!("consistency_{name}.csv")),
        &report.histogram_csv(),
    )
}

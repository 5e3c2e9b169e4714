use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use lightkp::boxgen::{AdaptiveParams, SeededParams};
use lightkp::imaging::Resample;
use lightkp::metrics::default_thresholds;
use lightkp::saliency::BmsParams;

/// Everything a run needs, loadable from a TOML or JSON file. Command-line
/// flags override individual fields after loading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub bms: BmsParams,
    pub adaptive: AdaptiveParams,
    pub seeded: SeededParams,
    /// Keypoint-similarity thresholds for mAP / mAR.
    pub thresholds: Vec<f64>,
    pub jobs: usize,
    pub seed: u64,
    /// Halve the resolution before box generation.
    pub half_res: bool,
    pub resample: Resample,
    pub bins: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: None,
            output: None,
            bms: BmsParams::default(),
            adaptive: AdaptiveParams::default(),
            seeded: SeededParams::default(),
            thresholds: default_thresholds(),
            jobs: 1,
            seed: 0,
            half_res: false,
            resample: Resample::default(),
            bins: 20,
        }
    }
}

impl RunConfig {
    /// Reads a config file; `.json` files are parsed as JSON, anything else
    /// as TOML.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let is_json = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let config = if is_json {
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        } else {
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        };
        Ok(config)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.jobs == 0 {
            bail!("jobs must be >= 1");
        }
        if self.bins == 0 {
            bail!("bins must be >= 1");
        }
        if self.thresholds.is_empty()
            || self.thresholds.iter().any(|t| !t.is_finite())
            || self.thresholds.windows(2).any(|w| w[0] >= w[1])
        {
            bail!("thresholds must be a non-empty, strictly increasing list");
        }
        self.bms.validate()?;
        self.adaptive.validate()?;
        self.seeded.validate()?;
        Ok(())
    }

    pub fn dataset(&self) -> anyhow::Result<&Path> {
        match &self.dataset {
            Some(p) => Ok(p),
            None => bail!("no dataset given (use --dataset or set `dataset` in the config)"),
        }
    }

    pub fn output(&self) -> anyhow::Result<&Path> {
        match &self.output {
            Some(p) => Ok(p),
            None => bail!("no output directory given (use --out or set `output` in the config)"),
        }
    }
}

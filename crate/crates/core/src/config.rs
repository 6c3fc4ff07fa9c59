//! Pipeline configuration: one declarative TOML file covering every stage.
//!
//! Every field has a default, so a config file only needs the values it
//! overrides. The command line can override a handful of common fields on
//! top of the file; seeds are never part of the file and always arrive as
//! explicit flags.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::belief::HmmModel;
use crate::classes::{ClassId, NUM_CLASSES};
use crate::detection::DetectorConfig;
use crate::tracking::{FieldOfView, TrackerConfig};
use crate::{Error, Result};

fn default_dwell() -> f64 {
    4.0
}

fn default_belief_threshold() -> f64 {
    0.9
}

/// Guidance decision thresholds and the advisory per-class speed table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GuidanceConfig {
    /// Minimum continuous time inside the attention area, seconds.
    pub dwell_s: f64,
    /// Minimum belief in the winning person class.
    pub belief_threshold: f64,
    /// Advisory walking speed per class, meters per second, used to scale
    /// route timing announcements. Deliberately empty by default: no
    /// universal values exist, deployments measure their own.
    pub velocity_mps: BTreeMap<ClassId, f64>,
}

impl Default for GuidanceConfig {
    fn default() -> GuidanceConfig {
        GuidanceConfig {
            dwell_s: default_dwell(),
            belief_threshold: default_belief_threshold(),
            velocity_mps: BTreeMap::new(),
        }
    }
}

impl GuidanceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dwell_s < 0.0 {
            return Err(Error::Config("guidance dwell_s must be non-negative".into()));
        }
        if !(0.0 < self.belief_threshold && self.belief_threshold <= 1.0) {
            return Err(Error::Config(format!(
                "guidance belief_threshold {} outside (0, 1]",
                self.belief_threshold
            )));
        }
        for (class, v) in &self.velocity_mps {
            if !class.is_foreground() {
                return Err(Error::Config("velocity table keys must be person classes".into()));
            }
            if !(*v > 0.0) {
                return Err(Error::Config(format!(
                    "velocity for {} must be positive, got {v}",
                    class.name()
                )));
            }
        }
        Ok(())
    }
}

/// Which classifier backs the detector. The only built-in kind is
/// `oracle`: simulator ground truth corrupted through a uniform-diagonal
/// confusion matrix (diagonal 1.0 reproduces labels perfectly). Other
/// classifiers plug in through the library's scorer trait.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScorerConfig {
    pub kind: String,
    /// Probability the oracle reports the true class.
    pub confusion_diagonal: f64,
    /// Score mass put on the reported class.
    pub peak: f64,
}

impl Default for ScorerConfig {
    fn default() -> ScorerConfig {
        ScorerConfig { kind: "oracle".into(), confusion_diagonal: 1.0, peak: 0.8 }
    }
}

impl ScorerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.kind != "oracle" {
            return Err(Error::Config(format!(
                "unknown scorer kind {:?}; built-in kinds: oracle",
                self.kind
            )));
        }
        if !(0.0..=1.0).contains(&self.confusion_diagonal) {
            return Err(Error::Config(format!(
                "confusion_diagonal {} outside [0, 1]",
                self.confusion_diagonal
            )));
        }
        if !(self.peak > 1.0 / NUM_CLASSES as f64 && self.peak <= 1.0) {
            return Err(Error::Config(format!(
                "scorer peak {} must exceed the uniform mass and not exceed 1",
                self.peak
            )));
        }
        Ok(())
    }
}

/// Everything a pipeline run needs besides the input sequence and seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub detector: DetectorConfig,
    pub tracker: TrackerConfig,
    /// Attention area for belief updates and guidance dwell.
    pub fov: FieldOfView,
    pub guidance: GuidanceConfig,
    pub scorer: ScorerConfig,
    /// Path to a class-belief model text file; empty selects the built-in
    /// people model. Relative paths resolve against the config file's
    /// directory when loaded from a file, the working directory otherwise.
    pub hmm_model: String,
    /// A run fails when more than this fraction of frames is skipped.
    pub max_skipped_fraction: f64,
}

impl Default for PipelineConfig {
    fn default() -> PipelineConfig {
        PipelineConfig {
            detector: DetectorConfig::default(),
            tracker: TrackerConfig::default(),
            fov: FieldOfView::default(),
            guidance: GuidanceConfig::default(),
            scorer: ScorerConfig::default(),
            hmm_model: String::new(),
            max_skipped_fraction: 0.1,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.detector.proposer.proposals.validate()?;
        if !(0.0..=1.0).contains(&self.detector.nms_iou) {
            return Err(Error::Config(format!(
                "nms_iou {} outside [0, 1]",
                self.detector.nms_iou
            )));
        }
        self.guidance.validate()?;
        self.scorer.validate()?;
        if !(self.fov.max_range_m > 0.0) || !(self.fov.half_angle_deg > 0.0) {
            return Err(Error::Config("fov range and half angle must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.max_skipped_fraction) {
            return Err(Error::Config(format!(
                "max_skipped_fraction {} outside [0, 1]",
                self.max_skipped_fraction
            )));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(format!("config encode: {e}")))
    }

    pub fn from_toml(text: &str) -> Result<PipelineConfig> {
        let cfg: PipelineConfig =
            toml::from_str(text).map_err(|e| Error::Parse(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads and validates a config file, resolving `hmm_model` relative to
    /// the file's directory.
    pub fn from_toml_file(path: &Path) -> Result<PipelineConfig> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = PipelineConfig::from_toml(&text)?;
        if !cfg.hmm_model.is_empty() {
            let model = Path::new(&cfg.hmm_model);
            if model.is_relative() {
                if let Some(dir) = path.parent() {
                    cfg.hmm_model = dir.join(model).to_string_lossy().into_owned();
                }
            }
        }
        Ok(cfg)
    }

    /// The class-belief model this config selects: the referenced file, or
    /// the built-in people model when `hmm_model` is empty.
    pub fn load_hmm(&self) -> Result<HmmModel> {
        if self.hmm_model.is_empty() {
            return Ok(HmmModel::people_default());
        }
        let text = std::fs::read_to_string(&self.hmm_model)?;
        HmmModel::from_text(&text)
    }
}

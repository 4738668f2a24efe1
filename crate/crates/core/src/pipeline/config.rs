//! Run configuration: loss weights, optimizer budgets and pipeline settings,
//! read from one JSON document. Every field has a default.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lbfgs::OptimizerConfig;
use crate::objective::LossWeights;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Frames per spline knot interval.
    pub subsample: usize,
    /// Low-pass cutoff applied to keypoints before IK [Hz].
    pub filter_cutoff_hz: f64,
    pub filter_order: usize,
    /// Run the physics stage after the kinematic stage.
    pub enable_physics: bool,
    /// Sites closer to the ground than this get an initial supporting force [m].
    pub contact_init_height: f64,
    /// Longest clip optimized in one piece [frames].
    pub max_chunk_frames: usize,
    /// Overlap between consecutive chunks [s].
    pub chunk_overlap_s: f64,
    pub optimize_knot_times: bool,
    /// Frames per gradient block.
    pub block_size: usize,
    /// Largest allowed ratio of the pose loss after the physics stage to the
    /// pose loss after the kinematic stage; beyond it the kinematic result is kept.
    pub pose_growth_limit: f64,
    /// Optional Gaussian-mixture pose prior (JSON).
    pub prior: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            subsample: 8,
            filter_cutoff_hz: 3.0,
            filter_order: 2,
            enable_physics: true,
            contact_init_height: 0.1,
            max_chunk_frames: 2000,
            chunk_overlap_s: 1.0,
            optimize_knot_times: false,
            block_size: 32,
            pose_growth_limit: 2.0,
            prior: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub weights: LossWeights,
    pub optimizer: OptimizerConfig,
    pub pipeline: PipelineConfig,
}

impl Config {
    pub fn from_json_str(text: &str) -> Result<Config> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Config =
            serde_path_to_error::deserialize(de).map_err(|e| Error::validation(e.path().to_string(), e.inner().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Config> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        self.optimizer.lbfgs.validate()?;
        let p = &self.pipeline;
        if p.subsample == 0 {
            return Err(Error::validation("pipeline.subsample", "must be at least 1"));
        }
        if p.filter_order == 0 || !(p.filter_cutoff_hz > 0.0) {
            return Err(Error::validation("pipeline.filter_cutoff_hz", "filter needs order >= 1 and a positive cutoff"));
        }
        if p.block_size == 0 {
            return Err(Error::validation("pipeline.block_size", "must be at least 1"));
        }
        if !(p.chunk_overlap_s >= 0.0) {
            return Err(Error::validation("pipeline.chunk_overlap_s", "must be non-negative"));
        }
        if !(p.pose_growth_limit >= 1.0) {
            return Err(Error::validation("pipeline.pose_growth_limit", "must be at least 1"));
        }
        if p.max_chunk_frames < 3 {
            return Err(Error::validation("pipeline.max_chunk_frames", "must be at least 3"));
        }
        Ok(())
    }
}

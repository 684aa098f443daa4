//! Run configuration: one TOML file with a section per pipeline stage,
//! overridable with `section.key=value` strings.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::enhance::EnhanceConfig;
use crate::error::{Error, Result};
use crate::evaluation::EvaluationConfig;
use crate::features::DetectorSpec;
use crate::odometry::OdometryConfig;
use crate::preprocess::PreprocessConfig;
use crate::tracking::{find_combination, TrackingConfig};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    /// Keypoint-guided sampling through the configured combination.
    #[default]
    Keypoints,
    /// Every valid point, the baseline.
    Full,
}

/// `[pipeline]` config section.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub dataset: PathBuf,
    pub combination: String,
    pub sampling: Sampling,
    /// Order statistic mapped to 255 when converting 16-bit images.
    pub normalize_percentile: f64,
    pub output: Option<PathBuf>,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            dataset: PathBuf::new(),
            combination: "comb_0".into(),
            sampling: Sampling::Keypoints,
            normalize_percentile: 0.99,
            output: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub pipeline: PipelineConfig,
    pub preprocess: PreprocessConfig,
    pub enhance: EnhanceConfig,
    pub features: DetectorSpec,
    pub tracking: TrackingConfig,
    pub odometry: OdometryConfig,
    pub evaluation: EvaluationConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// Applies `section.key=value` overrides. Values are parsed as TOML
    /// scalars, falling back to a bare string.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        if overrides.is_empty() {
            return Ok(self.clone());
        }
        let mut root = toml::Value::try_from(self).map_err(|e| Error::Config(e.to_string()))?;
        for item in overrides {
            let item = item.as_ref();
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{item}` is not key=value")))?;
            let path: Vec<&str> = key.trim().split('.').collect();
            if path.len() < 2 || path.iter().any(|p| p.is_empty()) {
                return Err(Error::Config(format!("override key `{key}` needs section.key")));
            }
            let value = parse_scalar(raw.trim());
            let mut table = root.as_table_mut().expect("root is a table");
            for section in &path[..path.len() - 1] {
                table = table
                    .entry(section.to_string())
                    .or_insert_with(|| toml::Value::Table(Default::default()))
                    .as_table_mut()
                    .ok_or_else(|| Error::Config(format!("`{section}` is not a section")))?;
            }
            table.insert(path[path.len() - 1].to_string(), value);
        }
        root.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        find_combination(&self.pipeline.combination)
            .map_err(|e| Error::Config(e.to_string()))?;
        let p = self.pipeline.normalize_percentile;
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::Config(format!("pipeline.normalize_percentile = {p}")));
        }
        self.preprocess.validate()?;
        self.enhance.sr_spec()?;
        self.enhance.color_spec()?;
        self.features.validate()?;
        if let Some(d) = self.tracking.max_distance {
            if !(d >= 0.0) {
                return Err(Error::Config(format!("tracking.max_distance = {d}")));
            }
        }
        self.odometry.validate()?;
        self.evaluation.validate()
    }
}

fn parse_scalar(raw: &str) -> toml::Value {
    // Wrapping in a throwaway table lets the TOML parser type the value.
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

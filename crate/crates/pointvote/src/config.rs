//! The run configuration: every tunable of every command in one JSON
//! document, with `key.path=value` overrides.

use std::path::Path;

use pointvote_core::dataset::DatasetParams;
use pointvote_core::model::KEYPOINT_SPACING;
use pointvote_core::network::{NetworkConfig, TrainConfig};
use pointvote_core::pipeline::PipelineConfig;
use pointvote_core::synth::SynthParams;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{read_file, Error, Result};
use crate::formats::SymmetryJson;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed: scene generation and training-data sampling. `--seed`
    /// also copies it into `train.seed` and `pipeline.seed`.
    pub seed: u64,
    pub model: ModelConfig,
    pub dataset: DatasetParams,
    pub network: NetworkSpec,
    pub train: TrainConfig,
    pub pipeline: PipelineConfig,
    pub eval: EvalConfig,
    pub synth: SynthConfig,
}


#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Keypoint spacing when a model has no sidecar (mm).
    pub keypoint_spacing_mm: f64,
    /// Surface sampling step for mesh models (mm).
    pub surface_spacing_mm: f64,
    /// Symmetry when a model has no sidecar.
    pub symmetry: SymmetryJson,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig { keypoint_spacing_mm: KEYPOINT_SPACING, surface_spacing_mm: 2.5, symmetry: SymmetryJson::None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    #[default]
    Standard,
    Compact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSpec {
    pub preset: Preset,
    /// Scale positions by 1 / (sphere factor × diameter).
    pub normalize_positions: bool,
    /// Feed RGB when the training data has it.
    pub use_color: bool,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        NetworkSpec { preset: Preset::Standard, normalize_positions: true, use_color: true }
    }
}

impl NetworkSpec {
    pub fn network_config(&self, keypoints: usize, color: bool) -> NetworkConfig {
        match self.preset {
            Preset::Standard => NetworkConfig::standard(keypoints, color),
            Preset::Compact => NetworkConfig::compact(keypoints, color),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Success when ADD (ADD-S for symmetric models) is below this times
    /// the diameter.
    pub threshold_factor: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { threshold_factor: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthObject {
    #[default]
    Demo,
    Cylinder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub object: SynthObject,
    /// Sampling of the object copy placed in scenes (mm).
    pub render_spacing_mm: f64,
    /// Sampling of the written detection model (mm).
    pub model_spacing_mm: f64,
    pub scene: SynthParams,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig { object: SynthObject::Demo, render_spacing_mm: 1.6, model_spacing_mm: 2.5, scene: SynthParams::default() }
    }
}

impl RunConfig {
    /// Defaults, then the file at `path` if any, then each `key=value`
    /// override in order. Values are JSON when they parse as JSON and
    /// strings otherwise.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
        let mut doc = match path {
            Some(p) => {
                let bytes = read_file(p)?;
                let v: Value = serde_json::from_slice(&bytes).map_err(|e| Error::format(p, e.to_string()))?;
                // checked before merging so unknown keys in the file are caught
                serde_json::from_value::<RunConfig>(v.clone()).map_err(|e| Error::format(p, e.to_string()))?;
                merge(serde_json::to_value(RunConfig::default()).expect("config serializes"), v)
            }
            None => serde_json::to_value(RunConfig::default()).expect("config serializes"),
        };
        for o in overrides {
            let (key, raw) = o.split_once('=').ok_or_else(|| Error::Usage(format!("override '{o}' is not key=value")))?;
            let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            set_path(&mut doc, key, value)?;
        }
        let cfg: RunConfig = serde_json::from_value(doc).map_err(|e| Error::Usage(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.dataset.validate()?;
        self.train.validate()?;
        self.pipeline.validate()?;
        self.synth.scene.validate()?;
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.model.keypoint_spacing_mm) || !positive(self.model.surface_spacing_mm) {
            return Err(Error::Usage("model spacings must be positive".into()));
        }
        if !positive(self.synth.render_spacing_mm) || !positive(self.synth.model_spacing_mm) {
            return Err(Error::Usage("synth spacings must be positive".into()));
        }
        if !positive(self.eval.threshold_factor) {
            return Err(Error::Usage("eval.threshold_factor must be positive".into()));
        }
        Ok(())
    }

    /// Copies the master seed into the per-module seeds.
    pub fn reseed(&mut self, seed: u64) {
        self.seed = seed;
        self.train.seed = seed;
        self.pipeline.seed = seed;
    }
}

fn merge(base: Value, over: Value) -> Value {
    match (base, over) {
        (Value::Object(mut b), Value::Object(o)) => {
            for (k, v) in o {
                let merged = match b.remove(&k) {
                    Some(old) => merge(old, v),
                    None => v,
                };
                b.insert(k, merged);
            }
            Value::Object(b)
        }
        (_, o) => o,
    }
}

fn set_path(doc: &mut Value, key: &str, value: Value) -> Result<()> {
    let mut at = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let unknown = || Error::Usage(format!("unknown config key '{key}'"));
        let next = match at {
            Value::Object(map) => map.get_mut(*part).ok_or_else(unknown)?,
            Value::Array(items) => part.parse::<usize>().ok().and_then(|n| items.get_mut(n)).ok_or_else(unknown)?,
            _ => return Err(unknown()),
        };
        if i + 1 == parts.len() {
            *next = value;
            return Ok(());
        }
        at = next;
    }
    Err(Error::Usage("empty config key".into()))
}

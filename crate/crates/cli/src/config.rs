//! The JSON run configuration shared by every subcommand.

use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use hdrforge_core::color::LogGammaParams;
use hdrforge_core::degrade::DEFAULT_RHO;
use hdrforge_core::mask::MaskParams;
use hdrforge_core::pano::MotionPattern;
use hdrforge_flow::cfa::CfaBase;
use hdrforge_flow::model::{LatentShape, ModelConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CurateConfig {
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    /// Width of generated panoramas in procedural mode.
    pub panorama_width: usize,
    pub recipe: Vec<MotionPattern>,
}

impl Default for CurateConfig {
    fn default() -> Self {
        Self {
            frames: 4,
            width: 16,
            height: 16,
            panorama_width: 256,
            recipe: MotionPattern::DEFAULT_RECIPE.to_vec(),
        }
    }
}

/// Fixed values that override the sampled degradation parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DegradeConfig {
    pub rho: f64,
    pub delta: Option<f64>,
    pub sigma_s: Option<f64>,
    pub sigma_c: Option<f64>,
}

impl Default for DegradeConfig {
    fn default() -> Self {
        Self {
            rho: DEFAULT_RHO,
            delta: None,
            sigma_s: None,
            sigma_c: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub dim: usize,
    pub heads: usize,
    pub blocks: usize,
    pub ffn_mult: usize,
    pub patch: (usize, usize, usize),
}

impl Default for ModelSection {
    fn default() -> Self {
        let m = ModelConfig::default();
        Self {
            dim: m.dim,
            heads: m.heads,
            blocks: m.blocks,
            ffn_mult: m.ffn_mult,
            patch: m.patch,
        }
    }
}

impl ModelSection {
    pub fn model_config(&self, curate: &CurateConfig, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            latent: LatentShape {
                t: curate.frames,
                h: curate.height,
                w: curate.width,
                c: 3,
            },
            patch: self.patch,
            dim: self.dim,
            heads: self.heads,
            blocks: self.blocks,
            ffn_mult: self.ffn_mult,
            vocab_size,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub clip_norm: Option<f64>,
    /// Cosine-decay the learning rate to zero over `steps`.
    pub cosine_decay: bool,
    pub lora_rank: Option<usize>,
    pub lora_scale: f64,
    pub model: ModelSection,
    pub log_every: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            steps: 2000,
            batch_size: 8,
            learning_rate: 0.05,
            momentum: 0.9,
            clip_norm: Some(1.0),
            cosine_decay: false,
            lora_rank: None,
            lora_scale: 1.0,
            model: ModelSection::default(),
            log_every: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SampleSection {
    pub steps: usize,
    pub alpha_over: f64,
    pub alpha_under: f64,
    pub cfa: bool,
    pub cfa_base: CfaBase,
}

impl Default for SampleSection {
    fn default() -> Self {
        Self {
            steps: hdrforge_flow::sample::DEFAULT_STEPS,
            alpha_over: 1.0,
            alpha_under: 1.0,
            cfa: true,
            cfa_base: CfaBase::Global,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub curate: CurateConfig,
    pub degrade: DegradeConfig,
    pub mask: MaskParams,
    pub log_gamma: LogGammaParams,
    pub train: TrainSection,
    pub sample: SampleSection,
}

/// A parsed configuration plus the document it came from, echoed into
/// manifests.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub source: serde_json::Value,
}

impl LoadedConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let source: serde_json::Value = serde_json::from_str(text).context("run config is not valid JSON")?;
        let config: RunConfig = serde_json::from_value(source.clone()).context("run config schema")?;
        config.mask.validate()?;
        config.log_gamma.validate()?;
        Ok(Self { config, source })
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                Self::from_json(&text)
            }
            None => Ok(Self {
                config: RunConfig::default(),
                source: serde_json::json!({}),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let c = LoadedConfig::from_json("{}").unwrap();
        assert_eq!(c.config, RunConfig::default());
        assert_eq!(c.config.mask.alpha, 0.7);
        assert_eq!(c.config.log_gamma.gamma, 2.2);
    }

    #[test]
    fn unknown_keys_rejected_at_every_level() {
        assert!(LoadedConfig::from_json(r#"{"sed": 1}"#).is_err());
        assert!(LoadedConfig::from_json(r#"{"train": {"stepz": 1}}"#).is_err());
        assert!(LoadedConfig::from_json(r#"{"train": {"model": {"depth": 1}}}"#).is_err());
        assert!(LoadedConfig::from_json(r#"{"mask": {"tau_high": 2.0}}"#).is_err());
    }

    #[test]
    fn partial_sections_keep_other_defaults() {
        let c = LoadedConfig::from_json(r#"{"seed": 9, "train": {"steps": 5}}"#).unwrap();
        assert_eq!(c.config.seed, 9);
        assert_eq!(c.config.train.steps, 5);
        assert_eq!(c.config.train.batch_size, 8);
        assert_eq!(c.source["train"]["steps"], 5);
    }
}

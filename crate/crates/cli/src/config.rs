//! Run configuration file (TOML). Every section is optional; command-line
//! flags override file values.

use anyhow::{Context, Result};
use humdex_core::alignment::PipelineConfig;
use serde::Deserialize;
use std::path::Path;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub pipeline: Option<PipelineConfig>,
    #[serde(default)]
    pub encoder: EncoderSection,
    #[serde(default)]
    pub index: IndexSection,
    #[serde(default)]
    pub run: RunSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderSection {
    pub profile: String,
}

impl Default for EncoderSection {
    fn default() -> Self {
        Self {
            profile: "short".into(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndexSection {
    /// 0 selects `sqrt(entry count)`.
    #[serde(default)]
    pub nlist: usize,
    /// 0 selects `nlist / 4`.
    #[serde(default)]
    pub nprobe: usize,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
}

fn default_top_k() -> usize {
    humdex_core::index::DEFAULT_TOP_K
}

impl Default for IndexSection {
    fn default() -> Self {
        Self {
            nlist: 0,
            nprobe: 0,
            top_k: default_top_k(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub threads: usize,
}

fn default_seed() -> u64 {
    42
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            seed: 42,
            threads: 0,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let config: RunConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        if let Some(p) = &config.pipeline {
            p.validate().context("invalid [pipeline] section")?;
        }
        Ok(config)
    }

    pub fn pipeline(&self) -> PipelineConfig {
        self.pipeline.clone().unwrap_or_default()
    }
}

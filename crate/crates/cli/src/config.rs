use std::path::Path;

use migcast_core::data::SynthConfig;
use migcast_core::metrics::{GridConfig, MaseDenominator};
use migcast_core::models::{ModelConfig, TrainConfig, Variant};
use migcast_core::{Error, Result};
use serde::{Deserialize, Serialize};

/// Run configuration read from `--config`:
///
/// ```toml
/// [synthetic]   # generator parameters (all keys required when present)
/// [model]       # encoder_layers, decoder_layers, model_dim, heads, ...
/// [training]    # epochs, learning_rate, batch_size, window_stride, grad_clip
/// [metrics]     # mase_denominator, variants, context_years
/// ```
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub synthetic: SynthConfig,
    pub model: ModelConfig,
    pub training: TrainConfig,
    pub metrics: MetricsConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub mase_denominator: MaseDenominator,
    pub variants: Vec<Variant>,
    pub context_years: Vec<usize>,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        let g = GridConfig::default();
        Self {
            mase_denominator: g.mase_denominator,
            variants: g.variants,
            context_years: g.context_years,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: RunConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.synthetic.validate()?;
        cfg.model.validate()?;
        cfg.training.validate()?;
        Ok(cfg)
    }

    pub fn grid(&self) -> GridConfig {
        GridConfig {
            model: self.model.clone(),
            training: self.training.clone(),
            mase_denominator: self.metrics.mase_denominator,
            variants: self.metrics.variants.clone(),
            context_years: self.metrics.context_years.clone(),
        }
    }
}

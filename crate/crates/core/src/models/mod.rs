//! Encoder-decoder forecasters.
//!
//! All three variants share one decoding scheme: the decoder input is the
//! last 12 context months followed by `horizon` placeholders, and the
//! forecast is read off the placeholder positions in a single pass.

pub mod attention;
pub mod autocorr;
pub mod decomp;
pub mod distill;
pub mod layers;
mod network;
mod train;

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::standardize;
use crate::error::{Error, Result};
use crate::tensor::{Graph, ParamStore, Var};

pub use self::train::{train, TrainConfig, TrainReport};

/// Length of the start token fed to the decoder.
pub const LABEL_LEN: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Variant {
    Transformer,
    Informer,
    Autoformer,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Autoformer, Variant::Transformer, Variant::Informer];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Transformer => "Transformer",
            Variant::Informer => "Informer",
            Variant::Autoformer => "Autoformer",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown variant '{s}' (expected transformer, informer or autoformer)"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub model_dim: usize,
    pub heads: usize,
    pub ffn_dim: usize,
    /// ProbSparse sampling factor `c`.
    pub probsparse_factor: f64,
    pub decomposition_kernel: usize,
    /// Lag budget factor: `k = max(1, floor(c · ln L))`.
    pub autocorr_factor: f64,
    pub horizon: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            encoder_layers: 4,
            decoder_layers: 4,
            model_dim: 32,
            heads: 4,
            ffn_dim: 64,
            probsparse_factor: 5.0,
            decomposition_kernel: 25,
            autocorr_factor: 1.0,
            horizon: 12,
        }
    }
}

impl ModelConfig {
    /// Small single-layer configuration for gradient checks.
    pub fn tiny(model_dim: usize) -> Self {
        Self {
            encoder_layers: 1,
            decoder_layers: 1,
            model_dim,
            heads: 2,
            ffn_dim: 2 * model_dim,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.model_dim == 0 || self.model_dim % 2 != 0 {
            return Err(Error::Config(format!("model_dim must be even, got {}", self.model_dim)));
        }
        if self.heads == 0 || self.model_dim % self.heads != 0 {
            return Err(Error::Config(format!(
                "model_dim {} is not divisible by {} heads",
                self.model_dim, self.heads
            )));
        }
        if self.decomposition_kernel % 2 == 0 {
            return Err(Error::Config(format!(
                "decomposition_kernel must be odd, got {}",
                self.decomposition_kernel
            )));
        }
        if self.encoder_layers == 0 || self.decoder_layers == 0 || self.ffn_dim == 0 || self.horizon == 0 {
            return Err(Error::Config("layer counts, ffn_dim and horizon must be positive".into()));
        }
        if !(self.probsparse_factor >= 1.0) || !(self.autocorr_factor > 0.0) {
            return Err(Error::Config("probsparse_factor must be >= 1 and autocorr_factor > 0".into()));
        }
        Ok(())
    }
}

/// A forecaster bound to one context length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastModel {
    pub variant: Variant,
    pub config: ModelConfig,
    pub context_years: usize,
    pub params: ParamStore,
}

const MODEL_FORMAT: &str = "migcast-model";

impl ForecastModel {
    pub fn new(variant: Variant, config: ModelConfig, context_years: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        if !(1..=9).contains(&context_years) {
            return Err(Error::Config(format!("context_years must be in 1..=9, got {context_years}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = network::init_params(variant, &config, &mut rng);
        Ok(Self {
            variant,
            config,
            context_years,
            params,
        })
    }

    pub fn context_len(&self) -> usize {
        self.context_years * 12
    }

    /// Forward pass on a standardized context; returns the `[horizon, 1]`
    /// standardized prediction.
    pub fn forward(&self, g: &mut Graph, scaled_context: &[f64], trainable: bool) -> Result<(Var, Vec<(String, Var)>)> {
        if scaled_context.len() != self.context_len() {
            return Err(Error::shape(
                "forecast",
                format!(
                    "context has {} months, model expects {}",
                    scaled_context.len(),
                    self.context_len()
                ),
            ));
        }
        let bound = layers::Bound::new(g, &self.params, trainable);
        let out = network::forward(self.variant, &self.config, g, &bound, scaled_context)?;
        let vars = bound.iter().map(|(n, v)| (n.clone(), *v)).collect();
        Ok((out, vars))
    }

    /// Forecast `horizon` months in hundreds of persons. Values may be
    /// negative; clipping is left to reporting.
    pub fn forecast(&self, context: &[f64]) -> Result<Vec<f64>> {
        if context.len() != self.context_len() {
            return Err(Error::shape(
                "forecast",
                format!("context has {} months, model expects {}", context.len(), self.context_len()),
            ));
        }
        let st = standardize(context)?;
        let mut g = Graph::new();
        let (out, _) = self.forward(&mut g, &st.scaled, false)?;
        Ok(g.value(out).data().iter().map(|&z| st.invert(z)).collect())
    }

    pub fn save(&self, writer: impl Write) -> Result<()> {
        let doc = serde_json::json!({
            "format": MODEL_FORMAT,
            "version": 1,
            "model": self,
        });
        serde_json::to_writer(writer, &doc).map_err(|e| Error::Config(format!("writing model: {e}")))
    }

    pub fn load(reader: impl Read) -> Result<Self> {
        let doc: serde_json::Value =
            serde_json::from_reader(reader).map_err(|e| Error::Config(format!("reading model: {e}")))?;
        if doc.get("format").and_then(|f| f.as_str()) != Some(MODEL_FORMAT) {
            return Err(Error::Config("not a migcast model checkpoint".into()));
        }
        let model: ForecastModel = serde_json::from_value(doc["model"].clone())
            .map_err(|e| Error::Config(format!("reading model: {e}")))?;
        let expected = ForecastModel::new(model.variant, model.config.clone(), model.context_years, 0)?;
        for (name, t) in expected.params.iter() {
            match model.params.get(name) {
                Some(p) if p.shape() == t.shape() => {}
                _ => return Err(Error::Config(format!("checkpoint parameter '{name}' missing or misshapen"))),
            }
        }
        Ok(model)
    }

    pub fn save_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.save(std::io::BufWriter::new(f))
    }

    pub fn load_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::load(std::io::BufReader::new(f))
    }
}

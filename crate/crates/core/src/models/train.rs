use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{standardize, Window};
use crate::error::{Error, Result};
use crate::models::ForecastModel;
use crate::tensor::{Adam, Graph, OptimizerState, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Months between consecutive training window starts.
    pub window_stride: usize,
    /// Global gradient-norm clip; `None` disables clipping.
    pub grad_clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            learning_rate: 1e-3,
            batch_size: 8,
            window_stride: 1,
            grad_clip: Some(1.0),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.window_stride == 0 {
            return Err(Error::Config("batch_size and window_stride must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if matches!(self.grad_clip, Some(c) if !(c > 0.0)) {
            return Err(Error::Config("grad_clip must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    /// Mean standardized MSE per epoch.
    pub loss_trace: Vec<f64>,
}

impl TrainReport {
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "epoch,loss")?;
        for (i, l) in self.loss_trace.iter().enumerate() {
            writeln!(w, "{},{l}", i + 1)?;
        }
        Ok(())
    }
}

/// Loss and parameter gradients for one window, both in the window's
/// standardized units.
pub(crate) fn window_gradient(model: &ForecastModel, window: &Window) -> Result<(f64, BTreeMap<String, Tensor>)> {
    let st = standardize(&window.context)?;
    let target: Vec<f64> = window.target.iter().map(|&y| st.apply(y)).collect();
    let mut g = Graph::new();
    let (pred, vars) = model.forward(&mut g, &st.scaled, true)?;
    let target = g.constant(Tensor::column(&target));
    let loss = g.mse_loss(pred, target)?;
    g.backward(loss)?;
    let value = g.value(loss).item();
    let grads = vars
        .into_iter()
        .map(|(name, v)| {
            let grad = g.grad(v).unwrap_or_else(|| Tensor::zeros(g.shape(v)));
            (name, grad)
        })
        .collect();
    Ok((value, grads))
}

/// Mini-batch Adam on standardized windows. Shuffling is seeded, so equal
/// inputs give bit-identical parameters.
pub fn train(model: &mut ForecastModel, windows: &[Window], cfg: &TrainConfig, seed: u64) -> Result<TrainReport> {
    cfg.validate()?;
    if windows.is_empty() {
        return Err(Error::Config("no training windows".into()));
    }
    let horizon = model.config.horizon;
    for w in windows {
        if w.context.len() != model.context_len() || w.target.len() != horizon {
            return Err(Error::shape(
                "train",
                format!(
                    "window {}+{} does not match model {}+{horizon}",
                    w.context.len(),
                    w.target.len(),
                    model.context_len()
                ),
            ));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut opt = OptimizerState::new(Adam::new(cfg.learning_rate));
    let mut order: Vec<usize> = (0..windows.len()).collect();
    let mut report = TrainReport::default();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut acc: BTreeMap<String, Tensor> = BTreeMap::new();
            for &i in batch {
                let (loss, grads) = window_gradient(model, &windows[i])?;
                if !loss.is_finite() {
                    return Err(Error::Fit(format!("non-finite loss in epoch {}", epoch + 1)));
                }
                total += loss;
                for (name, gr) in grads {
                    match acc.get_mut(&name) {
                        Some(a) => a.data_mut().iter_mut().zip(gr.data()).for_each(|(x, y)| *x += y),
                        None => {
                            acc.insert(name, gr);
                        }
                    }
                }
            }
            let n = batch.len() as f64;
            let mut norm_sq = 0.0;
            for t in acc.values_mut() {
                for x in t.data_mut() {
                    *x /= n;
                    norm_sq += *x * *x;
                }
            }
            if let Some(clip) = cfg.grad_clip {
                let norm = norm_sq.sqrt();
                if norm > clip {
                    let k = clip / norm;
                    acc.values_mut().for_each(|t| t.data_mut().iter_mut().for_each(|x| *x *= k));
                }
            }
            opt.adam_step(&mut model.params, &acc)?;
        }
        let mean = total / windows.len() as f64;
        log::debug!("epoch {} loss {mean:.6}", epoch + 1);
        report.loss_trace.push(mean);
    }
    Ok(report)
}

//! Monthly migration forecasting and causal what-if analysis.
//!
//! The crate is split along the pipeline:
//!
//! - [`data`]: CSV ingestion, windowing, standardization and the synthetic generator.
//! - [`tensor`]: a small reverse-mode autodiff engine with an Adam optimizer.
//! - [`models`]: Transformer, Informer and Autoformer style forecasters.
//! - [`metrics`]: MASE / sMAPE and the variant × context-length evaluation grid.
//! - [`causal`]: the Province → streams → Total conditional-Gaussian network.

pub mod causal;
pub mod data;
pub mod error;
pub mod metrics;
pub mod models;
pub mod tensor;

pub use error::{Error, Result};

use serde::{Deserialize, Serialize};

use crate::data::{MonthlySeries, YearMonth};
use crate::error::{Error, Result};

/// Years of monthly history fed to a forecaster and the months to predict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub context_years: usize,
    pub horizon_months: usize,
}

impl WindowSpec {
    pub fn new(context_years: usize, horizon_months: usize) -> Result<Self> {
        if !(1..=9).contains(&context_years) {
            return Err(Error::Config(format!(
                "context_years must be in 1..=9, got {context_years}"
            )));
        }
        if horizon_months == 0 {
            return Err(Error::Config("horizon_months must be at least 1".into()));
        }
        Ok(Self {
            context_years,
            horizon_months,
        })
    }

    pub fn years(context_years: usize) -> Result<Self> {
        Self::new(context_years, 12)
    }

    pub fn context_len(&self) -> usize {
        self.context_years * 12
    }
}

/// A (context, target) pair in hundreds of persons.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub context: Vec<f64>,
    pub target: Vec<f64>,
}

/// Cut the context ending the month before `split_month` and the target
/// starting at it.
pub fn split_window(
    series: &MonthlySeries,
    spec: WindowSpec,
    split_month: YearMonth,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let ctx = spec.context_len() as i64;
    let horizon = spec.horizon_months as i64;
    let from = split_month.add_months(-ctx);
    let to = split_month.add_months(horizon);
    let offset = series.start.months_until(from);
    let end = series.start.months_until(to);
    if offset < 0 || end > series.len() as i64 {
        let missing_from = if offset < 0 { from } else { series.end() };
        let missing_to = if offset < 0 { series.start.min(to) } else { to };
        return Err(Error::Range(format!(
            "{}/{} covers {} to {} but the window needs {} to {} (missing {} to {})",
            series.province,
            series.stream,
            series.start,
            series.end().add_months(-1),
            from,
            to.add_months(-1),
            missing_from,
            missing_to.add_months(-1)
        )));
    }
    let offset = offset as usize;
    let split = offset + ctx as usize;
    Ok((
        series.values[offset..split].to_vec(),
        series.values[split..end as usize].to_vec(),
    ))
}

/// Windows whose target ends at or before index `limit`, with start
/// positions `stride` apart. The latest possible window is always included;
/// output is ordered by start.
pub fn training_windows(values: &[f64], spec: WindowSpec, limit: usize, stride: usize) -> Vec<Window> {
    let ctx = spec.context_len();
    let span = ctx + spec.horizon_months;
    let limit = limit.min(values.len());
    if limit < span {
        return Vec::new();
    }
    let stride = stride.max(1);
    // Anchor on the latest window so the freshest history is always used.
    let last_start = limit - span;
    let mut starts: Vec<usize> = (0..=last_start).rev().step_by(stride).collect();
    starts.reverse();
    starts
        .into_iter()
        .map(|s| Window {
            context: values[s..s + ctx].to_vec(),
            target: values[s + ctx..s + span].to_vec(),
        })
        .collect()
}

/// Result of [`standardize`]; `scaled = (x - loc) / scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardized {
    pub scaled: Vec<f64>,
    pub loc: f64,
    pub scale: f64,
}

impl Standardized {
    pub fn apply(&self, x: f64) -> f64 {
        (x - self.loc) / self.scale
    }

    pub fn invert(&self, z: f64) -> f64 {
        z * self.scale + self.loc
    }
}

pub const MIN_SCALE: f64 = 1e-8;

/// Population-std standardization with the scale floored at 1e-8.
pub fn standardize(context: &[f64]) -> Result<Standardized> {
    if context.is_empty() {
        return Err(Error::Value("cannot standardize an empty context".into()));
    }
    let n = context.len() as f64;
    let loc = context.iter().sum::<f64>() / n;
    let var = context.iter().map(|x| (x - loc).powi(2)).sum::<f64>() / n;
    let scale = var.sqrt().max(MIN_SCALE);
    let scaled = context.iter().map(|x| (x - loc) / scale).collect();
    Ok(Standardized { scaled, loc, scale })
}

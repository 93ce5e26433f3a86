//! Forecast accuracy metrics and the variant × context-length grid.

mod grid;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use self::grid::{
    eval_grid, holdout_training_windows, naive_baseline, render_table, write_grid_csv, BaselineScore, EvalRecord,
    GridConfig, GRID_CSV_HEADER,
};

/// Which series the MASE denominator differences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaseDenominator {
    /// `(1/(T−1)) Σ_{t≥2} |y_t − y′_{t−1}|`: actuals against lagged predictions.
    #[default]
    AsPrinted,
    /// `(1/(T−1)) Σ_{t≥2} |y_t − y_{t−1}|`: the lag-1 naive forecast of the actuals.
    NaiveActuals,
}

impl MaseDenominator {
    pub fn name(self) -> &'static str {
        match self {
            MaseDenominator::AsPrinted => "as-printed",
            MaseDenominator::NaiveActuals => "naive-actuals",
        }
    }
}

impl fmt::Display for MaseDenominator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MaseDenominator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "as-printed" => Ok(MaseDenominator::AsPrinted),
            "naive-actuals" => Ok(MaseDenominator::NaiveActuals),
            other => Err(format!("unknown MASE denominator '{other}' (expected as-printed or naive-actuals)")),
        }
    }
}

fn check_lengths(op: &'static str, y: &[f64], y_pred: &[f64], min: usize) -> Result<()> {
    if y.len() != y_pred.len() {
        return Err(Error::shape(op, format!("{} actuals vs {} predictions", y.len(), y_pred.len())));
    }
    if y.len() < min {
        return Err(Error::shape(op, format!("need at least {min} points, got {}", y.len())));
    }
    Ok(())
}

/// Mean absolute scaled error over one test window.
pub fn mase(y: &[f64], y_pred: &[f64], denominator: MaseDenominator) -> Result<f64> {
    check_lengths("mase", y, y_pred, 2)?;
    let t = y.len() as f64;
    let num = y.iter().zip(y_pred).map(|(a, p)| (a - p).abs()).sum::<f64>() / t;
    let lagged = match denominator {
        MaseDenominator::AsPrinted => y_pred,
        MaseDenominator::NaiveActuals => y,
    };
    let den = y[1..].iter().zip(lagged).map(|(a, p)| (a - p).abs()).sum::<f64>() / (t - 1.0);
    if den == 0.0 {
        return Err(Error::DegenerateDenominator);
    }
    Ok(num / den)
}

/// Symmetric mean absolute percentage error as a fraction in `[0, 2]`;
/// terms with `y_t = y′_t = 0` contribute 0.
pub fn smape(y: &[f64], y_pred: &[f64]) -> Result<f64> {
    check_lengths("smape", y, y_pred, 1)?;
    let total: f64 = y
        .iter()
        .zip(y_pred)
        .map(|(a, p)| {
            let den = a.abs() + p.abs();
            if den == 0.0 {
                0.0
            } else {
                2.0 * (a - p).abs() / den
            }
        })
        .sum();
    Ok(total / y.len() as f64)
}

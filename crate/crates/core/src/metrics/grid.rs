use std::fmt::Write as _;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{training_windows, MonthlySeries, Stream, Window, WindowSpec};
use crate::error::{Error, Result};
use crate::metrics::{mase, smape, MaseDenominator};
use crate::models::{train, ForecastModel, ModelConfig, TrainConfig, Variant};

const HORIZON: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub model: ModelConfig,
    pub training: TrainConfig,
    pub mase_denominator: MaseDenominator,
    pub variants: Vec<Variant>,
    pub context_years: Vec<usize>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            training: TrainConfig::default(),
            mase_denominator: MaseDenominator::default(),
            variants: Variant::ALL.to_vec(),
            context_years: (1..=9).collect(),
        }
    }
}

/// One grid cell: metrics averaged over provinces with equal weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub variant: Variant,
    pub context_years: usize,
    /// `None` when some province's MASE denominator vanished.
    pub mase: Option<f64>,
    pub smape: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineScore {
    pub context_years: usize,
    pub mase: Option<f64>,
    pub smape: f64,
}

fn total_series(data: &[MonthlySeries]) -> Result<Vec<&MonthlySeries>> {
    let totals: Vec<&MonthlySeries> = data.iter().filter(|s| s.stream == Stream::Total).collect();
    if totals.is_empty() {
        return Err(Error::Value("dataset has no Total series".into()));
    }
    Ok(totals)
}

fn check_support(totals: &[&MonthlySeries], context_years: usize) -> Result<()> {
    let need = context_years * 12 + HORIZON;
    for s in totals {
        if s.len() < need {
            return Err(Error::Range(format!(
                "{}/{} has {} months; a {context_years}-year context plus a {HORIZON}-month hold-out needs {need}",
                s.province,
                s.stream,
                s.len()
            )));
        }
    }
    Ok(())
}

/// Context and hold-out year at the end of a series.
fn holdout(values: &[f64], context_years: usize) -> (&[f64], &[f64]) {
    let n = values.len();
    let ctx = context_years * 12;
    (&values[n - HORIZON - ctx..n - HORIZON], &values[n - HORIZON..])
}

fn score(
    totals: &[&MonthlySeries],
    context_years: usize,
    denominator: MaseDenominator,
    forecast: impl Fn(&[f64]) -> Result<Vec<f64>>,
) -> Result<(Option<f64>, f64)> {
    let mut mase_sum = 0.0;
    let mut degenerate = false;
    let mut smape_sum = 0.0;
    for s in totals {
        let (ctx, actual) = holdout(&s.values, context_years);
        let pred = forecast(ctx)?;
        match mase(actual, &pred, denominator) {
            Ok(v) => mase_sum += v,
            Err(Error::DegenerateDenominator) => {
                log::warn!("{} {context_years}y: degenerate MASE denominator", s.province);
                degenerate = true;
            }
            Err(e) => return Err(e),
        }
        smape_sum += smape(actual, &pred)?;
    }
    let n = totals.len() as f64;
    Ok(((!degenerate).then_some(mase_sum / n), smape_sum / n))
}

fn cell_seed(seed: u64, variant: Variant, context_years: usize) -> u64 {
    let v = Variant::ALL.iter().position(|x| *x == variant).unwrap_or(0) as u64;
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (v << 8 | context_years as u64)
}

fn pooled(totals: &[&MonthlySeries], context_years: usize, stride: usize) -> Result<Vec<Window>> {
    let spec = WindowSpec::new(context_years, HORIZON)?;
    Ok(totals
        .iter()
        .flat_map(|s| training_windows(&s.values, spec, s.len() - HORIZON, stride))
        .collect())
}

/// Training windows of every province's Total series, stopping before the
/// held-out final year.
pub fn holdout_training_windows(data: &[MonthlySeries], context_years: usize, stride: usize) -> Result<Vec<Window>> {
    WindowSpec::years(context_years)?;
    let totals = total_series(data)?;
    check_support(&totals, context_years)?;
    pooled(&totals, context_years, stride)
}

fn run_cell(
    totals: &[&MonthlySeries],
    cfg: &GridConfig,
    variant: Variant,
    context_years: usize,
    seed: u64,
) -> Result<EvalRecord> {
    let windows = pooled(totals, context_years, cfg.training.window_stride)?;
    let cell = cell_seed(seed, variant, context_years);
    let mut model = ForecastModel::new(variant, cfg.model.clone(), context_years, cell)?;
    let report = train(&mut model, &windows, &cfg.training, cell)?;
    log::info!(
        "{variant} {context_years}y: {} windows, final loss {:.4}",
        windows.len(),
        report.loss_trace.last().copied().unwrap_or(f64::NAN)
    );
    let (mase, smape) = score(totals, context_years, cfg.mase_denominator, |ctx| model.forecast(ctx))?;
    Ok(EvalRecord {
        variant,
        context_years,
        mase,
        smape,
    })
}

/// Train one model per (variant, context length) on the Total streams
/// before the final year and score its forecast of that year. Cells run in
/// parallel; results come back in variant-major order.
pub fn eval_grid(data: &[MonthlySeries], cfg: &GridConfig, seed: u64) -> Result<Vec<EvalRecord>> {
    let totals = total_series(data)?;
    for &cy in &cfg.context_years {
        WindowSpec::years(cy)?;
        check_support(&totals, cy)?;
    }
    let cells: Vec<(Variant, usize)> = cfg
        .variants
        .iter()
        .flat_map(|&v| cfg.context_years.iter().map(move |&cy| (v, cy)))
        .collect();
    cells
        .par_iter()
        .map(|&(v, cy)| run_cell(&totals, cfg, v, cy, seed))
        .collect()
}

/// Scores of the "repeat the last context month" forecaster through the
/// same hold-out and averaging as [`eval_grid`].
pub fn naive_baseline(data: &[MonthlySeries], context_years: usize, denominator: MaseDenominator) -> Result<BaselineScore> {
    WindowSpec::years(context_years)?;
    let totals = total_series(data)?;
    check_support(&totals, context_years)?;
    let (mase, smape) = score(&totals, context_years, denominator, |ctx| {
        Ok(vec![*ctx.last().expect("non-empty context"); HORIZON])
    })?;
    Ok(BaselineScore {
        context_years,
        mase,
        smape,
    })
}

pub const GRID_CSV_HEADER: &str = "variant,context_years,mase,smape";

pub fn write_grid_csv(records: &[EvalRecord], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "{GRID_CSV_HEADER}")?;
    for r in records {
        let mase = r.mase.map_or_else(|| "deg".to_string(), |m| format!("{m:.6}"));
        writeln!(w, "{},{},{mase},{:.6}", r.variant, r.context_years, r.smape)?;
    }
    Ok(())
}

/// Text table with one row per context length and a MASE/sMAPE column
/// pair per variant. The smallest value of each metric carries a `*`
/// (first occurrence only); degenerate cells print `deg`.
pub fn render_table(records: &[EvalRecord]) -> String {
    let mut variants: Vec<Variant> = Vec::new();
    let mut years: Vec<usize> = Vec::new();
    for r in records {
        if !variants.contains(&r.variant) {
            variants.push(r.variant);
        }
        if !years.contains(&r.context_years) {
            years.push(r.context_years);
        }
    }
    years.sort_unstable();
    let find = |v: Variant, y: usize| records.iter().find(|r| r.variant == v && r.context_years == y);
    let ordered: Vec<&EvalRecord> = years
        .iter()
        .flat_map(|&y| variants.iter().filter_map(move |&v| find(v, y)))
        .collect();
    let argmin = |key: &dyn Fn(&EvalRecord) -> Option<f64>| {
        let mut best: Option<(f64, &EvalRecord)> = None;
        for r in &ordered {
            if let Some(x) = key(r) {
                if best.map_or(true, |(b, _)| x < b) {
                    best = Some((x, r));
                }
            }
        }
        best.map(|(_, r)| (r.variant, r.context_years))
    };
    let best_mase = argmin(&|r| r.mase);
    let best_smape = argmin(&|r| Some(r.smape));

    let mut out = String::new();
    let _ = write!(out, "{:<6}", "");
    for v in &variants {
        let _ = write!(out, "| {:<19}", v.name());
    }
    out.push('\n');
    let _ = write!(out, "{:<6}", "(yr)");
    for _ in &variants {
        let _ = write!(out, "| {:<9} {:<9}", "MASE", "sMAPE");
    }
    out.push('\n');
    out.push_str(&"-".repeat(6 + 21 * variants.len()));
    out.push('\n');
    for &y in &years {
        let _ = write!(out, "{y:<6}");
        for &v in &variants {
            let (m, s) = match find(v, y) {
                Some(r) => {
                    let mark = |best: Option<(Variant, usize)>| if best == Some((v, y)) { "*" } else { "" };
                    let m = r
                        .mase
                        .map_or_else(|| "deg".to_string(), |x| format!("{x:.4}{}", mark(best_mase)));
                    (m, format!("{:.4}{}", r.smape, mark(best_smape)))
                }
                None => ("-".to_string(), "-".to_string()),
            };
            let _ = write!(out, "| {m:<9} {s:<9}");
        }
        out.push('\n');
    }
    out
}

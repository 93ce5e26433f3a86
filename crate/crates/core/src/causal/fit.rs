use crate::causal::{CGNetwork, NodeParam, ProvinceEntry, Source, TotalMode};
use crate::data::{find_series, MonthlySeries, Province, Stream};
use crate::error::{Error, Result};

/// Floor applied to fitted standard deviations.
pub const MIN_STD: f64 = 1e-6;

fn fit_node(data: &[MonthlySeries], province: Province, stream: Stream) -> Result<NodeParam> {
    let s = find_series(data, province, stream)
        .ok_or_else(|| Error::Fit(format!("no {stream} series for {province}")))?;
    let n = s.values.len();
    if n < 2 {
        return Err(Error::Fit(format!("{province}/{stream} has {n} month(s); need at least 2")));
    }
    let mean = s.values.iter().sum::<f64>() / n as f64;
    let var = s.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let mut std = var.sqrt();
    if std < MIN_STD {
        log::warn!("{province}/{stream}: zero variance, std floored at {MIN_STD}");
        std = MIN_STD;
    }
    Ok(NodeParam {
        mean,
        std,
        source: Some(Source::Fitted),
    })
}

/// Sample mean and unbiased standard deviation per province and stream,
/// uniform prior. Total gets its own parameters (fitted mode) exactly when
/// every province has a Total series.
pub fn fit_parameters(data: &[MonthlySeries]) -> Result<CGNetwork> {
    let has_total = Province::ALL
        .iter()
        .all(|&p| find_series(data, p, Stream::Total).is_some());
    let mode = if has_total { TotalMode::Fitted } else { TotalMode::Structural };
    let provinces = Province::ALL
        .iter()
        .map(|&p| {
            Ok(ProvinceEntry {
                province: p,
                prior: 0.1,
                sponsor: fit_node(data, p, Stream::Sponsor)?,
                refugee: fit_node(data, p, Stream::Refugee)?,
                economic: fit_node(data, p, Stream::Economic)?,
                total: if has_total { Some(fit_node(data, p, Stream::Total)?) } else { None },
                published_total: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    CGNetwork::new(mode, None, provinces)
}

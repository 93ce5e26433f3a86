//! Period discovery by autocorrelation and lag-rolled aggregation.

use crate::error::{Error, Result};
use crate::models::attention::MhaVars;
use crate::tensor::spectral::circular_cross_correlation;
use crate::tensor::{Graph, Tensor, Var};

/// Circular autocorrelation normalized by its lag-0 value, computed as the
/// inverse FFT of the power spectrum. An all-zero input yields `[1, 0, ...]`.
pub fn autocorrelation(x: &[f64]) -> Result<Vec<f64>> {
    if x.len() < 2 {
        return Err(Error::shape("autocorrelation", format!("length {} < 2", x.len())));
    }
    let r = circular_cross_correlation(x, x);
    let r0 = r[0];
    if r0 <= 0.0 {
        let mut out = vec![0.0; x.len()];
        out[0] = 1.0;
        return Ok(out);
    }
    Ok(r.into_iter().map(|v| v / r0).collect())
}

const TIE_TOLERANCE: f64 = 1e-9;

/// Indices of the `k` largest scores, highest first. Scores within a
/// relative 1e-9 of the current maximum count as tied and the lower lag
/// wins, so mirror lags `τ` and `L − τ` (equal up to rounding for
/// single-channel inputs) resolve the same way every time.
pub fn top_lags(scores: &[f64], k: usize) -> Vec<usize> {
    let mut taken = vec![false; scores.len()];
    let mut out = Vec::with_capacity(k.min(scores.len()));
    while out.len() < k.min(scores.len()) {
        let best = (0..scores.len())
            .filter(|&i| !taken[i])
            .map(|i| scores[i])
            .fold(f64::NEG_INFINITY, f64::max);
        let tol = TIE_TOLERANCE * best.abs().max(f64::MIN_POSITIVE);
        let pick = (0..scores.len())
            .find(|&i| !taken[i] && scores[i] >= best - tol)
            .expect("an untaken score attains the maximum");
        taken[pick] = true;
        out.push(pick);
    }
    out
}

/// Lag budget `max(1, floor(c · ln L))`.
pub fn lag_budget(len: usize, factor: f64) -> usize {
    ((factor * (len as f64).ln()).floor() as usize).max(1)
}

/// `Σ_τ softmax(selected scores)_τ · roll(V, τ)` over the top-`k` lags of a
/// `[1, L]` score row. `roll(V, τ)[t] = V[(t − τ) mod L]`.
pub fn time_delay_aggregation(g: &mut Graph, v: Var, scores: Var, k: usize) -> Result<Var> {
    let len = g.shape(v)[0];
    if g.value(scores).numel() != len {
        return Err(Error::shape(
            "time_delay_aggregation",
            format!("{} scores for {len} rows", g.value(scores).numel()),
        ));
    }
    if k == 0 || k > len {
        return Err(Error::Config(format!("cannot select {k} of {len} candidate lags")));
    }
    let lags = top_lags(g.value(scores).data(), k);
    let picked: Vec<Var> = lags
        .iter()
        .map(|&tau| g.slice(scores, 1, tau, 1))
        .collect::<Result<_>>()?;
    let row = if picked.len() == 1 { picked[0] } else { g.concat(&picked, 1)? };
    let weights = g.softmax(row);
    let mut acc: Option<Var> = None;
    for (i, &tau) in lags.iter().enumerate() {
        let rolled = g.roll_rows(v, tau)?;
        let w = g.slice(weights, 1, i, 1)?;
        let term = g.mul_scalar(rolled, w)?;
        acc = Some(match acc {
            Some(a) => g.add(a, term)?,
            None => term,
        });
    }
    Ok(acc.expect("k >= 1"))
}

/// Keys/values aligned to the query length: truncated to the most recent
/// rows, or zero-padded at the end.
fn align(g: &mut Graph, x: Var, len: usize) -> Result<Var> {
    let (n, m) = (g.shape(x)[0], g.shape(x)[1]);
    match n.cmp(&len) {
        std::cmp::Ordering::Equal => Ok(x),
        std::cmp::Ordering::Greater => g.slice(x, 0, n - len, len),
        std::cmp::Ordering::Less => {
            let pad = g.constant(Tensor::zeros(&[len - n, m]));
            g.concat(&[x, pad], 0)
        }
    }
}

/// Auto-correlation block: lag scores from the query/key cross-correlation
/// (averaged over channels) select the top lags, whose rolled values are
/// blended by softmaxed scores. Heads share weights since scores are
/// averaged over all channels, so a single full-width head is used.
pub fn auto_correlation(g: &mut Graph, p: &MhaVars, x_q: Var, x_kv: Var, factor: f64) -> Result<Var> {
    let len = g.shape(x_q)[0];
    let q = p.query.forward(g, x_q)?;
    let k = p.key.forward(g, x_kv)?;
    let v = p.value.forward(g, x_kv)?;
    let k = align(g, k, len)?;
    let v = align(g, v, len)?;
    let scores = g.lag_correlation(q, k)?;
    let agg = time_delay_aggregation(g, v, scores, lag_budget(len, factor).min(len))?;
    p.out.forward(g, agg)
}

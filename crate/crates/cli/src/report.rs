use std::fmt::Write as _;

use migcast_core::causal::{GaussianMixture, StreamMeans};
use migcast_core::data::{Province, Stream};

/// Basis points (0.01%) per whole.
const UNITS: u64 = 10_000;

/// Round probabilities to 0.01% so the displayed values sum to exactly
/// 100.00%, giving leftover units to the largest remainders.
pub fn largest_remainder(probs: &[f64]) -> Vec<u64> {
    let total: f64 = probs.iter().sum();
    let scaled: Vec<f64> = probs.iter().map(|p| p / total * UNITS as f64).collect();
    let mut units: Vec<u64> = scaled.iter().map(|x| x.floor() as u64).collect();
    let short = UNITS.saturating_sub(units.iter().sum());
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = scaled[a] - scaled[a].floor();
        let rb = scaled[b] - scaled[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(short as usize) {
        units[i] += 1;
    }
    units
}

pub fn percent(units: u64) -> String {
    format!("{}.{:02}%", units / 100, units % 100)
}

fn other_label(threshold: f64) -> String {
    format!("other (<{}%)", threshold * 100.0)
}

/// Rows shown for a province posterior: provinces at or above `threshold`
/// individually, the rest pooled into one row.
pub fn province_rows(posterior: &[(Province, f64)], threshold: f64) -> Vec<(String, u64)> {
    let (shown, hidden): (Vec<_>, Vec<_>) = posterior.iter().partition(|(_, p)| *p >= threshold);
    let mut labels: Vec<String> = shown.iter().map(|(p, _)| format!("{} ({})", p.name(), p.code())).collect();
    let mut probs: Vec<f64> = shown.iter().map(|(_, p)| *p).collect();
    let rest: f64 = hidden.iter().map(|(_, p)| p).sum();
    if rest > 0.0 {
        labels.push(other_label(threshold));
        probs.push(rest);
    }
    labels.into_iter().zip(largest_remainder(&probs)).collect()
}

pub fn province_section(posterior: &[(Province, f64)], threshold: f64) -> String {
    let mut out = String::from("P(Province | evidence)\n");
    let rows = province_rows(posterior, threshold);
    for (label, units) in &rows {
        let _ = writeln!(out, "  {label:<28} {:>8}", percent(*units));
    }
    let sum: u64 = rows.iter().map(|r| r.1).sum();
    let _ = writeln!(out, "  {:<28} {:>8}", "sum", percent(sum));
    out
}

pub fn node_section(node: Stream, mix: &GaussianMixture, threshold: f64) -> String {
    let n = mix.components.len();
    let mut out = format!("P({} | evidence): {n} component{}\n", node.name(), if n == 1 { "" } else { "s" });
    let _ = writeln!(out, "  {:<8} {:<7} {:>9} {:>10} {:>10}", "province", "crisis", "weight", "mean", "std");
    let mut hidden = 0;
    for c in &mix.components {
        if c.weight < threshold {
            hidden += 1;
            continue;
        }
        let crisis = match c.crisis {
            None => "-",
            Some(true) => "yes",
            Some(false) => "no",
        };
        let _ = writeln!(
            out,
            "  {:<8} {:<7} {:>8.2}% {:>10.2} {:>10.2}",
            c.province.code(),
            crisis,
            c.weight * 100.0,
            c.gaussian.mean,
            c.gaussian.std
        );
    }
    if hidden > 0 {
        let _ = writeln!(out, "  ({hidden} components below {}% not shown)", threshold * 100.0);
    }
    let _ = writeln!(out, "  mixture mean {:.2}  std {:.2}", mix.mean(), mix.std());
    out
}

pub fn decomposition_section(d: &StreamMeans) -> String {
    let mut out = String::from("Posterior stream means\n");
    for (name, v) in [("Sponsor", d.sponsor), ("Refugee", d.refugee), ("Economic", d.economic)] {
        let _ = writeln!(out, "  {name:<10} {v:>10.3}");
    }
    let _ = writeln!(out, "  {:<10} {:>10.3}", "sum", d.sponsor + d.refugee + d.economic);
    let _ = writeln!(out, "  {:<10} {:>10.3}", "Total", d.total);
    out
}

pub fn decomposition_csv(d: &StreamMeans) -> String {
    let mut out = String::from("province,weight,sponsor,refugee,economic,total\n");
    for (p, w, [s, r, e, t]) in &d.by_province {
        let _ = writeln!(out, "{},{w},{s},{r},{e},{t}", p.code());
    }
    let _ = writeln!(out, "all,1,{},{},{},{}", d.sponsor, d.refugee, d.economic, d.total);
    out
}

pub fn province_csv(posterior: &[(Province, f64)]) -> String {
    let mut out = String::from("province,probability\n");
    for (p, w) in posterior {
        let _ = writeln!(out, "{},{w}", p.code());
    }
    out
}

const POINTS_PER_COMPONENT: usize = 401;
const HALF_WIDTH_SD: f64 = 8.0;

/// Evaluation points: a dense patch around every component, merged.
pub fn density_grid(mix: &GaussianMixture) -> Vec<f64> {
    let mut xs: Vec<f64> = Vec::new();
    for c in mix.components.iter().filter(|c| c.weight > 0.0) {
        let (m, s) = (c.gaussian.mean, c.gaussian.std);
        let lo = m - HALF_WIDTH_SD * s;
        let step = 2.0 * HALF_WIDTH_SD * s / (POINTS_PER_COMPONENT - 1) as f64;
        xs.extend((0..POINTS_PER_COMPONENT).map(|i| lo + step * i as f64));
    }
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    xs
}

pub fn density_csv(mix: &GaussianMixture) -> String {
    let mut out = String::from("x,density\n");
    for x in density_grid(mix) {
        let _ = writeln!(out, "{x},{}", mix.pdf(x));
    }
    out
}

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use migcast_core::causal::{
    decompose_total, fit_parameters, posterior_node, posterior_province, CGNetwork, Evidence, Finding, Gaussian,
};
use migcast_core::data::{gen_synthetic_with, load_csv, training_windows, write_csv, MonthlySeries, Stream, WindowSpec};
use migcast_core::metrics::{eval_grid, naive_baseline, render_table, write_grid_csv};
use migcast_core::models::{train, ForecastModel, Variant};
use migcast_core::Error;

use crate::config::RunConfig;
use crate::report;
use crate::{Case, Cli, Command};

const HORIZON: usize = 12;
/// Floor for the spread of a forecast handed to the network as evidence.
const MIN_HANDOFF_STD: f64 = 1e-3;

struct Output {
    dir: PathBuf,
}

impl Output {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Self { dir: dir.to_path_buf() })
    }

    fn sub(&self, name: &str) -> Result<Self> {
        Self::new(&self.dir.join(name))
    }

    fn write(&self, name: &str, contents: &str) -> Result<PathBuf> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = RunConfig::load(cli.config.as_deref())?;
    let out = Output::new(&cli.out)?;
    match &cli.command {
        Command::Ingest { csv } => ingest(&out, csv),
        Command::GenSynth { months } => gen_synth(&out, &cfg, cli.seed, *months),
        Command::Fit { dataset } => fit(&out, dataset),
        Command::Train {
            dataset,
            variant,
            context_years,
        } => {
            let data = load_csv(dataset)?;
            let model = train_model(&out, &cfg, &data, *variant, *context_years, cli.seed)?;
            let path = out.dir.join("model.json");
            model.save_file(&path)?;
            println!("wrote {}", path.display());
            Ok(())
        }
        Command::Forecast {
            dataset,
            checkpoint,
            train,
            variant,
            context_years,
            handoff,
        } => {
            let data = load_csv(dataset)?;
            let model = match (checkpoint, train) {
                (Some(path), _) => ForecastModel::load_file(path)?,
                (None, true) => train_model(&out, &cfg, &data, *variant, *context_years, cli.seed)?,
                (None, false) => {
                    return Err(Error::Config("forecast needs --checkpoint <model.json> or --train".into()).into())
                }
            };
            forecast(&out, &model, &data, handoff.then_some(cli.network.as_deref()))
        }
        Command::EvalGrid { dataset } => grid(&out, &cfg, dataset, cli.seed),
        Command::Infer {
            evidence,
            node,
            threshold,
        } => {
            let net = load_network(cli.network.as_deref())?;
            let evidence = Evidence::parse(evidence)?;
            let nodes = if node.is_empty() { vec![Stream::Total] } else { node.clone() };
            let spec = Scenario::new("infer", evidence, network_label(cli.network.as_deref()), *threshold)?;
            let text = spec.run(&net, &nodes, &out, None)?;
            print!("{text}");
            Ok(())
        }
        Command::Scenario { case, threshold } => {
            let net = load_network(cli.network.as_deref())?;
            let spec = Scenario::canned(*case, network_label(cli.network.as_deref()), *threshold)?;
            let dir = out.sub(&spec.name)?;
            let text = spec.run(&net, &Stream::ALL, &dir, Some(*case))?;
            print!("{text}");
            Ok(())
        }
    }
}

fn summary(data: &[MonthlySeries]) -> String {
    let mut provinces: Vec<_> = data.iter().map(|s| s.province).collect();
    provinces.sort();
    provinces.dedup();
    let mut streams: Vec<_> = data.iter().map(|s| s.stream).collect();
    streams.sort();
    streams.dedup();
    let first = data.iter().map(|s| s.start).min();
    let last = data.iter().map(|s| s.month_at(s.len().saturating_sub(1))).max();
    let mut out = format!("{} series\n", data.len());
    let _ = writeln!(
        out,
        "provinces ({}): {}",
        provinces.len(),
        provinces.iter().map(|p| p.code()).collect::<Vec<_>>().join(" ")
    );
    let _ = writeln!(
        out,
        "streams ({}): {}",
        streams.len(),
        streams.iter().map(|s| s.name()).collect::<Vec<_>>().join(" ")
    );
    if let (Some(a), Some(b)) = (first, last) {
        let _ = writeln!(out, "months: {a} to {b}");
    }
    out
}

fn write_dataset(out: &Output, name: &str, data: &[MonthlySeries]) -> Result<PathBuf> {
    let mut buf = Vec::new();
    write_csv(data, &mut buf).context("serializing dataset")?;
    out.write(name, &String::from_utf8(buf).context("dataset is not UTF-8")?)
}

fn ingest(out: &Output, csv: &Path) -> Result<()> {
    let data = load_csv(csv)?;
    let path = write_dataset(out, "dataset.csv", &data)?;
    print!("{}", summary(&data));
    println!("wrote {}", path.display());
    Ok(())
}

fn gen_synth(out: &Output, cfg: &RunConfig, seed: u64, months: usize) -> Result<()> {
    let data = gen_synthetic_with(&cfg.synthetic, seed, months)?;
    let path = write_dataset(out, "synthetic.csv", &data)?;
    print!("{}", summary(&data));
    println!("wrote {}", path.display());
    Ok(())
}

fn fit(out: &Output, dataset: &Path) -> Result<()> {
    let data = load_csv(dataset)?;
    let net = fit_parameters(&data)?;
    let path = out.dir.join("network.toml");
    net.save(&path)?;
    println!("total_mode = {:?}, {} provinces", net.total_mode, net.provinces.len());
    println!("wrote {}", path.display());
    Ok(())
}

fn totals(data: &[MonthlySeries]) -> Result<Vec<&MonthlySeries>> {
    let t: Vec<&MonthlySeries> = data.iter().filter(|s| s.stream == Stream::Total).collect();
    if t.is_empty() {
        return Err(Error::Value("dataset has no Total series".into()).into());
    }
    Ok(t)
}

fn train_model(
    out: &Output,
    cfg: &RunConfig,
    data: &[MonthlySeries],
    variant: Variant,
    context_years: usize,
    seed: u64,
) -> Result<ForecastModel> {
    let spec = WindowSpec::new(context_years, HORIZON)?;
    let mut windows = Vec::new();
    for s in totals(data)? {
        if s.len() < spec.context_len() + HORIZON {
            return Err(Error::Range(format!(
                "{}/Total has {} months; training a {context_years}-year model needs {}",
                s.province,
                s.len(),
                spec.context_len() + HORIZON
            ))
            .into());
        }
        windows.extend(training_windows(&s.values, spec, s.len(), cfg.training.window_stride));
    }
    let mut model = ForecastModel::new(variant, cfg.model.clone(), context_years, seed)?;
    let trace = train(&mut model, &windows, &cfg.training, seed)?;
    let mut buf = Vec::new();
    trace.write_csv(&mut buf).context("serializing loss trace")?;
    out.write("loss.csv", &String::from_utf8(buf)?)?;
    println!(
        "trained {variant} ({context_years}y) on {} windows; final loss {:.6}",
        windows.len(),
        trace.loss_trace.last().copied().unwrap_or(f64::NAN)
    );
    Ok(model)
}

/// Mean and population std of a forecast, as a soft Total finding.
pub fn handoff_finding(forecast: &[f64]) -> Result<Finding> {
    let n = forecast.len() as f64;
    let m = forecast.iter().sum::<f64>() / n;
    let sd = (forecast.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt();
    Ok(Finding::Soft(Stream::Total, Gaussian::new(m, sd.max(MIN_HANDOFF_STD))?))
}

fn forecast(out: &Output, model: &ForecastModel, data: &[MonthlySeries], handoff: Option<Option<&Path>>) -> Result<()> {
    let ctx_len = model.context_len();
    let mut csv = String::from("province,step,month,value\n");
    let mut forecasts = Vec::new();
    for s in totals(data)? {
        if s.len() < ctx_len {
            return Err(Error::Range(format!(
                "{}/Total has {} months; the model needs a {ctx_len}-month context",
                s.province,
                s.len()
            ))
            .into());
        }
        let pred = model.forecast(&s.values[s.len() - ctx_len..])?;
        for (i, v) in pred.iter().enumerate() {
            let _ = writeln!(csv, "{},{},{},{v}", s.province.code(), i + 1, s.end().add_months(i as i64));
        }
        forecasts.push((s.province, pred));
    }
    let path = out.write("forecast.csv", &csv)?;
    println!(
        "{} {}y forecast for {} provinces; wrote {}",
        model.variant,
        model.context_years,
        forecasts.len(),
        path.display()
    );
    let Some(network) = handoff else {
        return Ok(());
    };
    let net = match network {
        Some(p) => CGNetwork::load(p)?,
        None => fit_parameters(data)?,
    };
    let mut text = String::new();
    let mut rows = String::from("forecast_province,evidence_mean,evidence_std,province,probability\n");
    for (p, pred) in &forecasts {
        let finding = handoff_finding(pred)?;
        let Finding::Soft(_, g) = finding else { unreachable!("handoff findings are soft") };
        let finding = finding.to_string();
        // the string is the contract: query with what was written
        let evidence = Evidence::parse(&[finding.as_str()])?;
        let post = posterior_province(&net, &evidence)?;
        let _ = writeln!(text, "{}: --evidence {finding}", p.code());
        text.push_str(&report::province_section(&post, 0.001));
        text.push('\n');
        for (q, w) in &post {
            let _ = writeln!(rows, "{},{},{},{},{w}", p.code(), g.mean, g.std, q.code());
        }
    }
    out.write("handoff.txt", &text)?;
    let path = out.write("handoff.csv", &rows)?;
    print!("{text}");
    println!("wrote {}", path.display());
    Ok(())
}

fn grid(out: &Output, cfg: &RunConfig, dataset: &Path, seed: u64) -> Result<()> {
    let data = load_csv(dataset)?;
    let grid_cfg = cfg.grid();
    let records = eval_grid(&data, &grid_cfg, seed)?;
    let mut buf = Vec::new();
    write_grid_csv(&records, &mut buf).context("serializing grid")?;
    out.write("grid.csv", &String::from_utf8(buf)?)?;
    let mut baseline = format!("context_years,mase_{},smape\n", grid_cfg.mase_denominator.name());
    for &cy in &grid_cfg.context_years {
        let b = naive_baseline(&data, cy, grid_cfg.mase_denominator)?;
        let m = b.mase.map_or("deg".to_string(), |v| format!("{v:.6}"));
        let _ = writeln!(baseline, "{cy},{m},{:.6}", b.smape);
    }
    out.write("baseline.csv", &baseline)?;
    let table = format!(
        "MASE denominator: {}; * marks the per-column minimum\n{}",
        grid_cfg.mase_denominator.name(),
        render_table(&records)
    );
    out.write("grid.txt", &table)?;
    print!("{table}");
    Ok(())
}

fn load_network(path: Option<&Path>) -> Result<CGNetwork> {
    Ok(match path {
        Some(p) => CGNetwork::load(p)?,
        None => CGNetwork::published_snapshot(),
    })
}

fn network_label(path: Option<&Path>) -> String {
    path.map_or_else(|| "built-in published snapshot".to_string(), |p| p.display().to_string())
}

/// A named evidence set run against one network.
pub struct Scenario {
    pub name: String,
    pub evidence: Evidence,
    pub network: String,
    /// Province masses below this are pooled in the display.
    pub threshold: f64,
}

impl Scenario {
    pub fn new(name: &str, evidence: Evidence, network: String, threshold: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&threshold) {
            return Err(Error::Config(format!("threshold must be in [0, 1), got {threshold}")).into());
        }
        Ok(Self {
            name: name.to_string(),
            evidence,
            network,
            threshold,
        })
    }

    pub fn canned(case: Case, network: String, threshold: f64) -> Result<Self> {
        let (name, findings) = match case {
            Case::Case1 => ("case1", "province=ON"),
            Case::Case2 => ("case2", "refugee=N(15,2)"),
            Case::Case3 => ("case3", "total=N(150,2)"),
        };
        Self::new(name, Evidence::parse(&[findings])?, network, threshold)
    }

    fn run(&self, net: &CGNetwork, nodes: &[Stream], out: &Output, case: Option<Case>) -> Result<String> {
        let mut text = format!("scenario: {}\n", self.name);
        let _ = writeln!(text, "network: {} ({:?} total)", self.network, net.total_mode);
        let _ = writeln!(text, "evidence: {}\n", self.evidence);
        let post = posterior_province(net, &self.evidence)?;
        text.push_str(&report::province_section(&post, self.threshold));
        out.write("province.csv", &report::province_csv(&post))?;
        for &node in nodes {
            let mix = posterior_node(net, node, &self.evidence)?;
            text.push('\n');
            text.push_str(&report::node_section(node, &mix, self.threshold));
            out.write(&format!("density-{}.csv", node.name().to_ascii_lowercase()), &report::density_csv(&mix))?;
        }
        match case {
            Some(Case::Case2) => text.push_str(CASE2_REFERENCE),
            Some(Case::Case3) => {
                let d = decompose_total(net, &self.evidence)?;
                text.push('\n');
                text.push_str(&report::decomposition_section(&d));
                text.push_str(CASE3_REFERENCE);
                out.write("decomposition.csv", &report::decomposition_csv(&d))?;
            }
            _ => {}
        }
        out.write("report.txt", &text)?;
        Ok(text)
    }
}

const CASE2_REFERENCE: &str = "
Reference only (published figures from unpublished data; not computed here):
  Ontario 56.73%  Alberta 31.24%  Quebec 10.23%
  Total mean 80.64
";

const CASE3_REFERENCE: &str = "
Reference only (published figures from unpublished data; not asserted):
  Economic 88.46  Sponsor 35.06  Refugee 26.33  (sum 149.85)
";

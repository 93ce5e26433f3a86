//! Synthetic monthly migration data.
//!
//! Each component stream is `base + trend·t + amp·sin(2πt/12) + noise`
//! with `trend`, `amp` and the noise std expressed as fractions of the
//! province's base level. Values are quantized to whole persons and Total
//! is the exact sum of the quantized components.

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{MonthlySeries, Province, Stream, YearMonth};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StreamBase {
    pub sponsor: f64,
    pub refugee: f64,
    pub economic: f64,
}

impl StreamBase {
    fn get(&self, stream: Stream) -> f64 {
        match stream {
            Stream::Sponsor => self.sponsor,
            Stream::Refugee => self.refugee,
            Stream::Economic => self.economic,
            Stream::Total => self.sponsor + self.refugee + self.economic,
        }
    }
}

/// Generator parameters, loadable from a TOML key-value file:
///
/// ```toml
/// start = "2015-01"
/// trend_fraction = 0.002      # per month, relative to base
/// amplitude_fraction = 0.25   # seasonal amplitude, relative to base
/// noise_fraction = 0.06       # noise std, relative to base
///
/// [base.ON]                   # hundreds of persons per month
/// sponsor = 30.26
/// refugee = 21.89
/// economic = 62.0
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub start: YearMonth,
    pub trend_fraction: f64,
    pub amplitude_fraction: f64,
    pub noise_fraction: f64,
    pub base: BTreeMap<Province, StreamBase>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let b = |sponsor, refugee, economic| StreamBase {
            sponsor,
            refugee,
            economic,
        };
        let base = BTreeMap::from([
            (Province::BC, b(10.25, 5.74, 23.50)),
            (Province::AB, b(8.90, 7.85, 18.93)),
            (Province::SK, b(2.10, 1.60, 6.10)),
            (Province::MB, b(2.80, 2.90, 6.90)),
            (Province::ON, b(30.26, 21.89, 62.00)),
            (Province::QC, b(9.60, 7.06, 24.33)),
            (Province::NL, b(0.35, 0.25, 0.90)),
            (Province::NB, b(0.74, 1.00, 2.60)),
            (Province::PE, b(0.25, 0.20, 0.95)),
            (Province::NS, b(1.10, 0.90, 3.20)),
        ]);
        Self {
            start: YearMonth::new(2015, 1).expect("valid month"),
            trend_fraction: 0.002,
            amplitude_fraction: 0.25,
            noise_fraction: 0.06,
            base,
        }
    }
}

impl SynthConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: SynthConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("trend_fraction", self.trend_fraction),
            ("amplitude_fraction", self.amplitude_fraction),
            ("noise_fraction", self.noise_fraction),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!("{name} must be a non-negative number")));
            }
        }
        if self.base.is_empty() {
            return Err(Error::Config("no provinces configured".into()));
        }
        for (p, b) in &self.base {
            if [b.sponsor, b.refugee, b.economic].iter().any(|v| !(*v >= 0.0)) {
                return Err(Error::Config(format!("negative base level for {p}")));
            }
        }
        Ok(())
    }
}

pub fn gen_synthetic(seed: u64, months: usize) -> Result<Vec<MonthlySeries>> {
    gen_synthetic_with(&SynthConfig::default(), seed, months)
}

/// Series are emitted per province in config order as Sponsor, Refugee,
/// Economic, Total.
pub fn gen_synthetic_with(cfg: &SynthConfig, seed: u64, months: usize) -> Result<Vec<MonthlySeries>> {
    if months < 24 {
        return Err(Error::Config(format!("need at least 24 months, got {months}")));
    }
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut out = Vec::with_capacity(cfg.base.len() * 4);
    for (&province, base) in &cfg.base {
        let mut total_persons = vec![0i64; months];
        for stream in Stream::COMPONENTS {
            let level = base.get(stream);
            let trend = cfg.trend_fraction * level;
            let amp = cfg.amplitude_fraction * level;
            let noise = cfg.noise_fraction * level;
            let mut values = Vec::with_capacity(months);
            for (t, total) in total_persons.iter_mut().enumerate() {
                let phase = 2.0 * std::f64::consts::PI * t as f64 / 12.0;
                let x = level + trend * t as f64 + amp * phase.sin() + noise * std_normal.sample(&mut rng);
                let persons = (x.max(0.0) * 100.0).round() as i64;
                *total += persons;
                values.push(persons as f64 / 100.0);
            }
            out.push(MonthlySeries::new(province, stream, cfg.start, values)?);
        }
        let totals = total_persons.iter().map(|&p| p as f64 / 100.0).collect();
        out.push(MonthlySeries::new(province, Stream::Total, cfg.start, totals)?);
    }
    Ok(out)
}

//! Conditional linear-Gaussian network: a discrete province root with
//! Sponsor, Refugee and Economic children and a Total grandchild, plus an
//! optional hidden crisis switch on the Refugee and Economic means.

mod evidence;
mod fit;
mod infer;

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Province, Stream};
use crate::error::{Error, Result};

pub use self::evidence::{Evidence, Finding};
pub use self::fit::{fit_parameters, MIN_STD};
pub use self::infer::{
    decompose_total, posterior_node, posterior_province, soft_evidence_likelihood, StreamMeans,
};

const PROB_TOLERANCE: f64 = 1e-12;

/// Parameter snapshot shipped with the crate.
pub const PUBLISHED_SNAPSHOT: &str = include_str!("../../../../data/paper-params.snapshot");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gaussian {
    pub mean: f64,
    pub std: f64,
}

impl Gaussian {
    pub fn new(mean: f64, std: f64) -> Result<Self> {
        if !mean.is_finite() || !(std > 0.0) || !std.is_finite() {
            return Err(Error::Value(format!("invalid Gaussian N({mean}, {std})")));
        }
        Ok(Self { mean, std })
    }

    pub fn variance(&self) -> f64 {
        self.std * self.std
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.ln_pdf(x).exp()
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        let z = (x - self.mean) / self.std;
        -0.5 * z * z - self.std.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
    }
}

impl fmt::Display for Gaussian {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "N({}, {})", self.mean, self.std)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TotalMode {
    /// Total is the sum of the three streams.
    #[default]
    Structural,
    /// Total has its own per-province parameters.
    Fitted,
}

/// Hidden binary crisis node. When active, Refugee and Economic means are
/// multiplied by their factors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrisisSpec {
    pub probability: f64,
    pub k_refugee: f64,
    pub k_economic: f64,
}

impl CrisisSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.probability) {
            return Err(Error::Config(format!("crisis probability {} outside [0, 1]", self.probability)));
        }
        if !(self.k_refugee > 0.0 && self.k_economic > 0.0) {
            return Err(Error::Config("crisis factors must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Published,
    Synthetic,
    Fitted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeParam {
    pub mean: f64,
    pub std: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<Source>,
}

impl NodeParam {
    pub fn new(mean: f64, std: f64) -> Self {
        Self { mean, std, source: None }
    }

    pub fn gaussian(&self) -> Gaussian {
        Gaussian {
            mean: self.mean,
            std: self.std,
        }
    }
}

/// Published Total figures kept for cross-checking derived values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PublishedTotal {
    pub mean: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProvinceEntry {
    pub province: Province,
    pub prior: f64,
    pub sponsor: NodeParam,
    pub refugee: NodeParam,
    pub economic: NodeParam,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total: Option<NodeParam>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub published_total: Option<PublishedTotal>,
}

impl ProvinceEntry {
    pub fn stream(&self, stream: Stream) -> Option<&NodeParam> {
        match stream {
            Stream::Sponsor => Some(&self.sponsor),
            Stream::Refugee => Some(&self.refugee),
            Stream::Economic => Some(&self.economic),
            Stream::Total => self.total.as_ref(),
        }
    }

    fn derived_total(&self) -> Gaussian {
        let parts = [&self.sponsor, &self.refugee, &self.economic];
        Gaussian {
            mean: parts.iter().map(|p| p.mean).sum(),
            std: parts.iter().map(|p| p.std * p.std).sum::<f64>().sqrt(),
        }
    }
}

/// Immutable after construction; all inference is by free functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CGNetwork {
    pub total_mode: TotalMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crisis: Option<CrisisSpec>,
    #[serde(rename = "province")]
    pub provinces: Vec<ProvinceEntry>,
}

/// Published figures agree with derived ones to their printed precision.
const PUBLISHED_SLACK: f64 = 0.005 + 1e-9;

impl CGNetwork {
    pub fn new(total_mode: TotalMode, crisis: Option<CrisisSpec>, provinces: Vec<ProvinceEntry>) -> Result<Self> {
        let net = Self {
            total_mode,
            crisis,
            provinces,
        };
        net.validate()?;
        Ok(net)
    }

    /// Structural network over all ten provinces with a uniform prior.
    pub fn uniform(params: impl Fn(Province) -> [NodeParam; 3]) -> Result<Self> {
        let provinces = Province::ALL
            .iter()
            .map(|&p| {
                let [sponsor, refugee, economic] = params(p);
                ProvinceEntry {
                    province: p,
                    prior: 0.1,
                    sponsor,
                    refugee,
                    economic,
                    total: None,
                    published_total: None,
                }
            })
            .collect();
        Self::new(TotalMode::Structural, None, provinces)
    }

    pub fn validate(&self) -> Result<()> {
        if self.provinces.is_empty() {
            return Err(Error::Config("network has no provinces".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for e in &self.provinces {
            if !seen.insert(e.province) {
                return Err(Error::Config(format!("province {} listed twice", e.province)));
            }
            if !(e.prior >= 0.0) {
                return Err(Error::Config(format!("prior of {} is negative", e.province)));
            }
            for s in Stream::COMPONENTS {
                let p = e.stream(s).expect("component");
                if !p.mean.is_finite() || !(p.std > 0.0) || !p.std.is_finite() {
                    return Err(Error::Config(format!("{} {s}: need finite mean and std > 0", e.province)));
                }
            }
            match (self.total_mode, &e.total) {
                (TotalMode::Structural, Some(_)) => {
                    return Err(Error::Config(format!(
                        "{}: Total parameters are derived in structural mode and must not be stored",
                        e.province
                    )))
                }
                (TotalMode::Fitted, None) => {
                    return Err(Error::Config(format!("{}: fitted mode needs Total parameters", e.province)))
                }
                (TotalMode::Fitted, Some(t)) if !(t.std > 0.0) || !t.mean.is_finite() => {
                    return Err(Error::Config(format!("{} Total: need finite mean and std > 0", e.province)))
                }
                _ => {}
            }
            if let Some(pt) = e.published_total {
                let d = self.province_conditional(e.province, Stream::Total)?;
                let std_ok = pt.std.map_or(true, |s| (s - d.std).abs() <= PUBLISHED_SLACK);
                if (pt.mean - d.mean).abs() > PUBLISHED_SLACK || !std_ok {
                    return Err(Error::Config(format!(
                        "{}: published Total {} disagrees with derived {d}",
                        e.province, pt.mean
                    )));
                }
            }
        }
        let sum: f64 = self.provinces.iter().map(|e| e.prior).sum();
        if (sum - 1.0).abs() > PROB_TOLERANCE {
            return Err(Error::Config(format!("province prior sums to {sum}, expected 1")));
        }
        if let Some(c) = &self.crisis {
            c.validate()?;
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let net: CGNetwork = toml::from_str(text).map_err(|e| Error::Config(format!("network file: {e}")))?;
        net.validate()?;
        Ok(net)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("network serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_toml()).map_err(|e| Error::io(path, e))
    }

    /// The bundled parameter snapshot.
    pub fn published_snapshot() -> Self {
        Self::from_toml(PUBLISHED_SNAPSHOT).expect("bundled snapshot is valid")
    }

    pub fn entry(&self, province: Province) -> Result<&ProvinceEntry> {
        self.provinces
            .iter()
            .find(|e| e.province == province)
            .ok_or_else(|| Error::Config(format!("province {province} is not in the network")))
    }

    pub fn province_list(&self) -> Vec<Province> {
        self.provinces.iter().map(|e| e.province).collect()
    }

    /// Distribution of `node` given the province, with the crisis inactive.
    pub fn province_conditional(&self, province: Province, node: Stream) -> Result<Gaussian> {
        let e = self.entry(province)?;
        Ok(match (node, self.total_mode) {
            (Stream::Total, TotalMode::Structural) => e.derived_total(),
            (Stream::Total, TotalMode::Fitted) => e.total.expect("validated").gaussian(),
            (s, _) => e.stream(s).expect("component").gaussian(),
        })
    }

    /// Clamp the crisis node. Active scales Refugee and Economic means by
    /// the crisis factors; inactive keeps the parameters. Either way the
    /// returned network has no crisis node left.
    pub fn apply_crisis(&self, active: bool) -> Result<Self> {
        let spec = self
            .crisis
            .ok_or_else(|| Error::Config("network has no crisis node".into()))?;
        let mut out = self.clone();
        out.crisis = None;
        if active {
            for e in &mut out.provinces {
                let shift = e.refugee.mean * (spec.k_refugee - 1.0) + e.economic.mean * (spec.k_economic - 1.0);
                e.refugee.mean *= spec.k_refugee;
                e.economic.mean *= spec.k_economic;
                if let Some(t) = &mut e.total {
                    t.mean += shift;
                }
                if shift != 0.0 {
                    e.published_total = None;
                }
            }
        }
        Ok(out)
    }
}

/// Weighted mixture of Gaussians.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixtureComponent {
    pub province: Province,
    /// `Some(true)` for the crisis-active branch when a crisis node exists.
    pub crisis: Option<bool>,
    pub weight: f64,
    pub gaussian: Gaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GaussianMixture {
    pub components: Vec<MixtureComponent>,
}

impl GaussianMixture {
    pub fn mean(&self) -> f64 {
        self.components.iter().map(|c| c.weight * c.gaussian.mean).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.components
            .iter()
            .map(|c| c.weight * (c.gaussian.variance() + (c.gaussian.mean - m).powi(2)))
            .sum()
    }

    pub fn std(&self) -> f64 {
        self.variance().sqrt()
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.components.iter().map(|c| c.weight * c.gaussian.pdf(x)).sum()
    }

    /// Weight and moments per province, merging crisis branches.
    pub fn by_province(&self) -> Vec<(Province, f64, f64, f64)> {
        let mut out: Vec<(Province, Vec<&MixtureComponent>)> = Vec::new();
        for c in &self.components {
            match out.iter_mut().find(|(p, _)| *p == c.province) {
                Some((_, v)) => v.push(c),
                None => out.push((c.province, vec![c])),
            }
        }
        out.into_iter()
            .map(|(p, cs)| {
                let w: f64 = cs.iter().map(|c| c.weight).sum();
                if w <= 0.0 {
                    let g = cs[0].gaussian;
                    return (p, 0.0, g.mean, g.std);
                }
                let m = cs.iter().map(|c| c.weight * c.gaussian.mean).sum::<f64>() / w;
                let v = cs
                    .iter()
                    .map(|c| c.weight * (c.gaussian.variance() + (c.gaussian.mean - m).powi(2)))
                    .sum::<f64>()
                    / w;
                (p, w, m, v.sqrt())
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapshot_case_one() {
        let net = CGNetwork::published_snapshot();
        let t = net.province_conditional(Province::ON, Stream::Total).unwrap();
        assert!((t.mean - 114.15).abs() < 1e-9, "{t}");
        assert!((t.std - 31.80).abs() < 1e-9, "{t}");
        let r = net.province_conditional(Province::ON, Stream::Refugee).unwrap();
        assert_eq!((r.mean, r.std), (21.89, 10.18));
    }

    #[test]
    fn snapshot_round_trips() {
        let net = CGNetwork::published_snapshot();
        assert_eq!(CGNetwork::from_toml(&net.to_toml()).unwrap(), net);
        assert_eq!(net.provinces.len(), 10);
        assert!(net.provinces.iter().all(|e| e.prior == 0.1));
    }

    #[test]
    fn structural_total_hand_case() {
        let net = CGNetwork::new(
            TotalMode::Structural,
            None,
            vec![ProvinceEntry {
                province: Province::MB,
                prior: 1.0,
                sponsor: NodeParam::new(1.0, 1.0),
                refugee: NodeParam::new(2.0, 2.0),
                economic: NodeParam::new(3.0, 2.0),
                total: None,
                published_total: None,
            }],
        )
        .unwrap();
        let t = net.province_conditional(Province::MB, Stream::Total).unwrap();
        assert_eq!((t.mean, t.std), (6.0, 3.0));
    }

    #[test]
    fn validation_failures() {
        let mut net = CGNetwork::published_snapshot();
        net.provinces[0].prior = 0.2;
        assert!(net.validate().is_err());
        let mut net = CGNetwork::published_snapshot();
        net.provinces[1].refugee.std = 0.0;
        assert!(net.validate().is_err());
        let mut net = CGNetwork::published_snapshot();
        net.provinces[2].total = Some(NodeParam::new(1.0, 1.0));
        assert!(net.validate().is_err());
        let mut net = CGNetwork::published_snapshot();
        net.crisis = Some(CrisisSpec {
            probability: 1.5,
            k_refugee: 1.0,
            k_economic: 1.0,
        });
        assert!(net.validate().is_err());
    }

    #[test]
    fn crisis_clamping() {
        let mut net = CGNetwork::published_snapshot();
        assert!(matches!(net.apply_crisis(true), Err(Error::Config(_))));
        net.crisis = Some(CrisisSpec {
            probability: 0.5,
            k_refugee: 2.0,
            k_economic: 1.0,
        });
        let on = net.apply_crisis(true).unwrap();
        for (a, b) in net.provinces.iter().zip(&on.provinces) {
            assert_eq!(b.refugee.mean, 2.0 * a.refugee.mean);
            assert_eq!(b.refugee.std, a.refugee.std);
            assert_eq!(b.sponsor, a.sponsor);
            assert_eq!(b.economic, a.economic);
        }
        let off = net.apply_crisis(false).unwrap();
        assert_eq!(off.provinces, net.provinces);
        net.crisis = Some(CrisisSpec {
            probability: 0.5,
            k_refugee: 1.0,
            k_economic: 1.0,
        });
        assert_eq!(net.apply_crisis(true).unwrap().provinces, net.provinces);
    }
}

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::causal::Gaussian;
use crate::data::{Province, Stream};
use crate::error::{Error, Result};

pub const GRAMMAR: &str = "province=<code or name> | <sponsor|refugee|economic|total>=N(<mean>,<std>)";

/// One `node=value` finding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Finding {
    Province(Province),
    Soft(Stream, Gaussian),
}

impl FromStr for Finding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |why: &str| Error::Evidence(format!("'{s}': {why}; expected {GRAMMAR}"));
        let (node, value) = s.split_once('=').ok_or_else(|| bad("missing '='"))?;
        let (node, value) = (node.trim().to_ascii_lowercase(), value.trim());
        if node == "province" {
            let p = value.parse::<Province>().map_err(|e| bad(&e))?;
            return Ok(Finding::Province(p));
        }
        let stream = node.parse::<Stream>().map_err(|_| bad("unknown node"))?;
        let inner = value
            .strip_prefix("N(")
            .or_else(|| value.strip_prefix("n("))
            .and_then(|v| v.strip_suffix(')'))
            .ok_or_else(|| bad("value must look like N(mean,std)"))?;
        let (m, sd) = inner.split_once(',').ok_or_else(|| bad("N(...) needs two numbers"))?;
        let m: f64 = m.trim().parse().map_err(|_| bad("mean is not a number"))?;
        let sd: f64 = sd.trim().parse().map_err(|_| bad("std is not a number"))?;
        if !m.is_finite() || !(sd > 0.0) || !sd.is_finite() {
            return Err(bad("need a finite mean and std > 0"));
        }
        Ok(Finding::Soft(stream, Gaussian { mean: m, std: sd }))
    }
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Finding::Province(p) => write!(f, "province={}", p.code()),
            Finding::Soft(s, g) => write!(f, "{}=N({},{})", s.name().to_ascii_lowercase(), g.mean, g.std),
        }
    }
}

/// At most one finding per node.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Evidence {
    pub province: Option<Province>,
    pub soft: BTreeMap<Stream, Gaussian>,
}

impl Evidence {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn add(&mut self, finding: Finding) -> Result<()> {
        let taken = match finding {
            Finding::Province(p) => self.province.replace(p).is_some(),
            Finding::Soft(s, g) => self.soft.insert(s, g).is_some(),
        };
        if taken {
            return Err(Error::Evidence(format!("more than one finding on the node of '{finding}'")));
        }
        Ok(())
    }

    pub fn with(mut self, finding: Finding) -> Result<Self> {
        self.add(finding)?;
        Ok(self)
    }

    pub fn province(p: Province) -> Self {
        Self {
            province: Some(p),
            ..Self::default()
        }
    }

    pub fn soft(node: Stream, mean: f64, std: f64) -> Result<Self> {
        Self::default().with(Finding::Soft(node, Gaussian::new(mean, std)?))
    }

    pub fn parse<S: AsRef<str>>(items: &[S]) -> Result<Self> {
        let mut ev = Self::default();
        for it in items {
            ev.add(it.as_ref().parse()?)?;
        }
        Ok(ev)
    }

    pub fn findings(&self) -> Vec<Finding> {
        self.province
            .map(Finding::Province)
            .into_iter()
            .chain(self.soft.iter().map(|(s, g)| Finding::Soft(*s, *g)))
            .collect()
    }

    pub fn is_empty(&self) -> bool {
        self.province.is_none() && self.soft.is_empty()
    }
}

impl fmt::Display for Evidence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.findings().iter().map(|x| x.to_string()).collect();
        if parts.is_empty() {
            f.write_str("(none)")
        } else {
            f.write_str(&parts.join(" "))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_grammar() {
        assert_eq!("province=ON".parse::<Finding>().unwrap(), Finding::Province(Province::ON));
        assert_eq!("Province=ontario".parse::<Finding>().unwrap(), Finding::Province(Province::ON));
        assert_eq!(
            "refugee=N(15,2)".parse::<Finding>().unwrap(),
            Finding::Soft(Stream::Refugee, Gaussian { mean: 15.0, std: 2.0 })
        );
        assert_eq!(
            "total = N( 150 , 2.5 )".parse::<Finding>().unwrap(),
            Finding::Soft(Stream::Total, Gaussian { mean: 150.0, std: 2.5 })
        );
    }

    #[test]
    fn rejects_malformed() {
        for s in ["refugee", "refugee=15", "refugee=N(15)", "refugee=N(15,0)", "crisis=N(1,1)", "province=YT", "total=N(a,1)"] {
            let err = s.parse::<Finding>().unwrap_err();
            assert!(matches!(err, Error::Evidence(_)), "{s}");
            assert!(err.to_string().contains("N(<mean>,<std>)"), "{err}");
        }
    }

    #[test]
    fn one_finding_per_node() {
        assert!(Evidence::parse(&["refugee=N(1,1)", "refugee=N(2,1)"]).is_err());
        assert!(Evidence::parse(&["province=ON", "province=QC"]).is_err());
        let ev = Evidence::parse(&["province=ON", "total=N(100,5)"]).unwrap();
        assert_eq!(ev.to_string(), "province=ON total=N(100,5)");
    }
}

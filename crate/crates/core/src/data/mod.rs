//! Monthly migration series: types, CSV boundary, windowing and synthesis.
//!
//! Every value inside the crate is in hundreds of persons per month. Raw
//! person counts only appear in CSV files.

mod csv;
mod synth;
mod window;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use self::csv::{load_csv, parse_csv, write_csv, CSV_HEADER};
pub use self::synth::{gen_synthetic, gen_synthetic_with, StreamBase, SynthConfig};
pub use self::window::{
    split_window, standardize, training_windows, Standardized, Window, WindowSpec,
};

/// Slack allowed between a Total row and the sum of its components (50 persons).
pub const TOTAL_SLACK: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Province {
    BC,
    AB,
    SK,
    MB,
    ON,
    QC,
    NL,
    NB,
    PE,
    NS,
}

impl Province {
    pub const ALL: [Province; 10] = [
        Province::BC,
        Province::AB,
        Province::SK,
        Province::MB,
        Province::ON,
        Province::QC,
        Province::NL,
        Province::NB,
        Province::PE,
        Province::NS,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Province::BC => "BC",
            Province::AB => "AB",
            Province::SK => "SK",
            Province::MB => "MB",
            Province::ON => "ON",
            Province::QC => "QC",
            Province::NL => "NL",
            Province::NB => "NB",
            Province::PE => "PE",
            Province::NS => "NS",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Province::BC => "British Columbia",
            Province::AB => "Alberta",
            Province::SK => "Saskatchewan",
            Province::MB => "Manitoba",
            Province::ON => "Ontario",
            Province::QC => "Quebec",
            Province::NL => "Newfoundland",
            Province::NB => "New Brunswick",
            Province::PE => "Prince Edward Island",
            Province::NS => "Nova Scotia",
        }
    }

    pub fn index(self) -> usize {
        Province::ALL.iter().position(|&p| p == self).unwrap()
    }
}

impl fmt::Display for Province {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Province {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        Province::ALL
            .into_iter()
            .find(|p| p.code().eq_ignore_ascii_case(s) || p.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown province '{s}'"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Stream {
    Sponsor,
    Refugee,
    Economic,
    Total,
}

impl Stream {
    pub const ALL: [Stream; 4] = [Stream::Sponsor, Stream::Refugee, Stream::Economic, Stream::Total];
    pub const COMPONENTS: [Stream; 3] = [Stream::Sponsor, Stream::Refugee, Stream::Economic];

    pub fn name(self) -> &'static str {
        match self {
            Stream::Sponsor => "Sponsor",
            Stream::Refugee => "Refugee",
            Stream::Economic => "Economic",
            Stream::Total => "Total",
        }
    }
}

impl fmt::Display for Stream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stream {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        Stream::ALL
            .into_iter()
            .find(|st| st.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown stream '{s}'"))
    }
}

/// Calendar month, ordered chronologically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct YearMonth {
    year: i32,
    month: u32,
}

impl YearMonth {
    pub fn new(year: i32, month: u32) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(Error::Value(format!("month {month} out of range 1..12")));
        }
        Ok(Self { year, month })
    }

    pub fn year(self) -> i32 {
        self.year
    }

    pub fn month(self) -> u32 {
        self.month
    }

    /// Months since year 0, used for arithmetic.
    fn ordinal(self) -> i64 {
        self.year as i64 * 12 + (self.month as i64 - 1)
    }

    fn from_ordinal(ord: i64) -> Self {
        Self {
            year: ord.div_euclid(12) as i32,
            month: ord.rem_euclid(12) as u32 + 1,
        }
    }

    pub fn add_months(self, n: i64) -> Self {
        Self::from_ordinal(self.ordinal() + n)
    }

    /// Signed number of months from `self` to `other`.
    pub fn months_until(self, other: YearMonth) -> i64 {
        other.ordinal() - self.ordinal()
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for YearMonth {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Value(format!("expected YYYY-MM, got '{s}'"));
        let (y, m) = s.trim().split_once('-').ok_or_else(bad)?;
        if y.len() != 4 || m.len() != 2 {
            return Err(bad());
        }
        let year = y.parse().map_err(|_| bad())?;
        let month = m.parse().map_err(|_| bad())?;
        YearMonth::new(year, month)
    }
}

impl TryFrom<String> for YearMonth {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<YearMonth> for String {
    fn from(ym: YearMonth) -> String {
        ym.to_string()
    }
}

/// One province × one stream as a contiguous run of months.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthlySeries {
    pub province: Province,
    pub stream: Stream,
    pub start: YearMonth,
    pub values: Vec<f64>,
}

impl MonthlySeries {
    pub fn new(province: Province, stream: Stream, start: YearMonth, values: Vec<f64>) -> Result<Self> {
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::Value(format!(
                "{province}/{stream} month {} has invalid value {v}",
                start.add_months(i as i64)
            )));
        }
        Ok(Self {
            province,
            stream,
            start,
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Month after the last observation.
    pub fn end(&self) -> YearMonth {
        self.start.add_months(self.values.len() as i64)
    }

    pub fn month_at(&self, i: usize) -> YearMonth {
        self.start.add_months(i as i64)
    }

    pub fn value_at(&self, month: YearMonth) -> Option<f64> {
        let offset = self.start.months_until(month);
        usize::try_from(offset).ok().and_then(|i| self.values.get(i).copied())
    }
}

/// Find a series in a list.
pub fn find_series(data: &[MonthlySeries], province: Province, stream: Stream) -> Option<&MonthlySeries> {
    data.iter().find(|s| s.province == province && s.stream == stream)
}

/// Check that every Total row agrees with its components within [`TOTAL_SLACK`].
pub fn check_totals(data: &[MonthlySeries]) -> Result<()> {
    for total in data.iter().filter(|s| s.stream == Stream::Total) {
        let parts: Vec<&MonthlySeries> = Stream::COMPONENTS
            .iter()
            .filter_map(|&st| find_series(data, total.province, st))
            .collect();
        if parts.len() != 3 {
            continue;
        }
        for (i, &t) in total.values.iter().enumerate() {
            let month = total.month_at(i);
            let sum: Option<f64> = parts.iter().map(|p| p.value_at(month)).sum();
            if let Some(sum) = sum {
                if (t - sum).abs() > TOTAL_SLACK + 1e-9 {
                    return Err(Error::Value(format!(
                        "{}/Total at {month} is {t} but components sum to {sum}",
                        total.province
                    )));
                }
            }
        }
    }
    Ok(())
}

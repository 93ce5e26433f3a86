use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::data::{check_totals, MonthlySeries, Province, Stream, YearMonth};
use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "date,province,stream,count";

/// Load `date,province,stream,count` rows. Counts are raw persons and are
/// converted to hundreds.
pub fn load_csv(path: impl AsRef<Path>) -> Result<Vec<MonthlySeries>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_csv(file)
}

pub fn parse_csv(reader: impl Read) -> Result<Vec<MonthlySeries>> {
    let mut rdr = ::csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(::csv::Trim::All)
        .from_reader(reader);

    let header = rdr.headers().map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    let fields: Vec<&str> = header.iter().collect();
    if fields != ["date", "province", "stream", "count"] {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header '{CSV_HEADER}', got '{}'", fields.join(",")),
        });
    }

    let mut groups: BTreeMap<(Province, Stream), BTreeMap<YearMonth, f64>> = BTreeMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let parse_err = |message: String| Error::Parse { line, message };
        if record.len() != 4 {
            return Err(parse_err(format!("expected 4 fields, got {}", record.len())));
        }
        let date: YearMonth = record[0].parse().map_err(|e: Error| parse_err(e.to_string()))?;
        let province: Province = record[1].parse().map_err(parse_err)?;
        let stream: Stream = record[2].parse().map_err(parse_err)?;
        let count: f64 = record[3]
            .parse()
            .map_err(|_| parse_err(format!("invalid count '{}'", &record[3])))?;
        if !count.is_finite() {
            return Err(parse_err(format!("invalid count '{}'", &record[3])));
        }
        if count < 0.0 {
            return Err(Error::Value(format!(
                "line {line}: negative count {count} for {province}/{stream} at {date}"
            )));
        }
        let slot = groups.entry((province, stream)).or_default();
        if slot.insert(date, count / 100.0).is_some() {
            return Err(parse_err(format!("duplicate row for {province}/{stream} at {date}")));
        }
    }

    let mut out = Vec::with_capacity(groups.len());
    for ((province, stream), months) in groups {
        let start = *months.keys().next().expect("group is non-empty");
        let mut values = Vec::with_capacity(months.len());
        for (i, (&month, &v)) in months.iter().enumerate() {
            let expected = start.add_months(i as i64);
            if month != expected {
                return Err(Error::Gap {
                    province,
                    stream,
                    missing: expected,
                });
            }
            values.push(v);
        }
        out.push(MonthlySeries::new(province, stream, start, values)?);
    }
    check_totals(&out)?;
    Ok(out)
}

/// Write series as CSV, rounding each value to whole persons.
pub fn write_csv(data: &[MonthlySeries], mut writer: impl Write) -> std::io::Result<()> {
    writeln!(writer, "{CSV_HEADER}")?;
    for s in data {
        for (i, v) in s.values.iter().enumerate() {
            let persons = (v * 100.0).round();
            writeln!(
                writer,
                "{},{},{},{}",
                s.month_at(i),
                s.province.code(),
                s.stream.name(),
                persons as i64
            )?;
        }
    }
    Ok(())
}

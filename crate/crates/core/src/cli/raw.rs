//! Raw phase readings and their normalization into quench curves.
//!
//! File layout: CSV with header `frequency_hz,temperature_c,o2_percent_air,tan_theta`,
//! one reading per row, in any order. Each (frequency, temperature) group needs
//! a zero-oxygen row, whose `tan θ₀` normalizes the group: `r = tan θ / tan θ₀`.

use std::cmp::Ordering;
use std::path::Path;

use crate::calibration::{CurveBundle, CurveRecord, CURVES_FORMAT_VERSION};

use super::CliError;

pub const RAW_HEADER: [&str; 4] = [
    "frequency_hz",
    "temperature_c",
    "o2_percent_air",
    "tan_theta",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawRow {
    pub frequency_hz: f64,
    pub temperature_c: f64,
    pub o2_percent_air: f64,
    pub tan_theta: f64,
}

pub fn read_raw(path: &Path) -> Result<Vec<RawRow>, CliError> {
    let shown = path.display().to_string();
    let parse =
        |line: u64, reason: String| CliError::Parse(format!("{shown}, line {line}: {reason}"));
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(source) => CliError::io(path, source),
            other => parse(1, format!("{other:?}")),
        })?;
    let header = reader.headers().map_err(|e| parse(1, e.to_string()))?;
    if header.iter().ne(RAW_HEADER) {
        return Err(parse(
            1,
            format!("header must be `{}`", RAW_HEADER.join(",")),
        ));
    }
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| parse(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let mut v = [0.0; 4];
        for (slot, (field, name)) in v.iter_mut().zip(rec.iter().zip(RAW_HEADER)) {
            *slot = field
                .parse()
                .ok()
                .filter(|x: &f64| x.is_finite())
                .ok_or_else(|| parse(line, format!("{name}: cannot parse `{field}`")))?;
        }
        let row = RawRow {
            frequency_hz: v[0],
            temperature_c: v[1],
            o2_percent_air: v[2],
            tan_theta: v[3],
        };
        if row.frequency_hz <= 0.0 {
            return Err(parse(
                line,
                format!("frequency_hz must be > 0, got {}", row.frequency_hz),
            ));
        }
        if row.o2_percent_air < 0.0 {
            return Err(parse(
                line,
                format!("o2_percent_air must be >= 0, got {}", row.o2_percent_air),
            ));
        }
        if row.tan_theta <= 0.0 {
            return Err(CliError::Domain(format!(
                "{shown}, line {line}: tan_theta must be > 0, got {}",
                row.tan_theta
            )));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(parse(1, "no readings".into()));
    }
    Ok(rows)
}

fn by_group(a: &RawRow, b: &RawRow) -> Ordering {
    a.temperature_c
        .total_cmp(&b.temperature_c)
        .then(a.frequency_hz.total_cmp(&b.frequency_hz))
        .then(a.o2_percent_air.total_cmp(&b.o2_percent_air))
}

/// Normalizes every (frequency, temperature) group by its zero-oxygen reading
/// and bundles the curves per temperature, ordered by temperature and frequency.
pub fn normalize(rows: &[RawRow]) -> Result<Vec<CurveBundle>, CliError> {
    let mut sorted = rows.to_vec();
    sorted.sort_by(by_group);
    let mut bundles: Vec<CurveBundle> = Vec::new();
    for group in sorted
        .chunk_by(|a, b| a.temperature_c == b.temperature_c && a.frequency_hz == b.frequency_hz)
    {
        let (hz, t) = (group[0].frequency_hz, group[0].temperature_c);
        let zeros: Vec<_> = group.iter().filter(|r| r.o2_percent_air == 0.0).collect();
        let tan0 = match zeros.as_slice() {
            [] => {
                return Err(CliError::Domain(format!(
                    "no reference for {hz} Hz at {t} °C"
                )));
            }
            [z] => z.tan_theta,
            _ => {
                return Err(CliError::Domain(format!(
                    "more than one zero-oxygen reading for {hz} Hz at {t} °C"
                )));
            }
        };
        if let Some(w) = group
            .windows(2)
            .find(|w| w[0].o2_percent_air == w[1].o2_percent_air)
        {
            return Err(CliError::Domain(format!(
                "duplicate reading at {} % air for {hz} Hz at {t} °C",
                w[0].o2_percent_air
            )));
        }
        let record = CurveRecord {
            frequency_hz: hz,
            o2_percent_air: group.iter().map(|r| r.o2_percent_air).collect(),
            r: group.iter().map(|r| r.tan_theta / tan0).collect(),
        };
        match bundles.last_mut() {
            Some(b) if b.temperature_c == t => b.curves.push(record),
            _ => bundles.push(CurveBundle {
                version: CURVES_FORMAT_VERSION,
                temperature_c: t,
                curves: vec![record],
            }),
        }
    }
    Ok(bundles)
}

/// `curves_45C.json`, `curves_37.5C.json`, …
pub fn bundle_file_name(temperature_c: f64) -> String {
    format!("curves_{temperature_c}C.json")
}

pub fn write_raw(rows: &[RawRow], path: &Path) -> Result<(), CliError> {
    let mut out = RAW_HEADER.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{:.16e}\n",
            r.frequency_hz, r.temperature_c, r.o2_percent_air, r.tan_theta
        ));
    }
    std::fs::write(path, out).map_err(|e| CliError::io(path, e))
}

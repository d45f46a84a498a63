//! Tabular results and their CSV / JSON encodings.
//!
//! Floats are printed with 9 significant digits so that output is byte-stable
//! across runs and platforms for a fixed seed.

use std::fs::File;
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub const SIGNIFICANT_DIGITS: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(crate::Error::Parse(format!("unknown format `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Int(i64),
    Float(f64),
    Bool(bool),
    Str(String),
    /// Missing cell; empty in CSV, `null` in JSON.
    Empty,
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Float(v)
    }
}

impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Int(v)
    }
}

impl From<usize> for Value {
    fn from(v: usize) -> Self {
        Value::Int(v as i64)
    }
}

impl From<bool> for Value {
    fn from(v: bool) -> Self {
        Value::Bool(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Str(v.to_owned())
    }
}

impl From<String> for Value {
    fn from(v: String) -> Self {
        Value::Str(v)
    }
}

impl Value {
    pub fn render(&self) -> String {
        match self {
            Value::Int(i) => i.to_string(),
            Value::Float(x) => format_sig(*x, SIGNIFICANT_DIGITS),
            Value::Bool(b) => b.to_string(),
            Value::Str(s) => s.clone(),
            Value::Empty => String::new(),
        }
    }

    fn to_json(&self) -> serde_json::Value {
        match self {
            Value::Int(i) => serde_json::Value::from(*i),
            // Round-trip through the printed form so CSV and JSON agree exactly.
            Value::Float(x) if x.is_finite() => {
                serde_json::Value::from(format_sig(*x, SIGNIFICANT_DIGITS).parse::<f64>().unwrap())
            }
            Value::Float(x) => serde_json::Value::from(x.to_string()),
            Value::Bool(b) => serde_json::Value::from(*b),
            Value::Str(s) => serde_json::Value::from(s.clone()),
            Value::Empty => serde_json::Value::Null,
        }
    }
}

/// Formats `x` with `digits` significant digits, trimming trailing zeros.
pub fn format_sig(x: f64, digits: usize) -> String {
    if x == 0.0 {
        return "0".to_owned();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let digits = digits.max(1);
    let exponent = x.abs().log10().floor() as i32;
    let s = if (-5..15).contains(&exponent) {
        let decimals = (digits as i32 - 1 - exponent).max(0) as usize;
        let s = format!("{x:.decimals$}");
        // Rounding can carry into a new digit (9.9999999995 -> 10.00000000).
        let reparsed: f64 = s.parse().unwrap();
        let new_exp = reparsed.abs().log10().floor() as i32;
        if new_exp != exponent && reparsed != 0.0 {
            let decimals = (digits as i32 - 1 - new_exp).max(0) as usize;
            format!("{x:.decimals$}")
        } else {
            s
        }
    } else {
        format!("{:.*e}", digits - 1, x)
    };
    trim_zeros(s)
}

fn trim_zeros(s: String) -> String {
    if let Some(epos) = s.find('e') {
        let (mantissa, exp) = s.split_at(epos);
        let mantissa = trim_zeros(mantissa.to_owned());
        return format!("{mantissa}{exp}");
    }
    if s.contains('.') {
        let t = s.trim_end_matches('0').trim_end_matches('.');
        if t == "-0" {
            return "0".to_owned();
        }
        t.to_owned()
    } else {
        s
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new<I, S>(header: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn header(&self) -> &[String] {
        &self.header
    }

    pub fn rows(&self) -> &[Vec<Value>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Appends a row. Panics if the width does not match the header.
    pub fn push(&mut self, row: Vec<Value>) {
        assert_eq!(row.len(), self.header.len(), "row width must match header");
        self.rows.push(row);
    }

    pub fn write_csv<W: Write>(&self, w: W, with_header: bool) -> Result<()> {
        let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        if with_header {
            out.write_record(&self.header)?;
        }
        for row in &self.rows {
            out.write_record(row.iter().map(Value::render))?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf, true).expect("in-memory write");
        String::from_utf8(buf).expect("utf-8 csv")
    }

    pub fn to_json(&self) -> serde_json::Value {
        let rows = self
            .rows
            .iter()
            .map(|row| {
                let obj = self
                    .header
                    .iter()
                    .zip(row)
                    .map(|(k, v)| (k.clone(), v.to_json()))
                    .collect::<serde_json::Map<_, _>>();
                serde_json::Value::Object(obj)
            })
            .collect();
        serde_json::Value::Array(rows)
    }

    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_json()).expect("json encode");
        s.push('\n');
        s
    }

    /// Plain-text rendering with aligned columns.
    pub fn to_text(&self) -> String {
        let rendered: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| r.iter().map(Value::render).collect())
            .collect();
        let widths: Vec<usize> = (0..self.header.len())
            .map(|c| {
                rendered
                    .iter()
                    .map(|r| r[c].len())
                    .chain(std::iter::once(self.header[c].len()))
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let mut out = String::new();
        let line = |cells: &[String], out: &mut String| {
            let parts: Vec<String> = cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:<w$}"))
                .collect();
            out.push_str(parts.join("  ").trim_end());
            out.push('\n');
        };
        line(&self.header, &mut out);
        for r in &rendered {
            line(r, &mut out);
        }
        out
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Csv => self.to_csv_string(),
            Format::Json => self.to_json_string(),
        }
    }
}

/// Writes a table to `path` in the given format, replacing any existing file.
pub fn emit_report(table: &Table, format: Format, path: &Path) -> Result<()> {
    let mut f = File::create(path)?;
    f.write_all(table.render(format).as_bytes())?;
    f.flush()?;
    Ok(())
}

/// Appends CSV rows to `path`, writing the header only when the file is new or empty.
pub fn append_csv(table: &Table, path: &Path) -> Result<()> {
    let needs_header = match std::fs::metadata(path) {
        Ok(m) => m.len() == 0,
        Err(e) if e.kind() == io::ErrorKind::NotFound => true,
        Err(e) => return Err(e.into()),
    };
    let f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)?;
    table.write_csv(f, needs_header)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digit_formatting() {
        assert_eq!(format_sig(0.0, 9), "0");
        assert_eq!(format_sig(22.2027972, 9), "22.2027972");
        assert_eq!(format_sig(1.0 / 3.0, 9), "0.333333333");
        assert_eq!(format_sig(-2.5, 9), "-2.5");
        assert_eq!(format_sig(200.0, 9), "200");
        assert_eq!(format_sig(9.1e-6, 9), "9.1e-6");
        assert_eq!(format_sig(1.5e-5, 9), "0.000015");
        assert_eq!(format_sig(1.23456789012e-9, 9), "1.23456789e-9");
        assert_eq!(format_sig(9.9999999995, 9), "10");
        assert_eq!(format_sig(-1e-300, 9), "-1e-300");
    }

    #[test]
    fn empty_table_is_header_only() {
        let t = Table::new(["a", "b"]);
        assert_eq!(t.to_csv_string(), "a,b\n");
        assert_eq!(t.to_json(), serde_json::json!([]));
    }

    #[test]
    fn csv_and_json_agree() {
        let mut t = Table::new(["x", "n", "ok", "name", "gap"]);
        t.push(vec![
            Value::Float(std::f64::consts::PI),
            Value::Int(3),
            Value::Bool(true),
            "cone".into(),
            Value::Empty,
        ]);
        let csv = t.to_csv_string();
        let json = t.to_json();
        let mut rdr = csv::Reader::from_reader(csv.as_bytes());
        let rec = rdr.records().next().unwrap().unwrap();
        let x: f64 = rec[0].parse().unwrap();
        assert_eq!(json[0]["x"].as_f64().unwrap(), x);
        assert_eq!(json[0]["n"].as_i64().unwrap(), rec[1].parse::<i64>().unwrap());
        assert_eq!(json[0]["gap"], serde_json::Value::Null);
        assert_eq!(&rec[4], "");
    }

    #[test]
    fn append_writes_header_once() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        let mut t = Table::new(["a"]);
        t.push(vec![Value::Int(1)]);
        append_csv(&t, &path).unwrap();
        append_csv(&t, &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "a\n1\n1\n");
    }
}

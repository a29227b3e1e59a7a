use std::io::Write;
use std::path::Path;

use clap::ValueEnum;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

/// A command result: header fields plus a table of flat rows.
///
/// JSON output is the header object with the rows under `"rows"`.
/// CSV output is the rows alone.
#[derive(Debug, Default)]
pub struct Document {
    head: Map<String, Value>,
    rows: Vec<Value>,
}

impl Document {
    pub fn field(mut self, key: &str, value: impl Serialize) -> Result<Self> {
        self.head
            .insert(key.to_string(), serde_json::to_value(value)?);
        Ok(self)
    }

    pub fn rows(mut self, rows: Vec<Value>) -> Self {
        self.rows = rows;
        self
    }

    pub fn to_json(&self) -> Value {
        let mut m = self.head.clone();
        m.insert("rows".into(), Value::Array(self.rows.clone()));
        Value::Object(m)
    }

    /// Columns in first-seen order across all rows.
    pub fn columns(&self) -> Vec<String> {
        let mut cols: Vec<String> = Vec::new();
        for r in &self.rows {
            if let Value::Object(m) = r {
                for k in m.keys() {
                    if !cols.contains(k) {
                        cols.push(k.clone());
                    }
                }
            }
        }
        cols
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let cols = self.columns();
        let mut out = csv::Writer::from_writer(w);
        out.write_record(&cols)?;
        for r in &self.rows {
            out.write_record(cols.iter().map(|c| cell(r.get(c))))?;
        }
        out.flush().map_err(|e| CliError::Io {
            path: "output".into(),
            source: e,
        })?;
        Ok(())
    }

    pub fn write_json<W: Write>(&self, mut w: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut w, &self.to_json())?;
        writeln!(w).map_err(|e| CliError::Io {
            path: "output".into(),
            source: e,
        })
    }

    pub fn write(&self, format: Format, out: Option<&Path>) -> Result<()> {
        match out {
            Some(p) => {
                let file = std::fs::File::create(p).map_err(|source| CliError::Io {
                    path: p.display().to_string(),
                    source,
                })?;
                let f = std::io::BufWriter::new(file);
                match format {
                    Format::Json => self.write_json(f),
                    Format::Csv => self.write_csv(f),
                }
            }
            None => {
                let stdout = std::io::stdout().lock();
                match format {
                    Format::Json => self.write_json(stdout),
                    Format::Csv => self.write_csv(stdout),
                }
            }
        }
    }
}

/// Numbers print exactly as in JSON, so both encodings carry the same digits.
fn cell(v: Option<&Value>) -> String {
    match v {
        None | Some(Value::Null) => String::new(),
        Some(Value::String(s)) => s.clone(),
        Some(Value::Bool(b)) => b.to_string(),
        Some(Value::Number(n)) => n.to_string(),
        Some(other) => other.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn csv_has_header_and_union_of_columns() {
        let d = Document::default().rows(vec![
            json!({"a": 1, "b": 0.1}),
            json!({"a": 2, "c": "x, \"y\""}),
        ]);
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s, "a,b,c\n1,0.1,\n2,,\"x, \"\"y\"\"\"\n");
    }

    #[test]
    fn non_finite_numbers_are_null() {
        let d = Document::default().field("v", f64::INFINITY).unwrap();
        assert_eq!(d.to_json()["v"], Value::Null);
    }

    #[test]
    fn rows_follow_header_fields() {
        let d = Document::default()
            .field("z", 1)
            .unwrap()
            .field("a", 2)
            .unwrap();
        let keys: Vec<_> = d.to_json().as_object().unwrap().keys().cloned().collect();
        assert_eq!(keys, ["z", "a", "rows"]);
    }
}

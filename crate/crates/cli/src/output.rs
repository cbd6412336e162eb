//! Plot-ready result tables and their CSV/JSON encodings.

use serde_json::{Map, Number, Value};

use crate::config::Format;
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Text(String),
}

impl Cell {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Num(v) => Some(*v),
            Cell::Text(_) => None,
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

/// 17 significant digits, enough to recover every `f64` exactly.
pub fn format_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> CliResult<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| CliError::Numerical(format!("CSV encoding failed: {e}"));
        w.write_record(&self.columns).map_err(io)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|c| match c {
                Cell::Num(v) => format_f64(*v),
                Cell::Text(s) => s.clone(),
            }))
            .map_err(io)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| CliError::Numerical(format!("CSV encoding failed: {e}")))?;
        String::from_utf8(bytes).map_err(|e| CliError::Numerical(e.to_string()))
    }

    /// Reads back a table written by [`Table::to_csv`]. Cells that parse as
    /// numbers become [`Cell::Num`].
    pub fn from_csv(text: &str) -> CliResult<Table> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let bad = |e: csv::Error| CliError::BadInput(format!("malformed CSV: {e}"));
        let columns = r.headers().map_err(bad)?.iter().map(String::from).collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(bad)?;
            rows.push(
                rec.iter()
                    .map(|s| match s.parse::<f64>() {
                        Ok(v) => Cell::Num(v),
                        Err(_) => Cell::Text(s.to_string()),
                    })
                    .collect(),
            );
        }
        Ok(Table { columns, rows })
    }

    pub fn to_json(&self) -> CliResult<String> {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|row| {
                let mut obj = Map::new();
                for (name, cell) in self.columns.iter().zip(row) {
                    let v = match cell {
                        Cell::Num(v) => Number::from_f64(*v).map(Value::Number).unwrap_or(Value::Null),
                        Cell::Text(s) => Value::String(s.clone()),
                    };
                    obj.insert(name.clone(), v);
                }
                Value::Object(obj)
            })
            .collect();
        let mut s = serde_json::to_string_pretty(&rows)
            .map_err(|e| CliError::Numerical(format!("JSON encoding failed: {e}")))?;
        s.push('\n');
        Ok(s)
    }

    pub fn render(&self, format: Format) -> CliResult<String> {
        match format {
            Format::Csv => self.to_csv(),
            Format::Json => self.to_json(),
        }
    }
}

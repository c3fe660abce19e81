//! Table emission in CSV and JSON.

use std::fmt::Write as _;

use serde_json::{json, Value};

use super::config::{Format, RunConfig};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
    Empty,
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::Float)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

/// Shortest decimal string that parses back to the same `f64`.
pub fn format_float(v: f64) -> String {
    if v == 0.0 {
        // drop the sign of negative zero
        return "0.0".into();
    }
    format!("{v:?}")
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => format_float(*v),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Int(v) => json!(v),
            Cell::Float(v) if v.is_finite() => json!(if *v == 0.0 { 0.0 } else { *v }),
            Cell::Float(v) => json!(format_float(*v)),
            Cell::Text(s) => json!(s),
            Cell::Empty => Value::Null,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: Vec<String>) -> Self {
        Self { columns, rows: Vec::new() }
    }

    pub fn render(&self, cfg: &RunConfig) -> String {
        match cfg.format {
            Format::Csv => self.csv(cfg),
            Format::Json => self.json(cfg),
        }
    }

    fn csv(&self, cfg: &RunConfig) -> String {
        let mut out = String::new();
        writeln!(out, "# gaucoll {} config={}", env!("CARGO_PKG_VERSION"), cfg.canonical_json()).unwrap();
        writeln!(out, "{}", self.columns.join(",")).unwrap();
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::csv).collect();
            writeln!(out, "{}", cells.join(",")).unwrap();
        }
        out
    }

    fn json(&self, cfg: &RunConfig) -> String {
        let config: Value = serde_json::from_str(&cfg.canonical_json()).expect("canonical config is JSON");
        let rows: Vec<Value> = self.rows.iter().map(|r| Value::Array(r.iter().map(Cell::json).collect())).collect();
        let doc = json!({
            "gaucoll": env!("CARGO_PKG_VERSION"),
            "config": config,
            "columns": self.columns,
            "rows": rows,
        });
        let mut s = serde_json::to_string_pretty(&doc).expect("table serializes");
        s.push('\n');
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for v in [0.1, 1.0 / 3.0, 1e-300, 6.02e23, -2.5, 1e-7, 123456789.125] {
            assert_eq!(format_float(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(format_float(0.1), "0.1");
        assert_eq!(format_float(-0.0), "0.0");
    }

    #[test]
    fn csv_layout() {
        let cfg = super::super::config::PartialConfig::default().resolve("evolve", None).unwrap();
        let mut t = Table::new(vec!["n".into(), "v".into(), "flag".into()]);
        t.rows.push(vec![Cell::from(3usize), Cell::from(0.25), Cell::Empty]);
        let text = t.render(&cfg);
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("# gaucoll "));
        assert!(lines[0].contains("\"command\":\"evolve\""));
        assert_eq!(&lines[1..], &["n,v,flag", "3,0.25,"]);
    }
}

//! Plot-ready tables. CSV opens with a versioned schema comment and a
//! header row; JSON carries the schema, the full config echo, the
//! column names and the rows. Rows that failed numerically keep their
//! coordinate cells, flag `status = error` and explain themselves in
//! the trailing note column instead of aborting the run.

use serde::Serialize;
use serde_json::Value;

use crate::config::RunConfig;

#[derive(Debug, Clone)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Text(String),
    Bool(bool),
    Empty,
}

impl From<f64> for Cell {
    fn from(v: f64) -> Cell {
        Cell::Num(v)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Cell {
        Cell::Int(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Cell {
        Cell::Text(v.to_owned())
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Cell {
        Cell::Bool(v)
    }
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            // exponent form round-trips and keeps tiny covariances
            // readable
            Cell::Num(v) => format!("{v:e}"),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.replace([',', '\n', '\r'], ";"),
            Cell::Bool(b) => b.to_string(),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Num(v) => serde_json::Number::from_f64(*v).map_or(Value::Null, Value::Number),
            Cell::Int(v) => Value::from(*v),
            Cell::Text(s) => Value::from(s.as_str()),
            Cell::Bool(b) => Value::from(*b),
            Cell::Empty => Value::Null,
        }
    }
}

/// Column layout convention: the last two columns are always
/// `status` and `note`.
#[derive(Debug)]
pub struct Table {
    pub schema: &'static str,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
    pub failed_rows: usize,
}

impl Table {
    pub fn new(schema: &'static str, mut columns: Vec<&'static str>) -> Table {
        columns.push("status");
        columns.push("note");
        Table {
            schema,
            columns,
            rows: Vec::new(),
            failed_rows: 0,
        }
    }

    pub fn push_ok(&mut self, mut cells: Vec<Cell>) {
        assert_eq!(cells.len() + 2, self.columns.len());
        cells.push(Cell::Text("ok".into()));
        cells.push(Cell::Empty);
        self.rows.push(cells);
    }

    /// Keeps the leading coordinate cells, blanks the rest.
    pub fn push_failed(&mut self, mut coords: Vec<Cell>, error: impl std::fmt::Display) {
        while coords.len() + 2 < self.columns.len() {
            coords.push(Cell::Empty);
        }
        coords.push(Cell::Text("error".into()));
        coords.push(Cell::Text(error.to_string()));
        self.rows.push(coords);
        self.failed_rows += 1;
    }

    pub fn to_csv(&self) -> Vec<u8> {
        let mut out = String::new();
        out.push_str(&format!("# {}\n", self.schema));
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            let line: Vec<String> = row.iter().map(Cell::csv).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out.into_bytes()
    }

    pub fn to_json(&self, config: &RunConfig) -> Vec<u8> {
        #[derive(Serialize)]
        struct Doc<'a> {
            schema: &'a str,
            config: &'a RunConfig,
            columns: &'a [&'a str],
            rows: Vec<Vec<Value>>,
        }
        let doc = Doc {
            schema: self.schema,
            config,
            columns: &self.columns,
            rows: self
                .rows
                .iter()
                .map(|r| r.iter().map(Cell::json).collect())
                .collect(),
        };
        let mut bytes = serde_json::to_vec_pretty(&doc).expect("table serialization is infallible");
        bytes.push(b'\n');
        bytes
    }
}

/// A JSON document around a payload that is not tabular (the axiom
/// report, raw fields).
pub fn json_document<T: Serialize>(
    schema: &str,
    config: &RunConfig,
    key: &str,
    payload: &T,
) -> Vec<u8> {
    // hand-rolled envelope so the key order stays fixed without a
    // preserve-order map type
    let mut bytes = Vec::new();
    bytes.extend_from_slice(b"{\n  \"schema\": ");
    bytes.extend_from_slice(serde_json::to_string(schema).unwrap().as_bytes());
    bytes.extend_from_slice(b",\n  \"config\": ");
    bytes.extend_from_slice(serde_json::to_string(config).unwrap().as_bytes());
    bytes.extend_from_slice(b",\n  \"");
    bytes.extend_from_slice(key.as_bytes());
    bytes.extend_from_slice(b"\": ");
    bytes.extend_from_slice(
        serde_json::to_string_pretty(payload)
            .expect("payload serialization is infallible")
            .as_bytes(),
    );
    bytes.extend_from_slice(b"\n}\n");
    bytes
}

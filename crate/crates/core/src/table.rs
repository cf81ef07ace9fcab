//! Plain tabular output in CSV, aligned markdown or JSON lines.

use serde_json::{Map, Value};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputFormat {
    #[default]
    Csv,
    Markdown,
    JsonLines,
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "markdown" | "md" => Ok(OutputFormat::Markdown),
            "json-lines" | "jsonl" => Ok(OutputFormat::JsonLines),
            other => Err(Error::Config(format!(
                "unknown format `{other}` (expected csv, markdown or json-lines)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

fn text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

/// Float cell with a fixed number of decimals, so output is stable.
pub fn fixed(x: f64, decimals: usize) -> Value {
    Value::String(format!("{x:.decimals$}"))
}

impl Table {
    pub fn new<S: Into<String>>(headers: impl IntoIterator<Item = S>) -> Self {
        Table {
            headers: headers.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.headers.len());
        self.rows.push(row);
    }

    pub fn render(&self, format: OutputFormat) -> String {
        match format {
            OutputFormat::Csv => self.csv(),
            OutputFormat::Markdown => self.markdown(),
            OutputFormat::JsonLines => self.json_lines(),
        }
    }

    fn csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(vec![]);
        w.write_record(&self.headers).expect("writing to memory");
        for r in &self.rows {
            w.write_record(r.iter().map(text)).expect("writing to memory");
        }
        String::from_utf8(w.into_inner().expect("flush to memory")).expect("utf-8 cells")
    }

    fn markdown(&self) -> String {
        let cells: Vec<Vec<String>> = self.rows.iter().map(|r| r.iter().map(text).collect()).collect();
        let mut widths: Vec<usize> = self.headers.iter().map(|h| h.chars().count().max(3)).collect();
        for r in &cells {
            for (w, c) in widths.iter_mut().zip(r) {
                *w = (*w).max(c.chars().count());
            }
        }
        let numeric: Vec<bool> = (0..self.headers.len())
            .map(|j| !self.rows.is_empty() && self.rows.iter().all(|r| is_numeric(&r[j])))
            .collect();
        let line = |row: &[String]| {
            let mut s = String::from("|");
            for (j, c) in row.iter().enumerate() {
                let pad = widths[j] - c.chars().count();
                if numeric[j] {
                    s += &format!(" {}{} |", " ".repeat(pad), c);
                } else {
                    s += &format!(" {}{} |", c, " ".repeat(pad));
                }
            }
            s + "\n"
        };
        let mut out = line(&self.headers);
        out += "|";
        for (j, w) in widths.iter().enumerate() {
            if numeric[j] {
                out += &format!(" {}: |", "-".repeat(w - 1));
            } else {
                out += &format!(" {} |", "-".repeat(*w));
            }
        }
        out += "\n";
        for r in &cells {
            out += &line(r);
        }
        out
    }

    fn json_lines(&self) -> String {
        let mut out = String::new();
        for r in &self.rows {
            let obj: Map<String, Value> = self.headers.iter().cloned().zip(r.iter().cloned()).collect();
            out += &Value::Object(obj).to_string();
            out.push('\n');
        }
        out
    }
}

fn is_numeric(v: &Value) -> bool {
    match v {
        Value::Number(_) => true,
        Value::String(s) => s.parse::<f64>().is_ok(),
        _ => false,
    }
}

//! Plain-text artifacts: commented CSV tables and `key = value` summaries.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use crate::config::fmt_f64;

/// A CSV table whose leading `#` lines document the run and its columns.
pub struct Table {
    comments: Vec<String>,
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            comments: Vec::new(),
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn comment(&mut self, line: impl Into<String>) -> &mut Self {
        self.comments.push(line.into());
        self
    }

    /// Adds the resolved configuration as comment lines. The output
    /// directory is left out so that tables do not depend on where they
    /// were written.
    pub fn config(&mut self, text: &str) -> &mut Self {
        for line in text
            .lines()
            .filter(|l| !l.is_empty() && !l.starts_with("output ="))
        {
            self.comments.push(format!("config: {line}"));
        }
        self
    }

    pub fn columns(&self) -> &[String] {
        &self.header
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.header.len(), "row width");
        self.rows.push(row.into_iter().map(|c| c.render()).collect());
    }

    pub fn write(&self, path: &Path) -> io::Result<()> {
        let mut file = BufWriter::new(File::create(path)?);
        for c in &self.comments {
            writeln!(file, "# {c}")?;
        }
        let mut csv = csv::Writer::from_writer(file);
        csv.write_record(&self.header)?;
        for row in &self.rows {
            csv.write_record(row)?;
        }
        csv.flush()
    }
}

pub enum Cell {
    Num(f64),
    Int(u64),
    Text(String),
}

impl Cell {
    fn render(self) -> String {
        match self {
            Cell::Num(x) => fmt_f64(x),
            Cell::Int(n) => n.to_string(),
            Cell::Text(s) => s,
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<usize> for Cell {
    fn from(n: usize) -> Self {
        Cell::Int(n as u64)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

/// Ordered `key = value` report.
#[derive(Default)]
pub struct Summary {
    lines: Vec<(String, String)>,
}

impl Summary {
    pub fn num(&mut self, key: impl Into<String>, x: f64) -> &mut Self {
        self.lines.push((key.into(), fmt_f64(x)));
        self
    }

    pub fn text(&mut self, key: impl Into<String>, value: impl ToString) -> &mut Self {
        self.lines.push((key.into(), value.to_string()));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.lines
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn render(&self) -> String {
        self.lines
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn write(&self, path: &Path) -> io::Result<()> {
        std::fs::write(path, self.render())
    }
}

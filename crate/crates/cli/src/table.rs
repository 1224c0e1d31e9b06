use std::io::Write;
use std::path::Path;

use crate::Failure;

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Int(usize),
    Float(f64),
    Text(String),
    Empty,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            // 17 significant digits: parses back to the same double.
            Cell::Float(v) => format!("{v:.16e}"),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
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

/// A CSV table whose columns can be dropped before writing.
#[derive(Debug, Default)]
pub struct Table {
    header: Vec<&'static str>,
    rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(header: Vec<&'static str>) -> Self {
        Self { header, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.header.len(), "row width");
        self.rows.push(row);
    }

    pub fn drop_columns(&mut self, names: &[&str]) {
        let keep: Vec<bool> = self.header.iter().map(|h| !names.contains(h)).collect();
        let filter = |v: &mut Vec<_>| {
            let mut it = keep.iter();
            v.retain(|_| *it.next().unwrap());
        };
        filter(&mut self.header);
        for row in &mut self.rows {
            let mut it = keep.iter();
            row.retain(|_| *it.next().unwrap());
        }
    }

    pub fn write_to<W: Write>(&self, w: W) -> Result<(), Failure> {
        let io = |e: csv::Error| Failure::Io(e.to_string());
        let mut out = csv::Writer::from_writer(w);
        out.write_record(&self.header).map_err(io)?;
        for row in &self.rows {
            out.write_record(row.iter().map(Cell::render)).map_err(io)?;
        }
        out.flush().map_err(|e| Failure::Io(e.to_string()))
    }

    pub fn write(&self, path: Option<&Path>) -> Result<(), Failure> {
        match path {
            Some(p) => {
                let f = std::fs::File::create(p).map_err(|e| Failure::Io(format!("{}: {e}", p.display())))?;
                self.write_to(f)
            }
            None => self.write_to(std::io::stdout().lock()),
        }
    }
}

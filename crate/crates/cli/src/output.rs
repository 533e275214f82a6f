//! CSV/JSON emission. CSV floats use 17 significant digits so that every
//! value parses back to the same `f64`.

use std::fmt::Write as _;

use serde::Serialize;

pub enum Cell {
    F(f64),
    OptF(Option<f64>),
    U(u64),
    OptU(Option<u64>),
    S(String),
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::F(x)
    }
}

impl From<Option<f64>> for Cell {
    fn from(x: Option<f64>) -> Self {
        Cell::OptF(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::U(x as u64)
    }
}

impl From<u64> for Cell {
    fn from(x: u64) -> Self {
        Cell::U(x)
    }
}

impl From<Option<usize>> for Cell {
    fn from(x: Option<usize>) -> Self {
        Cell::OptU(x.map(|v| v as u64))
    }
}

impl From<String> for Cell {
    fn from(x: String) -> Self {
        Cell::S(x)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::S(x.to_string())
    }
}

pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn render(cell: &Cell) -> String {
    match cell {
        Cell::F(x) => format_float(*x),
        Cell::OptF(Some(x)) => format_float(*x),
        Cell::OptF(None) => String::new(),
        Cell::U(x) => x.to_string(),
        Cell::OptU(Some(x)) => x.to_string(),
        Cell::OptU(None) => String::new(),
        Cell::S(s) if s.contains([',', '"', '\n']) => format!("\"{}\"", s.replace('"', "\"\"")),
        Cell::S(s) => s.clone(),
    }
}

pub struct Table {
    header: Vec<&'static str>,
    rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Table { header: header.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(render).collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

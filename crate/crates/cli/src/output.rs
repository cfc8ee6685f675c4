//! Tabular output: aligned text for people, delimited rows for plotting.

use std::fmt::Write as _;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Table,
    Csv,
    Tsv,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "table" => Ok(Format::Table),
            "csv" => Ok(Format::Csv),
            "tsv" => Ok(Format::Tsv),
            other => Err(format!("unknown format '{other}' (expected table, csv or tsv)")),
        }
    }
}

impl Format {
    /// Delimiter used when writing rows to a file; tables become CSV there.
    pub fn file_delimiter(self) -> char {
        match self {
            Format::Tsv => '\t',
            _ => ',',
        }
    }
}

pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Table => self.aligned(),
            Format::Csv => self.delimited(','),
            Format::Tsv => self.delimited('\t'),
        }
    }

    pub fn delimited(&self, sep: char) -> String {
        let mut out = String::new();
        for row in std::iter::once(&self.header).chain(&self.rows) {
            let line: Vec<&str> = row.iter().map(String::as_str).collect();
            out.push_str(&line.join(&sep.to_string()));
            out.push('\n');
        }
        out
    }

    fn aligned(&self) -> String {
        let mut widths: Vec<usize> = self.header.iter().map(String::len).collect();
        for row in &self.rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.len());
            }
        }
        let mut out = String::new();
        for row in std::iter::once(&self.header).chain(&self.rows) {
            for (i, (cell, w)) in row.iter().zip(&widths).enumerate() {
                if i > 0 {
                    out.push_str("  ");
                }
                let _ = write!(out, "{cell:>w$}");
            }
            out.push('\n');
        }
        out
    }
}

/// `# key: value` lines, so delimited output stays parseable after
/// skipping comments.
pub fn config_echo(pairs: &[(&str, String)]) -> String {
    let width = pairs.iter().map(|p| p.0.len()).max().unwrap_or(0);
    pairs.iter().map(|(k, v)| format!("# {k:<width$}  {v}\n")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_all_formats() {
        let mut t = Table::new(&["l", "recall"]);
        t.push(vec!["10".into(), "0.5".into()]);
        assert_eq!(t.render(Format::Csv), "l,recall\n10,0.5\n");
        assert_eq!(t.render(Format::Tsv), "l\trecall\n10\t0.5\n");
        assert_eq!(t.render(Format::Table), " l  recall\n10     0.5\n");
    }
}
